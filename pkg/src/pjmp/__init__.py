"""Finite-state analysis of a pure-jump network of spiking neurons.

The package enumerates the reachable potentials of a small network, builds
its generator, evaluates transition probabilities exactly by uniformization,
computes the constants entering semigroup Poincare-type bounds and checks
those bounds on concrete observables, with a Monte-Carlo simulator as an
independent cross-check.
"""

from .errors import PJMPError
from .model import NeuronModel, IntensitySpec, validate_model, apply_jump, generator_apply, carre_du_champ
from .statespace import StateSpace, enumerate_reachable, recurrent_class, build_rate_matrix
from .engine import (
    transition_probabilities,
    semigroup_apply,
    semigroup_time_integral,
    variance_semigroup,
    invariant_measure,
    spectral_gap,
    optimal_poincare_constant,
)
from .constants import compute_constants, ConstantsReport
from .verify import Certifier, InequalityReport, random_observable_sweep
from .montecarlo import sample_path, estimate_expectation, estimate_variance, Estimate, PathSample
from .config import RunConfig, load_config

__version__ = "0.1.0"
