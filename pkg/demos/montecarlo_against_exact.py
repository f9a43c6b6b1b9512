"""
Simulation against the exact semigroup
======================================

Paths are simulated with the Gillespie algorithm and the empirical mean and
variance of an observable are compared with the values from the exact
engine.  Run with ``python3 demos/montecarlo_against_exact.py``.
"""

import numpy as np

from pjmp import Certifier, load_config
from pjmp.montecarlo import (
    chi_square_fit,
    expectation_from_counts,
    sample_endpoints,
    sample_path,
    stream,
    variance_from_counts,
)

cfg = load_config("triple_chain")
cert = Certifier.build(cfg.network, cfg.initial_state)
space = cert.space
x = space.index(cfg.initial_state)

###############################################################################
# A single trajectory, kept in exact arithmetic.
path = sample_path(cfg.network, cfg.initial_state, 3.0, stream(seed=1))
print(f"{path.n_jumps} spikes before t = 3")
for t, i, state in list(zip(path.jump_times, path.spiking_neuron, path.states))[:6]:
    print(f"  t = {t:.3f}: neuron {i} spikes -> {tuple(str(v) for v in state)}")

###############################################################################
# Many paths at once.  Only the end state matters for the estimators, so the
# simulator returns how many paths ended in each state.
f = space.states.sum(axis=1)  # total potential
for t in (0.5, 2.0):
    counts = sample_endpoints(space, x, t, n_paths=100_000, seed=7)
    mean = expectation_from_counts(counts, f)
    var = variance_from_counts(counts, f)
    exact_mean = cert.P(t)[x] @ f
    exact_var = cert.variance(f, t)[x]
    stat, p, bins = chi_square_fit(counts, cert.P(t)[x])
    print(f"\nt = {t}")
    print(f"  mean     {mean.mean:.5f} +- {mean.std_error:.5f}   exact {exact_mean:.5f}")
    print(f"  variance {var.mean:.5f} +- {var.std_error:.5f}   exact {exact_var:.5f}")
    print(f"  chi-square over {bins} bins: p = {p:.3f}")

###############################################################################
# The counts do not depend on how many threads ran the blocks.
a = sample_endpoints(space, x, 2.0, 50_000, seed=3, workers=1)
b = sample_endpoints(space, x, 2.0, 50_000, seed=3, workers=8)
print("\nidentical counts with 1 and 8 workers:", bool(np.array_equal(a, b)))
