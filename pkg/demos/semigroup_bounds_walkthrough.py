"""
Local Poincare bounds on a two-neuron network
=============================================

A walk through the exact engine: build the network, enumerate the states it
can reach, propagate the semigroup and compare variances with the bounds.
Run with ``python3 demos/semigroup_bounds_walkthrough.py``.
"""

import numpy as np

from pjmp import Certifier, load_config

###############################################################################
# The bundled ``pair_symmetric`` network has two neurons wired to each other.
# Every spike resets the spiking neuron and pushes the other one up, clipped
# at the ceiling ``m``.
cfg = load_config("pair_symmetric")
cert = Certifier.build(cfg.network, cfg.initial_state)
space = cert.space
print("states reachable from", cfg.initial_state)
for u, x in enumerate(space.states):
    tag = "recurrent" if space.recurrent_mask[u] else "transient"
    print(f"  {u}: {x}  total rate {space.total_rates[u]:.3f}  ({tag})")

###############################################################################
# The transition matrix at time t is computed by uniformization.  Rows sum to
# one and the start state is forgotten as t grows.
x = space.index(cfg.initial_state)
for t in (0.1, 1.0, 10.0):
    print(f"P_{t}(x, .) =", np.round(cert.P(t)[x], 4))
print("pi          =", np.round(cert.pi, 4))

###############################################################################
# Take the potential of the first neuron as observable and watch its variance
# next to the two bounds: the general one (valid from any state) and the one
# restricted to the recurrent class, which needs t > t1.
f = space.states[:, 0]
c = cert.constants
print(f"\nt0* = {c.t0_star:.4f}, t1 = {c.t1:.4f}, C0 = {c.C0:.4g}")
print(f"{'t':>6} {'Var':>10} {'general bound':>14}")
for t in (0.05, 0.25, 1.0, 5.0):
    rep = cert.check_theorem_general(f, x, t)
    print(f"{t:6.2f} {rep.lhs:10.5f} {rep.rhs:14.5f}")

rec = int(np.flatnonzero(space.recurrent_mask)[0])
for factor in (1.1, 2.0, 5.0):
    rep = cert.check_theorem_recurrent(f, rec, factor * c.t1)
    print(f"recurrent bound at {factor} t1: Var {rep.lhs:.5f} <= {rep.rhs:.5f}")

###############################################################################
# At equilibrium the best constant is the inverse spectral gap; the
# constructive constant C0 is far more conservative.
rep = cert.check_invariant_poincare(f)
print(f"\nVar_pi(f) = {rep.lhs:.5f} <= C0 pi(Gamma) = {rep.rhs:.5f}")
print(f"optimal constant {c.optimal_poincare:.4f} against C0 = {c.C0:.4g}")
