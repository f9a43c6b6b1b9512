"""
Where the constants come from
=============================

Each constant is reported twice: the constructive value built from the model
parameters, and an empirical value measured on the reachable states.  This
script prints both for the bundled networks and shows how loose the
constructive ones are.  Run with ``python3 demos/constants_tour.py``.
"""

from pjmp import Certifier, load_config

for name in ("single_neuron", "pair_symmetric", "triple_chain"):
    cfg = load_config(name)
    cert = Certifier.build(cfg.network, cfg.initial_state)
    c = cert.constants
    print(f"\n{name}: {cert.space.n_states} states, delta = {c.delta:g}")
    print(f"  t0* = {c.t0_star:.4f}   t1 = {c.t1:.4f}   theta = {c.theta:.4g}")
    for label in ("M", "C1", "C2", "M_D"):
        pair = getattr(c, label)
        print(f"  {label:>3}: constructive {pair.paper:12.5g}   empirical {pair.empirical:10.5g}")
    if c.optimal_poincare is not None:
        print(f"  C0 = {c.C0:.5g}, optimal Poincare constant {c.optimal_poincare:.5g}")

###############################################################################
# The time-dependent prefactors multiply these constants.  At small t the
# general bound is driven by alpha(t), at large t by the recurrent gamma(t).
cfg = load_config("pair_symmetric")
cert = Certifier.build(cfg.network, cfg.initial_state)
for variant in ("empirical", "paper"):
    co = cert.constants.coefficients(variant)
    print(f"\n{variant}: beta = {co.beta:.4g}")
    for t in (0.1, 1.0, 10.0):
        print(f"  alpha({t}) = {co.alpha(t):.4g}")
