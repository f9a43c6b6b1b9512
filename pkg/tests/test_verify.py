import json
import math

import numpy as np
import pytest

from pjmp.errors import NotInRecurrentDomain
from pjmp.verify import (
    Certifier,
    InequalityReport,
    observable_family,
    passes,
    random_observable_sweep,
    reports_to_csv,
    simpson,
)

from conftest import affine_model


def test_pass_rule_is_relative():
    assert passes(1.0 + 0.5e-9, 1.0)
    assert not passes(1.0 + 2e-9, 1.0)
    assert passes(1e6 + 0.5e-3, 1e6)
    assert not passes(1e6 + 2e-3, 1e6)


def test_simpson_is_exact_on_cubics():
    x = np.linspace(0, 2, 5)
    assert simpson(x**3, 0.5) == pytest.approx(4.0, abs=1e-14)


class TestGeneralBound:
    def test_constant_observable(self, pair):
        rep = pair.check_theorem_general(np.full(5, 1.5), 0, 1.0)
        assert rep.lhs == pytest.approx(0.0, abs=1e-14)
        assert rep.rhs == 0.0
        assert rep.passed

    def test_two_state_closed_form(self, single):
        # phi = 1, f(y) = y, start at 1: X_t = 1 with probability e^{-t}, else 0
        f = single.space.states[:, 0]
        t = 1.0
        q = math.exp(-t)
        c = single.constants.coefficients("empirical")
        rep = single.check_theorem_general(f, 0, t, "empirical")
        assert rep.lhs == pytest.approx(q * (1 - q), rel=1e-12)
        # Gamma(f)(1) = 1/2, Gamma(f)(0) = 0, so int_0^t P_s Gamma(1) ds = (1 - e^{-t})/2
        assert rep.rhs_terms["alpha*int_Gamma"] == pytest.approx(c.alpha(t) * (1 - q) / 2, rel=1e-12)
        assert rep.rhs_terms["beta*sum_neighbour_int_Gamma"] == 0.0
        assert rep.passed and rep.margin > 0

    def test_paper_variant_dominates(self, pair, rng):
        f = rng.standard_normal(5)
        for t in (0.1, 1.0, 5.0):
            for x in range(5):
                emp = pair.check_theorem_general(f, x, t, "empirical")
                pap = pair.check_theorem_general(f, x, t, "paper")
                assert pap.rhs >= emp.rhs
                assert emp.lhs == pap.lhs

    def test_random_instances(self, pair, rng):
        for _ in range(200):
            f = rng.standard_normal(5)
            x = int(rng.integers(5))
            t = float(rng.uniform(0.01, 10))
            assert pair.check_theorem_general(f, x, t, "empirical").passed


class TestRecurrentBound:
    def test_transient_start_refused(self, pair):
        with pytest.raises(NotInRecurrentDomain):
            pair.check_theorem_recurrent(np.ones(5), 0, 10.0)

    def test_time_must_exceed_t1(self, pair):
        with pytest.raises(ValueError):
            pair.check_theorem_recurrent(np.ones(5), 1, pair.constants.t1)

    def test_constant_observable(self, pair):
        assert pair.check_theorem_recurrent(np.ones(5), 1, 2 * pair.constants.t1).passed

    @pytest.mark.parametrize("factor", [1.1, 2.0, 5.0])
    def test_coordinates(self, triple, factor):
        t = factor * triple.constants.t1
        for x in np.flatnonzero(triple.space.recurrent_mask):
            for j in range(3):
                f = triple.space.states[:, j]
                assert triple.check_theorem_recurrent(f, int(x), t).passed


class TestCorollaries:
    def test_constant_observable_is_skipped(self, pair):
        a, b = pair.check_corollaries(np.ones(5), 1, 2.0)
        assert a.status == "skipped" and b.status == "skipped"
        assert a.passed and b.passed

    def test_small_time_is_skipped_never_failed(self, pair, rng):
        f = rng.standard_normal(5)
        a, b = pair.check_corollaries(f, 1, 1e-3)
        assert b.status == "skipped"
        assert a.status in ("skipped", "pass")

    def test_condition_met_passes(self, pair, rng):
        met = 0
        for _ in range(50):
            f = rng.standard_normal(5)
            for t in (0.5, 2.0, 10.0):
                for rep in pair.check_corollaries(f, 1, t):
                    assert rep.status != "fail"
                    met += rep.status == "pass"
        assert met > 0


class TestInvariantPoincare:
    def test_constant(self, pair):
        rep = pair.check_invariant_poincare(np.ones(5))
        assert rep.lhs == pytest.approx(0.0, abs=1e-15) and rep.passed

    def test_point_mass(self, single, rng):
        for _ in range(10):
            rep = single.check_invariant_poincare(rng.standard_normal(2))
            assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.passed

    def test_eigenfunction_attains_optimal_ratio(self, triple):
        from pjmp.engine import spectral_gap

        _, v = spectral_gap(triple.Q, triple.pi)
        rep = triple.check_invariant_poincare(v)
        energy = rep.rhs / triple.constants.C0
        assert rep.lhs / energy == pytest.approx(triple.constants.optimal_poincare, rel=1e-6)
        assert "looseness" in rep.notes


class TestIdentities:
    def test_dynkin_at_zero(self, pair, rng):
        f = rng.standard_normal(5)
        assert np.abs(pair.dynkin_residual(f, 0.0)).max() == 0.0

    def test_bundle(self, triple, rng):
        f = rng.standard_normal(triple.space.n_states)
        reps = triple.check_identities(f, 3, 2.0)
        names = {r.name for r in reps}
        assert {"dynkin", "variance_representation", "ratio_sum_bound", "transition_lower_bound",
                "expectation_gap_bound"} <= names
        assert all(r.passed for r in reps), [r.to_dict() for r in reps if not r.passed]

    def test_variance_representation(self, pair, rng):
        F = rng.standard_normal((5, 50))
        for t in (0.3, 2.0):
            quad, var = pair.variance_representation(F, t)
            assert np.abs(quad - var).max() <= 1e-7


class TestSweep:
    def test_empty(self, pair):
        s = random_observable_sweep(pair, 0, seed=1)
        assert s.n_observables == 0 and s.counts == {} and s.all_passed

    def test_deterministic_and_passing(self, pair):
        a = random_observable_sweep(pair, 10, seed=3, workers=1)
        b = random_observable_sweep(pair, 10, seed=3, workers=4)
        assert json.dumps(a.to_dict(True), sort_keys=True) == json.dumps(b.to_dict(True), sort_keys=True)
        assert a.all_passed
        assert all(r["passed"] for r in a.recheck.values())

    def test_family_contents(self, pair):
        ids, F = observable_family(pair, 3, seed=0)
        assert ids[:2] == ["coordinate[0]", "coordinate[1]"]
        assert "eigenfunction" in ids
        assert F.shape == (5, len(ids))

    def test_csv_rows(self, pair):
        s = random_observable_sweep(pair, 1, seed=0, times=[1.0], checks=("theorem_general",), recheck=False)
        text = reports_to_csv(s.reports)
        lines = text.strip().splitlines()
        assert lines[0].startswith("name,variant,f,x,t")
        assert len(lines) == 1 + len(s.reports)


def test_report_serialization():
    rep = InequalityReport("x", {"t": 1.0}, 1.0, {"a": 2.0}, "paper", 1.0, "pass")
    d = rep.to_dict()
    assert d["pass"] is True and d["rhs"] == 2.0


def test_tight_tolerance_copy_keeps_constants(pair):
    tight = pair.with_tolerance(1e-13)
    assert tight.constants is pair.constants
    assert np.abs(tight.P(1.0) - pair.P(1.0)).max() < 1e-11


def test_transient_start_general_bound(triple, rng):
    f = rng.standard_normal(triple.space.n_states)
    for t in (0.05, 0.5, 5.0):
        assert triple.check_theorem_general(f, 0, t).passed


def test_build_from_model():
    cert = Certifier.build(affine_model([[0, 0.5], [0.5, 0]]), [0, 0])
    assert cert.space.n_states == 5
