import math

import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from pjmp.engine import (
    Uniformizer,
    carre_du_champ_values,
    gth_stationary,
    invariant_measure,
    no_jump_probability,
    one_jump_probabilities,
    one_jump_probability,
    optimal_poincare_constant,
    peak_time_t0,
    peak_times,
    semigroup_apply,
    semigroup_time_integral,
    spectral_gap,
    transition_probabilities,
    variance_invariant,
    variance_semigroup,
)
from pjmp.errors import MultipleClosedClasses, NonFiniteTime
from pjmp.statespace import build_rate_matrix

from conftest import affine_model, dense_Q, reachable


@st.composite
def generators(draw, irreducible=False):
    n = draw(st.integers(2, 7))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    Q = rng.exponential(1.0, (n, n)) * (rng.random((n, n)) < 0.6)
    if irreducible:
        Q += np.roll(np.eye(n), 1, axis=1) * 0.5
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def gamma_general(Q, f):
    d = f[None, :] - f[:, None]
    off = Q - np.diag(np.diag(Q))
    return 0.5 * (off * d * d).sum(axis=1)


class TestTransitionProbabilities:
    @settings(max_examples=60, deadline=None)
    @given(generators(), st.floats(0, 5))
    def test_matches_expm(self, Q, t):
        P = transition_probabilities(Q, t)
        np.testing.assert_allclose(P, la.expm(t * Q), atol=1e-11)

    def test_identity_at_zero(self, pair):
        np.testing.assert_array_equal(transition_probabilities(pair.Q, 0.0), np.eye(5))

    def test_single_neuron_closed_form(self, single):
        for t in (0.1, 1.0, 3.0):
            row = transition_probabilities(single.Q, t, start=0)
            np.testing.assert_allclose(row, [math.exp(-t), 1 - math.exp(-t)], atol=1e-13)

    def test_chapman_kolmogorov(self, triple):
        U = triple.U
        for s in (0.1, 0.7, 2.0):
            for t in (0.3, 1.5):
                err = np.abs(U.matrix(s + t) - U.matrix(s) @ U.matrix(t)).max()
                assert err <= 1e-8

    def test_rejects_bad_time(self, pair):
        with pytest.raises(NonFiniteTime):
            transition_probabilities(pair.Q, math.inf)
        with pytest.raises(NonFiniteTime):
            transition_probabilities(pair.Q, -1.0)

    def test_sparse_path_agrees_with_dense(self, triple, monkeypatch):
        import pjmp.engine as eng

        dense = Uniformizer(triple.Q, rate=6.0).matrix(0.8)
        monkeypatch.setattr(eng, "DENSE_LIMIT", 1)
        sparse = Uniformizer(triple.Q, rate=6.0)
        assert not isinstance(sparse.K, np.ndarray)
        np.testing.assert_allclose(sparse.matrix(0.8), dense, atol=1e-13)


class TestSemigroup:
    def test_constant(self, pair):
        assert semigroup_apply(pair.Q, 1.3, np.full(5, 2.5), 0) == pytest.approx(2.5, abs=1e-13)

    def test_single_neuron(self, single):
        t = 0.8
        f = np.array([3.0, -1.0])
        assert semigroup_apply(single.Q, t, f, 0) == pytest.approx(math.exp(-t) * 3 - (1 - math.exp(-t)))

    def test_long_time_limit_is_pi(self, pair):
        f = np.arange(5.0)
        assert semigroup_apply(pair.Q, 60.0, f, 0) == pytest.approx(pair.pi @ f, abs=1e-9)

    def test_integral_of_one_is_t(self, pair):
        np.testing.assert_allclose(semigroup_time_integral(pair.Q, 2.7, np.ones(5)), 2.7, atol=1e-12)
        assert semigroup_time_integral(pair.Q, 2.7, np.zeros(5), 0) == 0.0

    @settings(max_examples=25, deadline=None)
    @given(generators(), st.floats(0.1, 3))
    def test_integral_matches_simpson(self, Q, t):
        g = np.linspace(-1, 2, Q.shape[0])
        s = np.linspace(0, t, 2049)
        vals = np.array([la.expm(u * Q) @ g for u in s])
        simpson = integrate.simpson(vals, x=s, axis=0)
        np.testing.assert_allclose(semigroup_time_integral(Q, t, g), simpson, atol=1e-8)

    def test_variance_edge_cases(self, pair, rng):
        f = rng.standard_normal(5)
        assert variance_semigroup(pair.Q, 0.0, f, 2) == 0.0
        assert variance_semigroup(pair.Q, 1.0, np.full(5, 4.0), 2) == pytest.approx(0.0, abs=1e-12)
        P = la.expm(1.0 * pair.Q.toarray())
        expected = P[0] @ f**2 - (P[0] @ f) ** 2
        assert variance_semigroup(pair.Q, 1.0, f, 0) == pytest.approx(expected, abs=1e-12)


class TestInvariantMeasure:
    def test_pair_closed_form(self, pair):
        # by hand from the 4-state recurrent block
        np.testing.assert_allclose(pair.pi, [0, 1 / 3, 1 / 3, 1 / 6, 1 / 6], atol=1e-15)
        assert np.abs(pair.pi @ pair.Q.toarray()).max() <= 1e-12

    def test_point_mass(self, single):
        np.testing.assert_array_equal(single.pi, [0.0, 1.0])

    def test_symmetric_cycle_is_uniform(self):
        Q = np.array([[-1.0, 1.0], [1.0, -1.0]])
        np.testing.assert_allclose(invariant_measure(Q), [0.5, 0.5])

    def test_multiple_classes_refused(self):
        Q = np.array([[-2.0, 1.0, 1.0], [0, 0, 0], [0, 0, 0]])
        with pytest.raises(MultipleClosedClasses):
            invariant_measure(Q)
        np.testing.assert_array_equal(invariant_measure(Q, [2]), [0, 0, 1])

    @settings(max_examples=60, deadline=None)
    @given(generators(irreducible=True))
    def test_gth_matches_null_space(self, Q):
        pi = gth_stationary(Q)
        ns = la.null_space(Q.T)[:, 0]
        np.testing.assert_allclose(pi, ns / ns.sum(), atol=1e-10)

    def test_fixed_point_of_semigroup(self, triple):
        for t in (0.5, 1.0, 2.0):
            assert np.abs(triple.pi @ triple.P(t) - triple.pi).sum() <= 1e-9

    def test_sparse_solver_branch(self, triple, monkeypatch):
        import pjmp.engine as eng

        monkeypatch.setattr(eng, "DENSE_LIMIT", 1)
        pi = invariant_measure(triple.Q, triple.space.closed_classes[0])
        np.testing.assert_allclose(pi, triple.pi, atol=1e-12)


class TestPoincareConstant:
    @pytest.mark.parametrize("a,b", [(1.0, 1.0), (0.3, 2.0), (5.0, 0.1)])
    def test_two_state_chain(self, a, b):
        Q = np.array([[-a, a], [b, -b]])
        pi = invariant_measure(Q)
        assert optimal_poincare_constant(Q, pi) == pytest.approx(1 / (a + b), rel=1e-12)

    def test_point_mass_has_zero_constant(self, single):
        assert optimal_poincare_constant(single.Q, single.pi) == 0.0

    @settings(max_examples=30, deadline=None)
    @given(generators(irreducible=True), st.integers(0, 2**32 - 1))
    def test_variational_characterization(self, Q, seed):
        pi = invariant_measure(Q)
        C = optimal_poincare_constant(Q, pi)
        gap, v = spectral_gap(Q, pi)
        assert variance_invariant(pi, v) == pytest.approx(C * pi @ gamma_general(Q, v), rel=1e-8)
        F = np.random.default_rng(seed).standard_normal((200, Q.shape[0]))
        for f in F:
            assert variance_invariant(pi, f) <= (1 + 1e-9) * C * (pi @ gamma_general(Q, f))

    def test_gamma_values_agree_with_general_formula(self, pair, rng):
        f = rng.standard_normal(5)
        np.testing.assert_allclose(carre_du_champ_values(pair.space, f), gamma_general(pair.Q.toarray(), f),
                                   atol=1e-14)


class TestJumpProbabilities:
    def test_single_neuron_unit_rate(self):
        m = affine_model([[0]], b=0.0)
        for s in (0.0, 0.5, 2.0):
            assert no_jump_probability(m, s, (0.5,)) == pytest.approx(math.exp(-s))
            assert one_jump_probability(m, s, (0.5,), 0) == pytest.approx(s * math.exp(-s))
        assert peak_time_t0(m, (0.5,), 0) == pytest.approx(1.0)

    def test_equal_rates_peak(self):
        m = affine_model([[0, 0], [0, 0]], b=0.0)
        assert peak_time_t0(m, (0, 0), 0) == pytest.approx(0.5)

    def test_log_two_peak(self):
        m = affine_model([[0]], a=1.0, b=1.0)
        assert peak_time_t0(m, (1,), 0) == pytest.approx(math.log(2))

    def test_quadrature_of_integral_form(self, rng):
        m = affine_model([[0, 0.5, 0.25], [0.25, 0, 0.5], [0.5, 0.25, 0]], a=0.5, b=2.0)
        for _ in range(50):
            x = np.round(rng.random(3) * 4) / 4
            i = int(rng.integers(3))
            s = float(rng.uniform(0.01, 3))
            phi = m.phi(x)
            a = phi.sum()
            from pjmp.model import apply_jump

            b = m.phi(apply_jump(m, x, i)).sum()
            val, _ = integrate.quad(lambda u: phi[i] * math.exp(-u * a) * math.exp(-(s - u) * b), 0, s,
                                    epsabs=1e-14, epsrel=1e-13)
            assert one_jump_probability(m, s, x, i) == pytest.approx(val, abs=1e-10)
            assert one_jump_probability(m, s, x, i) <= 1 - no_jump_probability(m, s, x) + 1e-15

    def test_unimodal_with_peak_at_t0(self, triple):
        sp = triple.space
        t0 = peak_times(sp)
        grid = np.linspace(1e-4, 6, 60001)
        vals = np.array([one_jump_probabilities(sp, s) for s in grid])
        arg = grid[np.argmax(vals, axis=0)]
        assert np.abs(arg - t0).max() <= grid[1] - grid[0]
        d = np.diff(vals, axis=0)
        for u in range(sp.n_states):
            for i in range(3):
                k = np.searchsorted(grid, t0[u, i])
                assert np.all(d[: max(k - 2, 0), u, i] > 0)
                assert np.all(d[k + 1:, u, i] < 0)

    def test_vectorized_matches_scalar(self, triple):
        sp = triple.space
        vec = one_jump_probabilities(sp, 0.7)
        for u in range(sp.n_states):
            for i in range(3):
                assert vec[u, i] == pytest.approx(one_jump_probability(triple.model, 0.7, sp.states[u], i),
                                                  rel=1e-12)


def test_rate_matrix_and_engine_on_sender_free_model():
    model, sp = reachable([[0, 0.25], [0.75, 0]], [0, 0])
    Q = dense_Q(model, sp)
    P = transition_probabilities(build_rate_matrix(model, sp), 1.2)
    np.testing.assert_allclose(P, la.expm(1.2 * Q), atol=1e-12)
