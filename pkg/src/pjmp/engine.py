"""Exact computations on the finite continuous-time chain.

Matrix exponentials use uniformization: with ``Lambda`` at least the largest
exit rate, ``K = I + Q / Lambda`` is a stochastic matrix and

    exp(tQ) = sum_k Poisson(Lambda t; k) K^k,
    int_0^t exp(sQ) ds = (1 / Lambda) sum_k P[Poisson(Lambda t) > k] K^k.

Every term is non-negative, so truncation only removes mass and small
entries keep their relative accuracy.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import stats
from scipy.sparse.csgraph import connected_components

from .errors import MultipleClosedClasses, NonFiniteTime, SingularSystem
from .model import NeuronModel, apply_jump, as_state

DENSE_LIMIT = 2000
DEFAULT_TOL = 1e-12


def _check_time(t):
    t = float(t)
    if not math.isfinite(t) or t < 0:
        raise NonFiniteTime(f"time must be finite and >= 0, got {t}")
    return t


class Uniformizer:
    """Generator ``Q`` prepared for repeated ``exp(tQ)`` products.

    Parameters
    ----------
    Q : (S, S) ndarray or sparse matrix
        Generator: non-negative off-diagonal entries, rows summing to zero.
    rate : float, optional
        Uniformization rate; raised to ``max |Q[u, u]|`` if smaller.
    tol : float
        Poisson tail mass left out of each truncated series.
    """

    def __init__(self, Q, rate=None, tol=DEFAULT_TOL):
        S = Q.shape[0]
        self.n = S
        self.tol = float(tol)
        diag = Q.diagonal() if sp.issparse(Q) else np.diag(Q)
        lam = float(np.max(-diag)) if S else 0.0
        if rate is not None:
            lam = max(lam, float(rate))
        self.rate = lam if lam > 0 else 1.0
        if S <= DENSE_LIMIT:
            Qd = Q.toarray() if sp.issparse(Q) else np.asarray(Q, dtype=float)
            self.Q = Qd
            self.K = np.eye(S) + Qd / self.rate
        else:
            Qs = sp.csr_matrix(Q)
            self.Q = Qs
            self.K = sp.identity(S, format="csr") + Qs / self.rate

    def _terms(self, t, min_terms=0, integral=False):
        mu = self.rate * t
        if mu == 0.0:
            return np.array([0.0 if integral else 1.0])
        tail = self.tol
        if integral:
            tail = self.tol / max(1.0, mu) * 1e-2
        kmax = int(stats.poisson.isf(tail, mu)) + 1
        kmax = max(kmax, int(min_terms) + 1)
        k = np.arange(kmax + 1)
        if integral:
            w = stats.poisson.sf(k, mu)
            return w * (mu / w.sum()) / self.rate
        w = stats.poisson.pmf(k, mu)
        return w / w.sum()

    def _series(self, weights, V, left):
        acc = weights[0] * V
        cur = V
        for w in weights[1:]:
            cur = (cur @ self.K) if left else (self.K @ cur)
            acc = acc + w * cur
        return acc

    def apply(self, t, V, min_terms=0):
        """``exp(tQ) @ V`` for a vector or a block of column vectors."""
        t = _check_time(t)
        return self._series(self._terms(t, min_terms), np.asarray(V, dtype=float), False)

    def propagate(self, t, mu, min_terms=0):
        """``mu @ exp(tQ)`` for a row distribution (or block of rows)."""
        t = _check_time(t)
        return self._series(self._terms(t, min_terms), np.asarray(mu, dtype=float), True)

    def integral_apply(self, t, V, min_terms=0):
        """``(int_0^t exp(sQ) ds) @ V``."""
        t = _check_time(t)
        return self._series(self._terms(t, min_terms, integral=True), np.asarray(V, dtype=float), False)

    def matrix(self, t, min_terms=0):
        P = self.apply(t, np.eye(self.n), min_terms)
        return _clamp_rows(P)

    def integral_matrix(self, t, min_terms=0):
        return self.integral_apply(t, np.eye(self.n), min_terms)


def _clamp_rows(P):
    P = np.where(P < 0, 0.0, P)
    return P / P.sum(axis=-1, keepdims=True)


def as_uniformizer(Q, rate=None, tol=DEFAULT_TOL) -> Uniformizer:
    if isinstance(Q, Uniformizer):
        return Q
    return Uniformizer(Q, rate=rate, tol=tol)


def transition_probabilities(Q, t, tol=DEFAULT_TOL, start=None, rate=None, min_terms=0):
    """Row-stochastic ``P_t = exp(tQ)``, or its row ``start`` when given."""
    U = as_uniformizer(Q, rate, tol)
    if start is None:
        return U.matrix(t, min_terms)
    e = np.zeros(U.n)
    e[start] = 1.0
    return _clamp_rows(U.propagate(t, e, min_terms))


def semigroup_apply(Q, t, f, x_index=None, tol=DEFAULT_TOL):
    """``P_t f(x) = E^x f(X_t)``; all starting states when ``x_index`` is None."""
    U = as_uniformizer(Q, tol=tol)
    Pf = U.apply(t, f)
    return Pf if x_index is None else float(Pf[x_index])


def semigroup_time_integral(Q, t, g, x_index=None, tol=DEFAULT_TOL):
    """``int_0^t P_s g(x) ds`` in closed form."""
    U = as_uniformizer(Q, tol=tol)
    Ig = U.integral_apply(t, g)
    return Ig if x_index is None else float(Ig[x_index])


def variance_semigroup(Q, t, f, x_index=None, tol=DEFAULT_TOL):
    """``P_t f^2(x) - (P_t f(x))^2``, clamped at zero."""
    U = as_uniformizer(Q, tol=tol)
    f = np.asarray(f, dtype=float)
    both = U.apply(t, np.stack([f * f, f], axis=-1))
    var = both[..., 0] - both[..., 1] ** 2
    var = np.where(var < 0, 0.0, var)
    return var if x_index is None else float(var[x_index])


def variance_invariant(pi, f) -> float:
    """``pi(f^2) - pi(f)^2``, clamped at zero."""
    pi = np.asarray(pi, dtype=float)
    f = np.asarray(f, dtype=float)
    mean = pi @ f
    return max(float(pi @ (f - mean) ** 2), 0.0)


def gth_stationary(A) -> np.ndarray:
    """Stationary law of an irreducible generator (or transition) matrix, by
    Grassmann-Taksar-Heyman elimination.  Only off-diagonal entries are read,
    so no subtraction ever happens."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    np.fill_diagonal(A, 0.0)
    for k in range(n - 1, 0, -1):
        s = A[k, :k].sum()
        if s <= 0:
            raise SingularSystem(f"state {k} cannot reach the lower block; chain not irreducible")
        A[:k, k] /= s
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
        np.fill_diagonal(A[:k, :k], 0.0)
    x = np.zeros(n)
    x[0] = 1.0
    for k in range(1, n):
        x[k] = x[:k] @ A[:k, k]
    return x / x.sum()


def _closed_classes_of(Q):
    Qs = sp.csr_matrix(Q)
    Qs = Qs - sp.diags(Qs.diagonal())
    Qs.eliminate_zeros()
    n_comp, labels = connected_components(Qs, directed=True, connection="strong")
    coo = Qs.tocoo()
    leaving = np.unique(labels[coo.row[labels[coo.row] != labels[coo.col]]])
    return [np.flatnonzero(labels == c) for c in range(n_comp) if c not in set(leaving)]


def invariant_measure(Q, indices=None) -> np.ndarray:
    """Invariant law ``pi`` (``pi Q = 0``) supported on one closed class.

    ``indices`` selects the class; when omitted the class is found from the
    graph of ``Q`` and :class:`MultipleClosedClasses` is raised if it is not
    unique.  The result has one entry per state of ``Q``.
    """
    if isinstance(Q, Uniformizer):
        Q = Q.Q
    S = Q.shape[0]
    if indices is None:
        classes = _closed_classes_of(Q)
        if len(classes) != 1:
            raise MultipleClosedClasses(f"{len(classes)} closed classes; select one")
        indices = classes[0]
    indices = np.asarray(indices)
    pi = np.zeros(S)
    if len(indices) == 1:
        pi[indices[0]] = 1.0
        return pi
    if sp.issparse(Q):
        sub = Q[indices][:, indices]
    else:
        sub = np.asarray(Q)[np.ix_(indices, indices)]
    if len(indices) <= DENSE_LIMIT:
        sub = sub.toarray() if sp.issparse(sub) else sub
        p = gth_stationary(sub)
    else:
        A = sp.csr_matrix(sub).T.tolil()
        A[0, :] = 1.0
        b = np.zeros(len(indices))
        b[0] = 1.0
        p = spla.spsolve(A.tocsc(), b)
        if not np.all(np.isfinite(p)):
            raise SingularSystem("stationary solve failed")
        p = np.clip(p, 0.0, None)
        p /= p.sum()
    pi[indices] = p
    return pi


def _dirichlet_pencil(Q, pi):
    idx = np.flatnonzero(pi > 0)
    if isinstance(Q, Uniformizer):
        Q = Q.Q
    Qd = Q.toarray() if sp.issparse(Q) else np.asarray(Q, dtype=float)
    Qc = Qd[np.ix_(idx, idx)]
    p = pi[idx]
    H = -0.5 * (p[:, None] * Qc + (p[:, None] * Qc).T)
    return idx, H, p


def spectral_gap(Q, pi):
    """Smallest non-zero eigenvalue of ``-(Q + Q*)/2`` in ``L^2(pi)`` and its eigenfunction.

    The eigenfunction is returned on the full state space (zero off the
    support of ``pi``).  A one-state support has no gap: ``(inf, 0)``.
    """
    pi = np.asarray(pi, dtype=float)
    idx, H, p = _dirichlet_pencil(Q, pi)
    f = np.zeros(len(pi))
    if len(idx) == 1:
        return math.inf, f
    try:
        if len(idx) <= DENSE_LIMIT:
            evals, evecs = la.eigh(H, np.diag(p))
        else:
            s = 1.0 / np.sqrt(p)
            Hs = sp.csr_matrix(s[:, None] * H * s[None, :])
            evals, evecs = spla.eigsh(Hs, k=2, sigma=-1e-6, which="LM")
            order = np.argsort(evals)
            evals, evecs = evals[order], evecs[:, order] * s[:, None]
    except (la.LinAlgError, spla.ArpackError) as exc:
        raise SingularSystem(str(exc)) from exc
    gap = float(evals[1])
    if not gap > 0:
        raise SingularSystem(f"non-positive spectral gap {gap}; class not irreducible")
    f[idx] = evecs[:, 1]
    return gap, f


def optimal_poincare_constant(Q, pi) -> float:
    """Smallest ``C`` with ``Var_pi(f) <= C pi(Gamma(f, f))`` for every ``f``.

    Equal to the inverse spectral gap; zero when ``pi`` is a point mass
    (every variance vanishes).
    """
    gap, _ = spectral_gap(Q, pi)
    return 0.0 if math.isinf(gap) else 1.0 / gap


def _rates_pair(model: NeuronModel, x, i):
    xs = as_state(model, x, check_bounds=model.clip_rule == "receiver")
    x = np.array([float(v) for v in xs])
    y = apply_jump(model, x, i)
    phi_x = model.phi(x)
    return float(phi_x[i]), float(phi_x.sum()), float(model.phi(y).sum())


def _equal_rates(a, b):
    return abs(b - a) <= 1e-12 * a


def no_jump_probability(model: NeuronModel, s, x) -> float:
    """Probability of no spike at all during ``[0, s]`` from ``x``."""
    s = _check_time(s)
    return math.exp(-s * total_intensity_of(model, x))


def total_intensity_of(model, x):
    xs = as_state(model, x, check_bounds=model.clip_rule == "receiver")
    return float(model.phi(np.array([float(v) for v in xs])).sum())


def one_jump_probability(model: NeuronModel, s, x, i) -> float:
    """Probability that during ``[0, s]`` neuron ``i`` spikes exactly once and nobody else does."""
    s = _check_time(s)
    phi_i, a, b = _rates_pair(model, x, i)
    if _equal_rates(a, b):
        return s * phi_i * math.exp(-s * a)
    # phi_i / (a - b) * (e^{-sb} - e^{-sa}), written to avoid cancellation
    return phi_i * math.exp(-s * b) * (-math.expm1(-s * (a - b))) / (a - b)


def peak_time_t0(model: NeuronModel, x, i) -> float:
    """Time at which the one-jump probability of neuron ``i`` is largest."""
    _, a, b = _rates_pair(model, x, i)
    if _equal_rates(a, b):
        return 1.0 / a
    return (math.log(a) - math.log(b)) / (a - b)


def one_jump_probabilities(space, s, i=None):
    """Vectorized one-jump probabilities over every state of ``space``.

    Returns an ``(S, N)`` array (or ``(S,)`` for a single neuron ``i``).
    """
    a = space.total_rates[:, None]
    b = space.total_rates[space.edges]
    phi = space.rates
    d = a - b
    eq = np.abs(d) <= 1e-12 * a
    with np.errstate(divide="ignore", invalid="ignore"):
        gen = phi * np.exp(-s * b) * (-np.expm1(-s * d)) / d
    out = np.where(eq, s * phi * np.exp(-s * a), gen)
    return out if i is None else out[:, i]


def peak_times(space):
    """``t0(x, i)`` for every state and neuron, shape ``(S, N)``."""
    a = space.total_rates[:, None]
    b = space.total_rates[space.edges]
    d = a - b
    eq = np.abs(d) <= 1e-12 * a
    with np.errstate(divide="ignore", invalid="ignore"):
        gen = (np.log(a) - np.log(b)) / d
    return np.where(eq, 1.0 / np.broadcast_to(a, d.shape), gen)


def generator_values(space, F) -> np.ndarray:
    """``Lf`` on every state for observables stored per state (vector or columns)."""
    F = np.asarray(F, dtype=float)
    diff = F[space.edges] - F[:, None, ...]
    R = space.rates if F.ndim == 1 else space.rates[..., None]
    return np.sum(R * diff, axis=1)


def carre_du_champ_values(space, F) -> np.ndarray:
    """``Gamma(f, f)`` on every state, for a vector or a block of columns."""
    F = np.asarray(F, dtype=float)
    diff = F[space.edges] - F[:, None, ...]
    R = space.rates if F.ndim == 1 else space.rates[..., None]
    return 0.5 * np.sum(R * diff * diff, axis=1)
