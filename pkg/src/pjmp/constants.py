"""Constants of the Poincare-type bounds, constructive and empirical.

Each constant comes in two flavours:

* ``paper`` -- the conservative closed-form bound built from ``N``, ``phi(m)``,
  ``delta`` and the peak times, valid for every starting point of the cube;
* ``empirical`` -- the sharp value of the same supremum, evaluated exactly
  on the enumerated state space over a time grid.

Empirical values never exceed the constructive ones; reports carry both so
the looseness of the constructive route is visible.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import Uniformizer, invariant_measure, peak_times, spectral_gap
from .errors import GridTooCoarse, MultipleClosedClasses, NonPositiveProbability
from .statespace import StateSpace, build_rate_matrix

POINTS_PER_DECADE = 64
REFINEMENT_TOLERANCE = 0.05
VARIANTS = ("paper", "empirical")


@dataclass(frozen=True)
class Pair:
    paper: float
    empirical: float

    def get(self, variant: str) -> float:
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
        return getattr(self, variant)


def log_grid(lo: float, hi: float, per_decade: int = POINTS_PER_DECADE) -> np.ndarray:
    """Log-spaced grid; doubling ``per_decade`` yields a superset of the points."""
    n = max(1, math.ceil(math.log10(hi / lo) * per_decade))
    return np.geomspace(lo, hi, n + 1)


def refine(grid: np.ndarray) -> np.ndarray:
    """Insert the geometric midpoint of every interval of a positive grid."""
    mids = np.sqrt(grid[:-1] * grid[1:])
    out = np.empty(2 * len(grid) - 1)
    out[0::2] = grid
    out[1::2] = mids
    return out


def _uniformizer(model, space, Q=None):
    if isinstance(Q, Uniformizer):
        return Q
    if Q is None:
        Q = build_rate_matrix(model, space)
    return Uniformizer(Q, rate=model.total_rate_bound)


def compute_M(model, space: StateSpace) -> Pair:
    """Largest total spiking rate: over reachable states, and the cube bound ``N phi(m)``."""
    return Pair(paper=model.total_rate_bound, empirical=float(space.total_rates.max()))


def compute_t0_star(model, space: StateSpace) -> float:
    """Largest peak time of the one-jump probability over all states and neurons."""
    return float(peak_times(space).max())


def _ratio_terms(space, P):
    """Per (x, i): sum over y of P[Dx, y]^2 / P[x, y], and the y = Dx term alone."""
    S = space.n_states
    E = space.edges
    PD = P[E]  # (S, N, S): rows of the jump targets
    Px = P[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(PD > 0, PD * PD / Px, 0.0)
    full = terms.sum(axis=2)
    rows = np.arange(S)[:, None]
    own = P[E, E]
    with np.errstate(divide="ignore", invalid="ignore"):
        self_term = own * own / P[rows, E]
        self_ratio = own / P[rows, E]
    return full, self_term, self_ratio


def _reach(space) -> np.ndarray:
    """Boolean reachability (reflexive) on the jump graph."""
    S = space.n_states
    R = np.eye(S, dtype=bool)
    R[np.repeat(np.arange(S), space.edges.shape[1]), space.edges.ravel()] = True
    while True:
        nxt = (R.astype(np.int64) @ R.astype(np.int64)) > 0
        if (nxt == R).all():
            return R
        R = nxt


@dataclass
class RatioScan:
    C1: float
    C2: float
    C1_at: tuple
    C2_at: tuple


def _scan_ratios(space, U, grid, t0):
    S = space.n_states
    reach = _reach(space)
    extra = S + 30
    C1 = C2 = 0.0
    C1_at = C2_at = None
    for t in grid:
        P = U.matrix(t, min_terms=extra)
        if np.any(reach & (P <= 0)):
            raise NonPositiveProbability(f"reachable transition underflowed at t={t}")
        full, self_term, self_ratio = _ratio_terms(space, P)
        c1 = np.where(t > t0, full, full - self_term)
        k = np.unravel_index(np.argmax(c1), c1.shape)
        if c1[k] > C1:
            C1, C1_at = float(c1[k]), (int(k[0]), int(k[1]), float(t))
        early = t <= t0
        if early.any():
            c2 = np.where(early, t * self_ratio, 0.0)
            k = np.unravel_index(np.argmax(c2), c2.shape)
            if c2[k] > C2:
                C2, C2_at = float(c2[k]), (int(k[0]), int(k[1]), float(t))
    return RatioScan(C1, C2, C1_at, C2_at)


def _forced_jump_ratio(space, total_bound, fractions):
    """Sup over s in (0, t0(x, i)) of (1 - exp(-s N phi(m))) / p_s^i(x), per (x, i).

    Also returns the sup of the x-free branch expression obtained after
    pulling out exp(t0 N phi(m)) / delta.
    """
    t0 = peak_times(space)
    a = space.total_rates[:, None]
    b = space.total_rates[space.edges]
    d = a - b
    eq = np.abs(d) <= 1e-12 * a
    phi = space.rates
    # s -> 0 limits of both expressions
    best = total_bound / phi
    branch = np.full(phi.shape, float(total_bound))
    for frac in fractions:
        s = frac * t0
        num = -np.expm1(-s * total_bound)
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(
                eq,
                s * phi * np.exp(-s * a),
                phi * np.exp(-s * b) * (-np.expm1(-s * d)) / d,
            )
            g = np.where(eq, num / s, d * num / (-np.expm1(-s * d)))
        best = np.maximum(best, num / p)
        branch = np.maximum(branch, g)
    return best, branch


@dataclass
class RatioConstants:
    C1: Pair
    C2: Pair
    M_D: Pair
    refinement_change: dict = field(default_factory=dict)
    argmax: dict = field(default_factory=dict)


def compute_ratio_constants(
    model,
    space: StateSpace,
    Q=None,
    per_decade: int = POINTS_PER_DECADE,
    per_neuron_sup: bool = False,
) -> RatioConstants:
    """Bounds on the transition-probability ratios ``pi_t(Dx, y)^2 / pi_t(x, y)``.

    ``C1`` bounds the sum over ``y`` (the ``y = Dx`` term dropped while
    ``t <= t0(x, i)``), ``C2`` bounds ``t pi_t(Dx, Dx) / pi_t(x, Dx)`` for
    ``t <= t0(x, i)``, and ``M_D`` bounds the forced-jump ratio
    ``(1 - exp(-s N phi(m))) / p_s^i(x)`` for ``s < t0(x, i)``.

    The empirical values are maxima over a log grid of ``per_decade`` points
    per decade spanning ``[1e-3 t0*, 10 t1]``; the grid is then refined twice
    as finely and a :class:`GridTooCoarse` warning is issued when any value
    moves by more than 5 %.  ``per_neuron_sup`` swaps ``N phi(m)`` for
    ``phi(m)`` in the exponent of the constructive ``C2``.
    """
    U = _uniformizer(model, space, Q)
    t0 = peak_times(space)
    t0_star = float(t0.max())
    t1 = 1.0 / model.delta + t0_star
    grid = log_grid(1e-3 * t0_star, 10.0 * t1, per_decade)
    fine = refine(grid)
    # the ratio sums jump at each peak time, so probe both sides of every one
    kinks = np.unique(t0)
    kinks = np.concatenate([kinks, kinks * (1 + 1e-9)])
    coarse_scan = _scan_ratios(space, U, np.union1d(grid, kinks), t0)
    fine_scan = _scan_ratios(space, U, fine[1::2], t0)

    Nphi = model.total_rate_bound
    fr = np.geomspace(1e-6, 1.0, 6 * per_decade + 1)
    fr_fine = refine(fr)[1::2]
    fr[-1] = 1.0 - 1e-12  # open interval: approach t0 from below
    md_best, md_branch = _forced_jump_ratio(space, Nphi, fr)
    md_best2, md_branch2 = _forced_jump_ratio(space, Nphi, fr_fine)
    md_emp_coarse = float(md_best.max())
    md_emp = float(max(md_best.max(), md_best2.max()))
    branch = float(max(md_branch.max(), md_branch2.max()))
    prefactor = math.exp(t0_star * Nphi) / model.delta
    md_paper = prefactor * branch

    C1_emp = max(coarse_scan.C1, fine_scan.C1)
    C2_emp = max(coarse_scan.C2, fine_scan.C2)

    peak = one_jump_probabilities_at_peak(space)
    C1_paper = space.n_states * float(np.max(np.maximum(1.0 / peak**2, (1.0 + md_paper) ** 2)))
    sup_rate = model.phi_max if per_neuron_sup else Nphi
    C2_paper = math.exp(t0_star * sup_rate) / model.delta

    change = {
        "C1": _rel_change(coarse_scan.C1, C1_emp),
        "C2": _rel_change(coarse_scan.C2, C2_emp),
        "M_D": _rel_change(md_emp_coarse, md_emp),
    }
    for name, rel in change.items():
        if rel > REFINEMENT_TOLERANCE:
            warnings.warn(
                f"empirical {name} moved by {rel:.1%} on grid refinement", GridTooCoarse, stacklevel=2
            )
    scan = coarse_scan if coarse_scan.C1 >= fine_scan.C1 else fine_scan
    scan2 = coarse_scan if coarse_scan.C2 >= fine_scan.C2 else fine_scan
    return RatioConstants(
        C1=Pair(C1_paper, C1_emp),
        C2=Pair(C2_paper, C2_emp),
        M_D=Pair(md_paper, md_emp),
        refinement_change=change,
        argmax={"C1": scan.C1_at, "C2": scan2.C2_at},
    )


def one_jump_probabilities_at_peak(space) -> np.ndarray:
    """``p^i_{t0(x, i)}(x)`` for every state and neuron."""
    t0 = peak_times(space)
    a = space.total_rates[:, None]
    b = space.total_rates[space.edges]
    d = a - b
    eq = np.abs(d) <= 1e-12 * a
    phi = space.rates
    with np.errstate(divide="ignore", invalid="ignore"):
        gen = phi * np.exp(-t0 * b) * (-np.expm1(-t0 * d)) / d
    return np.where(eq, t0 * phi * np.exp(-t0 * a), gen)


def _rel_change(old, new):
    if new == 0:
        return 0.0
    return abs(new - old) / abs(new)


@dataclass
class ThetaResult:
    theta: float
    t1: float
    argmin: tuple
    horizon: tuple
    refinement_change: float


def compute_theta_t1(model, space: StateSpace, Q=None, n_points: int = 257) -> ThetaResult:
    """Uniform lower bound ``1/theta`` on ``pi_t(x, y)`` over the recurrent class for ``t >= t1``.

    ``t1 = 1/delta + t0*``.  The minimum is taken over a grid on
    ``[t1, t1 + 5/gap]`` (``gap`` the spectral gap of the class) together
    with the stationary probabilities, which are the ``t -> inf`` limits.
    This is a grid certificate, not a proof.
    """
    U = _uniformizer(model, space, Q)
    classes = space.closed_classes
    if len(classes) != 1:
        raise MultipleClosedClasses(f"{len(classes)} closed classes; theta needs exactly one")
    cls = classes[0]
    t1 = 1.0 / model.delta + compute_t0_star(model, space)
    pi = invariant_measure(U.Q, cls)
    gap, _ = spectral_gap(U.Q, pi)
    span = 5.0 / gap if math.isfinite(gap) else 5.0
    horizon = (t1, t1 + span)

    def scan(ts):
        best = (float(pi[cls].min()), (None, int(cls[np.argmin(pi[cls])]), math.inf))
        for t in ts:
            P = U.matrix(t)[np.ix_(cls, cls)]
            k = np.unravel_index(np.argmin(P), P.shape)
            if P[k] <= 0:
                raise NonPositiveProbability(
                    f"pi_t({int(cls[k[0]])}, {int(cls[k[1]])}) = {P[k]} at t={t}"
                )
            if P[k] < best[0]:
                best = (float(P[k]), (int(cls[k[0]]), int(cls[k[1]]), float(t)))
        return best

    ts = np.linspace(*horizon, n_points)
    lo, at = scan(ts)
    lo_fine, at_fine = scan(np.linspace(*horizon, 2 * n_points - 1)[1::2])
    if lo_fine < lo:
        lo, at = lo_fine, at_fine
    change = _rel_change(1.0 / max(lo, lo_fine), 1.0 / lo)
    return ThetaResult(1.0 / lo, t1, at, horizon, change)


@dataclass(frozen=True)
class RateCoefficients:
    """Evaluators of the coefficients appearing in the semigroup bounds.

    ``alpha(t) = 2 + 2 M t c(t)``, ``c(t) = 8 t0 M (C1 + 1) + 2 t (1 + C1) M``,
    ``beta = 32 t0^2 M^2``, ``gamma(t) = 8 theta^2 M^2 N t^3`` and
    ``C0 = N^2 / (2 min pi delta)``.
    """

    M: float
    t0: float
    C1: float
    theta: float | None
    N: int
    delta: float
    min_pi: float | None
    variant: str = "empirical"

    def c(self, t):
        return 8.0 * self.t0 * self.M * (self.C1 + 1.0) + 2.0 * t * (1.0 + self.C1) * self.M

    def alpha(self, t):
        return 2.0 + 2.0 * self.M * t * self.c(t)

    @property
    def beta(self) -> float:
        return 32.0 * self.t0**2 * self.M**2

    def gamma(self, t):
        if self.theta is None:
            raise MultipleClosedClasses("gamma needs theta, which needs a single closed class")
        return 8.0 * self.theta**2 * self.M**2 * self.N * np.asarray(t, dtype=float) ** 3

    @property
    def C0(self) -> float | None:
        if self.min_pi is None:
            return None
        return self.N**2 / (2.0 * self.min_pi * self.delta)

    def zeta(self, neighbour_gamma_at_t, integrated_gamma):
        """Time threshold beyond which the neighbour term may be absorbed.

        ``neighbour_gamma_at_t`` is ``sum_i P_t Gamma(f, f)(Delta_i x)`` and
        ``integrated_gamma`` is ``int_0^t P_s Gamma(f, f)(x) ds``; ``nan`` for
        0/0 and ``inf`` when only the denominator vanishes.
        """
        return _threshold(6.0 * self.t0 * neighbour_gamma_at_t, (1.0 + self.C1) * integrated_gamma, 0.5)

    def xi(self, integrated_gamma, gamma_at_t):
        """Time threshold beyond which the integral term may be absorbed."""
        if self.theta is None:
            raise MultipleClosedClasses("xi needs theta")
        den = 4.0 * self.theta**2 * self.M**2 * self.N * gamma_at_t
        return _threshold(integrated_gamma, den, 1.0 / 3.0)


def _threshold(num, den, power):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num / den
    r = np.where((num <= 0) & (den <= 0), np.nan, r)
    r = np.where((num > 0) & (den <= 0), np.inf, r)
    out = np.power(np.where(np.isnan(r), 0.0, r), power)
    return np.where(np.isnan(r), np.nan, out)


@dataclass
class ConstantsReport:
    """Every constant for one (model, starting state) pair, with how it was obtained."""

    N: int
    delta: float
    M: Pair
    t0_star: float
    C1: Pair
    C2: Pair
    M_D: Pair
    theta: float | None
    t1: float
    C0: float | None
    min_pi: float | None
    optimal_poincare: float | None
    refinement_change: dict
    argmax: dict
    notes: dict = field(default_factory=dict)

    def coefficients(self, variant: str = "empirical") -> RateCoefficients:
        return assemble_rate_polynomials(self, variant)

    def alpha_of_t(self, t, variant="empirical"):
        return self.coefficients(variant).alpha(t)

    def beta(self, variant="empirical"):
        return self.coefficients(variant).beta

    def c_of_t(self, t, variant="empirical"):
        return self.coefficients(variant).c(t)

    def gamma_of_t(self, t, variant="empirical"):
        return self.coefficients(variant).gamma(t)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["provenance"] = PROVENANCE
        for v in VARIANTS:
            co = self.coefficients(v)
            d.setdefault("beta", {})[v] = co.beta
        return _jsonable(d)


PROVENANCE = {
    "N": "number of neurons",
    "delta": "declared (or certified) lower bound of the intensity",
    "M": "paper: N*phi(m); empirical: max total rate over reachable states",
    "t0_star": "max over states x and neurons i of the peak time of the one-jump probability",
    "C1": "paper: |states| * max(1/p_t0^2, (1+M_D)^2); empirical: max over t-grid of sum_y pi_t(Dx,y)^2/pi_t(x,y)",
    "C2": "paper: exp(t0* N phi(m))/delta; empirical: max over t <= t0(x,i) of t pi_t(Dx,Dx)/pi_t(x,Dx)",
    "M_D": "paper: exp(t0* N phi(m))/delta * sup of the x-free branch expression; empirical: sup over s < t0(x,i) of (1-exp(-s N phi(m)))/p_s^i(x)",
    "theta": "1 / min of pi_t(x,y) over the recurrent class, t on a grid over [t1, t1 + 5/gap] and t = inf (grid certificate)",
    "t1": "1/delta + t0_star",
    "C0": "N^2 / (2 min pi delta)",
    "beta": "32 t0*^2 M^2",
    "optimal_poincare": "inverse spectral gap of the pi-symmetrized generator",
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def assemble_rate_polynomials(report: ConstantsReport, variant: str = "empirical") -> RateCoefficients:
    return RateCoefficients(
        M=report.M.get(variant),
        t0=report.t0_star,
        C1=report.C1.get(variant),
        theta=report.theta,
        N=report.N,
        delta=report.delta,
        min_pi=report.min_pi,
        variant=variant,
    )


def compute_constants(model, space: StateSpace, Q=None, per_decade: int = POINTS_PER_DECADE,
                      per_neuron_sup: bool = False) -> ConstantsReport:
    """Compute every constant; theta, C0 and the optimal constant need a single closed class."""
    U = _uniformizer(model, space, Q)
    M = compute_M(model, space)
    t0_star = compute_t0_star(model, space)
    ratios = compute_ratio_constants(model, space, U, per_decade, per_neuron_sup)
    notes = {}
    theta = min_pi = C0 = opt = None
    t1 = 1.0 / model.delta + t0_star
    change = dict(ratios.refinement_change)
    argmax = dict(ratios.argmax)
    if len(space.closed_classes) == 1:
        th = compute_theta_t1(model, space, U)
        theta, t1 = th.theta, th.t1
        change["theta"] = th.refinement_change
        argmax["theta"] = th.argmin
        pi = invariant_measure(U.Q, space.closed_classes[0])
        min_pi = float(pi[space.closed_classes[0]].min())
        C0 = model.n_neurons**2 / (2.0 * min_pi * model.delta)
        gap, _ = spectral_gap(U.Q, pi)
        opt = 0.0 if math.isinf(gap) else 1.0 / gap
        notes["theta"] = "grid-certified surrogate"
    else:
        notes["theta"] = f"{len(space.closed_classes)} closed classes; theta, C0 not defined"
    return ConstantsReport(
        N=model.n_neurons,
        delta=model.delta,
        M=M,
        t0_star=t0_star,
        C1=ratios.C1,
        C2=ratios.C2,
        M_D=ratios.M_D,
        theta=theta,
        t1=t1,
        C0=C0,
        min_pi=min_pi,
        optimal_poincare=opt,
        refinement_change=change,
        argmax=argmax,
        notes=notes,
    )
