"""Certification harness: both sides of every bound on concrete instances.

A :class:`Certifier` bundles a model, its enumerated state space, the
uniformized generator and the constants, and caches ``P_t`` and
``int_0^t P_s ds`` per time so that whole blocks of observables can be
checked at once.  Single-instance checks return :class:`InequalityReport`;
the ``*_batch`` methods return arrays over (state, observable).

Check names
-----------
``semigroup_poincare_general``   Var_x f(X_t) <= alpha(t) int P_s G(x) + beta sum_i int P_s G(D_i x)
``semigroup_poincare_recurrent`` Var_x f(X_t) <= gamma(t) P_t G(x) + 2 int P_s G(x), x recurrent, t > t1
``absorbed_neighbour_term``      Var_x f(X_t) <= 2 alpha(t) int P_s G(x), when t > zeta(f)
``absorbed_integral_term``       Var_x f(X_t) <= 2 gamma(t) P_t G(x), when t > max(xi(f), t1)
``invariant_poincare``           Var_pi f <= C0 pi(G)
where ``G = Gamma(f, f)``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .constants import VARIANTS, ConstantsReport, compute_constants
from .engine import (
    DEFAULT_TOL,
    Uniformizer,
    carre_du_champ_values,
    generator_values,
    invariant_measure,
    peak_times,
    spectral_gap,
    variance_invariant,
)
from .errors import NotInRecurrentDomain
from .model import NeuronModel
from .statespace import StateSpace, build_rate_matrix, enumerate_reachable

REL_TOL = 1e-9
IDENTITY_TOL = 1e-7


def passes(lhs, rhs, rel_tol=REL_TOL):
    """``rhs - lhs >= -rel_tol * max(1, |rhs|)``, elementwise."""
    rhs = np.asarray(rhs, dtype=float)
    return (rhs - np.asarray(lhs, dtype=float)) >= -rel_tol * np.maximum(1.0, np.abs(rhs))


@dataclass
class InequalityReport:
    name: str
    instance: dict
    lhs: float
    rhs_terms: dict
    constants_variant: str | None
    margin: float
    status: str
    notes: str = ""

    @property
    def rhs(self) -> float:
        return float(sum(self.rhs_terms.values()))

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    @property
    def normalized_margin(self) -> float:
        return self.margin / max(1.0, abs(self.rhs))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "instance": self.instance,
            "lhs": self.lhs,
            "rhs_terms": self.rhs_terms,
            "rhs": self.rhs,
            "constants_variant": self.constants_variant,
            "margin": self.margin,
            "pass": self.passed,
            "status": self.status,
            "notes": self.notes,
        }


def _report(name, instance, lhs, rhs_terms, variant, notes="", skipped=False):
    rhs = float(sum(rhs_terms.values()))
    margin = rhs - float(lhs)
    if skipped:
        status = "skipped"
    else:
        status = "pass" if bool(passes(lhs, rhs)) else "fail"
    return InequalityReport(
        name, instance, float(lhs), {k: float(v) for k, v in rhs_terms.items()}, variant, margin, status, notes
    )


def model_hash(model: NeuronModel) -> str:
    blob = json.dumps(model.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def simpson(values: np.ndarray, h: float) -> np.ndarray:
    """Composite Simpson rule along axis 0 (odd number of nodes)."""
    n = values.shape[0] - 1
    if n % 2:
        raise ValueError("Simpson needs an even number of panels")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return h / 3.0 * np.tensordot(w, values, axes=(0, 0))


class Certifier:
    """Everything needed to evaluate the bounds on one enumerated state space.

    Parameters
    ----------
    model, space
        The network and the states reachable from the chosen start.
    constants : ConstantsReport, optional
        Computed on demand (this is the slow part) when omitted.
    tol : float
        Poisson-tail tolerance of the matrix exponentials.
    """

    def __init__(self, model: NeuronModel, space: StateSpace, constants: ConstantsReport | None = None,
                 tol: float = DEFAULT_TOL, per_decade: int | None = None):
        self.model = model
        self.space = space
        self.Q = build_rate_matrix(model, space)
        self.U = Uniformizer(self.Q, rate=model.total_rate_bound, tol=tol)
        if constants is None:
            kw = {} if per_decade is None else {"per_decade": per_decade}
            constants = compute_constants(model, space, self.U, **kw)
        self.constants = constants
        self.tol = tol
        self._P = {}
        self._I = {}
        self.model_id = model_hash(model)
        classes = space.closed_classes
        self.pi = invariant_measure(self.Q, classes[0]) if len(classes) == 1 else None

    @classmethod
    def build(cls, model, x0, **kw) -> "Certifier":
        return cls(model, enumerate_reachable(model, x0), **kw)

    def with_tolerance(self, tol: float) -> "Certifier":
        """Same instance with a different exponential tolerance (constants reused)."""
        return Certifier(self.model, self.space, self.constants, tol=tol)

    def coefficients(self, variant):
        return self.constants.coefficients(variant)

    def P(self, t) -> np.ndarray:
        t = float(t)
        if t not in self._P:
            self._P[t] = self.U.matrix(t)
        return self._P[t]

    def I(self, t) -> np.ndarray:
        t = float(t)
        if t not in self._I:
            self._I[t] = self.U.integral_matrix(t)
        return self._I[t]

    def prepare(self, times):
        for t in times:
            self.P(t)
            self.I(t)

    # -- batched pieces -------------------------------------------------------

    def gamma(self, F):
        return carre_du_champ_values(self.space, F)

    def variance(self, F, t):
        F = np.asarray(F, dtype=float)
        P = self.P(t)
        var = P @ (F * F) - (P @ F) ** 2
        return np.where(var < 0, 0.0, var)

    def general_terms(self, F, t, variant="empirical"):
        """``(lhs, first_rhs, neighbour_rhs)`` for every state and column of ``F``."""
        co = self.coefficients(variant)
        G = self.gamma(F)
        IG = self.I(t) @ G
        lhs = self.variance(F, t)
        first = co.alpha(t) * IG
        neigh = co.beta * IG[self.space.edges].sum(axis=1)
        return lhs, first, neigh

    def recurrent_terms(self, F, t, variant="empirical"):
        co = self.coefficients(variant)
        G = self.gamma(F)
        lhs = self.variance(F, t)
        return lhs, co.gamma(t) * (self.P(t) @ G), 2.0 * (self.I(t) @ G)

    def dynkin_residual(self, F, t):
        """``P_t f - f - int_0^t P_s Lf ds`` on every state."""
        F = np.asarray(F, dtype=float)
        return self.P(t) @ F - F - self.I(t) @ generator_values(self.space, F)

    def variance_representation(self, F, t, panels=None):
        """``2 int_0^t P_s Gamma(P_{t-s} f)(x) ds`` by composite Simpson.

        Returns ``(quadrature, exact variance)``.  The quadrature steps with
        ``P_h`` only, so it never touches the closed-form time integral.
        """
        F = np.asarray(F, dtype=float)
        if panels is None:
            panels = max(256, 2 * math.ceil(32 * self.U.rate * t))
        if t == 0:
            return np.zeros_like(F), self.variance(F, 0.0)
        h = t / panels
        Ph = self.U.matrix(h)
        # forward[k] = P_{kh} f
        forward = [F]
        for _ in range(panels):
            forward.append(Ph @ forward[-1])
        # integrand at s = kh: P_{kh} Gamma(P_{t-kh} f)
        vals = []
        Pk = np.eye(self.space.n_states)
        for k in range(panels + 1):
            vals.append(Pk @ self.gamma(forward[panels - k]))
            Pk = Pk @ Ph
        quad = 2.0 * simpson(np.array(vals), h)
        return quad, self.variance(F, t)

    # -- single-instance checks ----------------------------------------------

    def _instance(self, f_id, x_index, t):
        return {"model": self.model_id, "f": f_id, "x": int(x_index), "t": t}

    def check_theorem_general(self, f, x_index, t, variant="empirical", f_id=None):
        f = np.asarray(f, dtype=float)
        lhs, first, neigh = (a[x_index] for a in self.general_terms(f, t, variant))
        return _report(
            "semigroup_poincare_general",
            self._instance(f_id, x_index, t),
            lhs,
            {"alpha*int_Gamma": first, "beta*sum_neighbour_int_Gamma": neigh},
            variant,
        )

    def check_theorem_recurrent(self, f, x_index, t, variant="empirical", f_id=None):
        if not self.space.recurrent_mask[x_index]:
            raise NotInRecurrentDomain(f"state {x_index} is transient")
        t1 = self.constants.t1
        if not t > t1:
            raise ValueError(f"t = {t} must exceed t1 = {t1}")
        f = np.asarray(f, dtype=float)
        lhs, g, integ = (a[x_index] for a in self.recurrent_terms(f, t, variant))
        return _report(
            "semigroup_poincare_recurrent",
            self._instance(f_id, x_index, t),
            lhs,
            {"gamma*P_t_Gamma": g, "2*int_Gamma": integ},
            variant,
        )

    def check_corollaries(self, f, x_index, t, variant="empirical", f_id=None):
        """Both large-time corollaries; an unmet time condition gives ``skipped``."""
        f = np.asarray(f, dtype=float)
        co = self.coefficients(variant)
        G = self.gamma(f)
        PG = self.P(t) @ G
        IG = self.I(t) @ G
        lhs = self.variance(f, t)[x_index]
        inst = self._instance(f_id, x_index, t)

        zeta = float(co.zeta(PG[self.space.edges[x_index]].sum(), IG[x_index]))
        rhs = {"2*alpha*int_Gamma": 2.0 * co.alpha(t) * IG[x_index]}
        if math.isnan(zeta):
            first = _report("absorbed_neighbour_term", inst, lhs, rhs, variant, "threshold 0/0", skipped=True)
        elif not t > zeta:
            first = _report("absorbed_neighbour_term", inst, lhs, rhs, variant,
                            f"condition not met: t <= zeta = {zeta:.6g}", skipped=True)
        else:
            first = _report("absorbed_neighbour_term", inst, lhs, rhs, variant, f"zeta = {zeta:.6g}")

        rhs = {"2*gamma*P_t_Gamma": 2.0 * float(co.gamma(t)) * PG[x_index]} if co.theta else {}
        if not self.space.recurrent_mask[x_index] or co.theta is None:
            second = _report("absorbed_integral_term", inst, lhs, rhs, variant,
                             "start not in the recurrent class", skipped=True)
        else:
            xi = float(co.xi(IG[x_index], PG[x_index]))
            bar = max(xi, self.constants.t1) if not math.isnan(xi) else math.nan
            if math.isnan(xi):
                second = _report("absorbed_integral_term", inst, lhs, rhs, variant, "threshold 0/0", skipped=True)
            elif not t > bar:
                second = _report("absorbed_integral_term", inst, lhs, rhs, variant,
                                 f"condition not met: t <= max(xi, t1) = {bar:.6g}", skipped=True)
            else:
                second = _report("absorbed_integral_term", inst, lhs, rhs, variant, f"xi = {xi:.6g}")
        return first, second

    def check_invariant_poincare(self, f, f_id=None):
        if self.pi is None:
            raise NotInRecurrentDomain("invariant bound needs a single closed class")
        f = np.asarray(f, dtype=float)
        var = variance_invariant(self.pi, f)
        energy = float(self.pi @ self.gamma(f))
        C0 = self.constants.C0
        opt = self.constants.optimal_poincare
        note = f"optimal constant {opt:.6g}"
        if opt:
            note += f", looseness C0/optimal = {C0 / opt:.6g}"
        return _report(
            "invariant_poincare",
            {"model": self.model_id, "f": f_id},
            var,
            {"C0*pi(Gamma)": C0 * energy},
            None,
            note,
        )

    def check_identities(self, f, x_index, t, f_id=None):
        """Identities and the intermediate bounds behind the main inequalities.

        Dynkin's formula, the variance representation, the transition-ratio
        bounds, the uniform lower bound on transition probabilities and the
        squared expectation-gap bound.  Uses the empirical constants.
        """
        f = np.asarray(f, dtype=float)
        inst = self._instance(f_id, x_index, t)
        res = abs(float(self.dynkin_residual(f, t)[x_index]))
        out = [_report("dynkin", inst, res, {"tolerance": IDENTITY_TOL}, None)]
        quad, var = self.variance_representation(f, t)
        gap = abs(float(quad[x_index] - var[x_index])) / max(1.0, float(var[x_index]))
        out.append(_report("variance_representation", inst, gap, {"tolerance": IDENTITY_TOL}, None))
        out += self.ratio_reports(x_index, t)
        out += self.lower_bound_reports(x_index, t)
        out += self.expectation_gap_reports(f, x_index, t, f_id)
        return out

    def ratio_reports(self, x_index, t):
        """Sum and diagonal transition-ratio bounds at ``(x, t)``, one per neuron."""
        sp = self.space
        c = self.constants
        out = []
        if t <= 0:
            return out
        P = self.P(t)
        t0 = peak_times(sp)[x_index]
        mask = P[x_index] > 0
        inst = self._instance(None, x_index, t)
        for i in range(sp.edges.shape[1]):
            d = sp.edges[x_index, i]
            terms = np.where(mask, P[d] ** 2 / np.where(mask, P[x_index], 1.0), 0.0)
            total = terms.sum()
            if t <= t0[i]:
                total -= terms[d]
                out.append(_report("ratio_diagonal_bound", dict(inst, neuron=i), t * P[d, d] / P[x_index, d],
                                   {"C2": c.C2.empirical}, "empirical"))
            out.append(_report("ratio_sum_bound", dict(inst, neuron=i), total, {"C1": c.C1.empirical}, "empirical"))
        return out

    def lower_bound_reports(self, x_index, t):
        """``theta * P_t(x, y) >= 1`` over the recurrent class, for ``t >= t1``."""
        c = self.constants
        sp = self.space
        if c.theta is None or not sp.recurrent_mask[x_index] or t < c.t1:
            return []
        low = float(self.P(t)[x_index, sp.closed_classes[0]].min())
        return [_report("transition_lower_bound", self._instance(None, x_index, t), 1.0,
                        {"theta*min_P_t": c.theta * low}, None, "grid-certified theta")]

    def expectation_gap_reports(self, F, x_index, t, f_id=None):
        """Squared gap of ``int_{t0*}^t P_u Lf du`` between ``Delta_i x`` and ``x``.

        Bounded by ``t (1 + C1) M int_{t0*}^t P_u Gamma(f, f)(x) du``; only
        meaningful for ``t > t0*``.  Accepts one observable or a block of them
        (then ``f_id`` is a list of ids).
        """
        c = self.constants
        sp = self.space
        if not t > c.t0_star:
            return []
        F = np.asarray(F, dtype=float)
        block = F.ndim == 2
        F2 = F if block else F[:, None]
        ids = f_id if block else [f_id]
        window = self.I(t) - self.I(c.t0_star)
        WL = window @ generator_values(sp, F2)
        WG = (window @ self.gamma(F2))[x_index]
        rhs = t * (1.0 + c.C1.empirical) * c.M.empirical * WG
        out = []
        for i in range(sp.edges.shape[1]):
            d = sp.edges[x_index, i]
            lhs = (WL[d] - WL[x_index]) ** 2
            for k, fid in enumerate(ids):
                out.append(_report("expectation_gap_bound", dict(self._instance(fid, x_index, t), neuron=i),
                                   lhs[k], {"t*(1+C1)*M*int_Gamma": rhs[k]}, "empirical"))
        return out


@dataclass
class SweepSummary:
    n_observables: int = 0
    counts: dict = field(default_factory=dict)
    min_normalized_margin: dict = field(default_factory=dict)
    worst: dict = field(default_factory=dict)
    recheck: dict = field(default_factory=dict)
    reports: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(c.get("fail", 0) == 0 for c in self.counts.values())

    def add(self, rep: InequalityReport, key=None):
        key = key or (rep.name if rep.constants_variant is None else f"{rep.name}[{rep.constants_variant}]")
        cnt = self.counts.setdefault(key, {"pass": 0, "fail": 0, "skipped": 0})
        cnt[rep.status] += 1
        self.reports.append(rep)
        if rep.status == "skipped":
            return
        if rep.rhs == 0.0 and rep.lhs == 0.0:
            cnt["trivial"] = cnt.get("trivial", 0) + 1
            return
        nm = rep.normalized_margin
        if key not in self.min_normalized_margin or nm < self.min_normalized_margin[key]:
            self.min_normalized_margin[key] = nm
            self.worst[key] = rep

    def to_dict(self, with_reports=False) -> dict:
        d = {
            "n_observables": self.n_observables,
            "all_passed": self.all_passed,
            "counts": self.counts,
            "min_normalized_margin": self.min_normalized_margin,
            "worst": {k: v.instance for k, v in self.worst.items()},
            "recheck": self.recheck,
        }
        if with_reports:
            d["reports"] = [r.to_dict() for r in self.reports]
        return d


DEFAULT_TIMES = (0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0)


def observable_family(cert: Certifier, n_random: int, seed: int, structured: bool = True):
    """``(ids, F)``: structured observables followed by ``n_random`` Gaussian ones."""
    sp = cert.space
    S = sp.n_states
    ids, cols = [], []
    if n_random > 0 and structured:
        for j in range(sp.states.shape[1]):
            ids.append(f"coordinate[{j}]")
            cols.append(sp.states[:, j].copy())
        for u in range(min(S, 16)):
            e = np.zeros(S)
            e[u] = 1.0
            ids.append(f"indicator[{u}]")
            cols.append(e)
        if cert.pi is not None and np.count_nonzero(cert.pi) > 1:
            _, v = spectral_gap(cert.Q, cert.pi)
            ids.append("eigenfunction")
            cols.append(v)
    rng = np.random.default_rng(seed)
    for k in range(n_random):
        ids.append(f"random[{seed}:{k}]")
        cols.append(rng.standard_normal(S))
    F = np.array(cols).T if cols else np.zeros((S, 0))
    return ids, F


def _reports_for_time(cert, ids, F, t, variants, checks):
    sp = cert.space
    out = []
    S = sp.n_states
    if "theorem_general" in checks:
        for v in variants:
            lhs, first, neigh = cert.general_terms(F, t, v)
            for x in range(S):
                for k, fid in enumerate(ids):
                    out.append(_report(
                        "semigroup_poincare_general",
                        {"model": cert.model_id, "f": fid, "x": x, "t": t},
                        lhs[x, k],
                        {"alpha*int_Gamma": first[x, k], "beta*sum_neighbour_int_Gamma": neigh[x, k]},
                        v,
                    ))
    if "corollaries" in checks:
        for v in variants:
            for x in range(S):
                for k, fid in enumerate(ids):
                    out.extend(cert.check_corollaries(F[:, k], x, t, v, fid))
    if "identities" in checks:
        dyn = np.abs(cert.dynkin_residual(F, t))
        quad, var = cert.variance_representation(F, t)
        rep = np.abs(quad - var) / np.maximum(1.0, var)
        for x in range(S):
            for k, fid in enumerate(ids):
                inst = {"model": cert.model_id, "f": fid, "x": x, "t": t}
                out.append(_report("dynkin", inst, dyn[x, k], {"tolerance": IDENTITY_TOL}, None))
                out.append(_report("variance_representation", inst, rep[x, k], {"tolerance": IDENTITY_TOL}, None))
        for x in range(S):
            out += cert.ratio_reports(x, t)
            out += cert.lower_bound_reports(x, t)
            out += cert.expectation_gap_reports(F, x, t, ids)
    return out


ALL_CHECKS = ("theorem_general", "theorem_recurrent", "corollaries", "invariant", "identities")


def random_observable_sweep(cert: Certifier, n_functions: int, seed: int = 0, times=None,
                            variants=VARIANTS, checks=ALL_CHECKS, workers: int = 1,
                            recheck: bool = True, family=None) -> SweepSummary:
    """Run every check over a family of observables, all states and a time grid.

    ``family`` is an ``(ids, F)`` pair overriding the default observables
    (structured ones plus ``n_functions`` Gaussian draws).  Deterministic for
    a given seed; ``workers`` only changes wall time.
    """
    summary = SweepSummary()
    ids, F = family if family is not None else observable_family(cert, n_functions, seed)
    summary.n_observables = len(ids)
    if not ids:
        return summary
    c = cert.constants
    times = list(DEFAULT_TIMES if times is None else times)
    rec_times = [1.1 * c.t1, 2.0 * c.t1, 5.0 * c.t1]
    cert.prepare(times + (rec_times if c.theta is not None else []))

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        batches = list(pool.map(lambda t: _reports_for_time(cert, ids, F, t, variants, checks), times))
    for batch in batches:
        for rep in batch:
            summary.add(rep)

    if "theorem_recurrent" in checks and c.theta is not None:
        rec = np.flatnonzero(cert.space.recurrent_mask)
        for v in variants:
            for t in rec_times:
                lhs, g, integ = cert.recurrent_terms(F, t, v)
                for x in rec:
                    for k, fid in enumerate(ids):
                        summary.add(_report(
                            "semigroup_poincare_recurrent",
                            {"model": cert.model_id, "f": fid, "x": int(x), "t": t},
                            lhs[x, k], {"gamma*P_t_Gamma": g[x, k], "2*int_Gamma": integ[x, k]}, v,
                        ))
    if "invariant" in checks and cert.pi is not None:
        for k, fid in enumerate(ids):
            summary.add(cert.check_invariant_poincare(F[:, k], fid))

    if recheck:
        _recheck_worst(cert, ids, F, summary)
    return summary


_RECHECK = {
    "semigroup_poincare_general": "check_theorem_general",
    "semigroup_poincare_recurrent": "check_theorem_recurrent",
}


def _recheck_worst(cert, ids, F, summary):
    """Re-evaluate the tightest instance of each main inequality at a 10x tighter tolerance."""
    tight = cert.with_tolerance(cert.tol / 10.0)
    for key, rep in summary.worst.items():
        method = _RECHECK.get(rep.name)
        if method is None:
            continue
        inst = rep.instance
        k = ids.index(inst["f"])
        again = getattr(tight, method)(F[:, k], inst["x"], inst["t"], rep.constants_variant, inst["f"])
        summary.recheck[key] = {
            "instance": inst,
            "margin": rep.margin,
            "margin_tight": again.margin,
            "passed": again.passed,
        }


def reports_to_csv(reports) -> str:
    """Flat CSV: one row per instance (margin-vs-t curves are one groupby away)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "variant", "f", "x", "t", "neuron", "lhs", "rhs", "margin", "status"])
    for r in reports:
        inst = r.instance
        w.writerow([
            r.name, r.constants_variant or "", inst.get("f", ""), inst.get("x", ""),
            repr(inst["t"]) if "t" in inst else "", inst.get("neuron", ""),
            repr(r.lhs), repr(r.rhs), repr(r.margin), r.status,
        ])
    return buf.getvalue()


Z_LIMIT = 4.0
CHI2_LEVEL = 1e-3


def montecarlo_crosscheck(cert: Certifier, ids, F, x_index: int, times, n_paths: int, seed: int,
                          workers: int = 1) -> tuple:
    """Compare simulated endpoint statistics with the exact engine.

    Returns ``(rows, reports)``: one row per (t, observable) with both
    estimates, the exact values and the z-scores, plus chi-square rows for
    the endpoint law; a report fails when ``|z| > 4`` or the chi-square
    p-value drops below ``1e-3``.
    """
    from .montecarlo import chi_square_fit, expectation_from_counts, sample_endpoints, variance_from_counts

    F = np.asarray(F, dtype=float)
    rows, reports = [], []
    for k_t, t in enumerate(times):
        counts = sample_endpoints(cert.space, x_index, t, n_paths, seed, workers, substream=k_t)
        row = cert.P(t)[x_index]
        stat, pval, bins = chi_square_fit(counts, row)
        inst = {"model": cert.model_id, "f": None, "x": int(x_index), "t": t}
        rows.append({"t": t, "f": None, "kind": "chi_square", "statistic": stat, "p_value": pval, "bins": bins})
        reports.append(InequalityReport("montecarlo_law", inst, CHI2_LEVEL, {"p_value": pval}, None,
                                        pval - CHI2_LEVEL, "pass" if pval >= CHI2_LEVEL else "fail",
                                        f"{bins} bins"))
        exact_mean = row @ F
        exact_var = cert.variance(F, t)[x_index]
        for k, fid in enumerate(ids):
            for kind, est, exact in (
                ("expectation", expectation_from_counts(counts, F[:, k], seed), exact_mean[k]),
                ("variance", variance_from_counts(counts, F[:, k], seed), exact_var[k]),
            ):
                diff = est.mean - float(exact)
                bound = Z_LIMIT * est.std_error
                z = diff / est.std_error if est.std_error > 0 else (0.0 if abs(diff) < 1e-12 else math.inf)
                rows.append({"t": t, "f": fid, "kind": kind, "estimate": est.to_dict(), "exact": float(exact),
                             "z": z})
                ok = abs(diff) <= bound or abs(diff) < 1e-12
                reports.append(InequalityReport(f"montecarlo_{kind}", dict(inst, f=fid), abs(diff),
                                                {"4*std_error": bound}, None, bound - abs(diff),
                                                "pass" if ok else "fail", f"z = {z:.3f}"))
    return rows, reports
