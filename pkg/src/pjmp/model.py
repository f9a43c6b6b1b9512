"""Network of interacting neurons with degenerate (reset-to-zero) jumps.

A state is the vector of membrane potentials ``x`` in ``[0, m]^N``.  Neuron
``i`` spikes at rate ``phi(x[i])``; a spike resets ``x[i]`` to zero and adds
``W[i, j]`` to every other neuron ``j``, unless the increment would push the
potential above the ceiling ``m`` (in which case ``x[j]`` is left as is).

Potentials and weights are kept as exact rationals so that states reached
along different jump sequences compare equal.  Floats are converted through
their shortest decimal representation, so ``0.1`` means exactly ``1/10``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from numbers import Rational
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    IndexOutOfRange,
    IntensityBelowFloor,
    IntensityBelowLinearBound,
    InvalidState,
    ModelError,
    NegativeWeight,
    NonPositiveCeiling,
    NonPositiveDelta,
    NonzeroDiagonal,
    ObservableUndefined,
)

CLIP_RULES = ("receiver", "sender")


def exact(value, field=None) -> Fraction:
    """Convert a number (int, float, str, Fraction) to an exact ``Fraction``."""
    if isinstance(value, bool):
        raise ModelError(f"expected a number, got {value!r}", field)
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value)
        except ValueError:
            raise ModelError(f"cannot parse {value!r} as a number", field) from None
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ModelError(f"expected a number, got {value!r}", field) from None
    if not math.isfinite(v):
        raise ModelError(f"non-finite value {value!r}", field)
    return Fraction(repr(v))


@dataclass(frozen=True)
class IntensitySpec:
    """Spiking intensity ``phi`` with its certified bounds.

    ``family="affine"`` uses ``phi(x) = a + b*x``; ``family="table"`` linearly
    interpolates ``values`` at ``breakpoints`` (which must start at 0 and reach
    the ceiling).  ``delta`` and ``c`` are the constants of the assumptions
    ``phi >= delta`` and ``phi(x) > c*x``; when omitted, ``delta`` defaults to
    the minimum of ``phi`` on ``[0, m]`` and ``c`` to half the largest admissible
    slope.
    """

    family: str = "affine"
    a: float = 1.0
    b: float = 0.0
    breakpoints: tuple = ()
    values: tuple = ()
    delta: float | None = None
    c: float | None = None

    def __post_init__(self):
        if self.family not in ("affine", "table"):
            raise ModelError(f"unknown family {self.family!r}", "intensity.family")
        if self.family == "affine":
            if not (math.isfinite(self.a) and math.isfinite(self.b)):
                raise ModelError("non-finite coefficient", "intensity")
            if self.b < 0:
                raise ModelError("slope b must be >= 0", "intensity.b")
        else:
            xs = tuple(float(v) for v in self.breakpoints)
            ys = tuple(float(v) for v in self.values)
            object.__setattr__(self, "breakpoints", xs)
            object.__setattr__(self, "values", ys)
            if len(xs) < 2 or len(xs) != len(ys):
                raise ModelError(
                    "table needs >= 2 breakpoints and as many values", "intensity.breakpoints"
                )
            if xs[0] != 0.0:
                raise ModelError("first breakpoint must be 0", "intensity.breakpoints")
            if any(x1 <= x0 for x0, x1 in zip(xs, xs[1:])):
                raise ModelError("breakpoints must be strictly increasing", "intensity.breakpoints")
            if any(y1 < y0 for y0, y1 in zip(ys, ys[1:])):
                raise ModelError("table values must be non-decreasing", "intensity.values")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "affine":
            return self.a + self.b * x
        return np.interp(x, self.breakpoints, self.values)

    def floor_on(self, m: float) -> float:
        """Minimum of phi over ``[0, m]`` (phi is non-decreasing)."""
        return float(self(0.0))

    def peak_on(self, m: float) -> float:
        """Maximum of phi over ``[0, m]``, i.e. ``phi(m)``."""
        return float(self(m))

    def _linear_margin(self, m: float, c: float) -> float:
        # phi(x) - c*x is piecewise linear, so its minimum over [0, m] sits at a kink or an end.
        if self.family == "affine":
            pts = np.array([0.0, m])
        else:
            xs = np.asarray(self.breakpoints)
            pts = np.concatenate([xs[xs <= m], [m]])
        return float(np.min(self(pts) - c * pts))

    def certified(self, m: float) -> "IntensitySpec":
        """Return a copy with ``delta`` and ``c`` filled in and checked on ``[0, m]``."""
        if self.family == "table" and self.breakpoints[-1] < m:
            raise ModelError(
                f"table breakpoints end at {self.breakpoints[-1]} < ceiling {m}",
                "intensity.breakpoints",
            )
        lo = self.floor_on(m)
        if lo <= 0:
            raise NonPositiveDelta(
                f"intensity must be strictly positive, phi(0) = {lo}", "intensity"
            )
        delta = lo if self.delta is None else float(self.delta)
        if not delta > 0:
            raise NonPositiveDelta(f"delta must be > 0, got {delta}", "intensity.delta")
        if lo < delta:
            raise IntensityBelowFloor(
                f"min phi on [0, m] is {lo} < declared delta {delta}", "intensity.delta"
            )
        if self.c is None:
            # largest c with phi(x) > c x on (0, m] is min phi(x)/x; take half of it
            if self.family == "affine":
                c = 0.5 * (self.a / m + self.b)
            else:
                xs = np.concatenate([np.asarray(self.breakpoints)[1:], [m]])
                xs = xs[(xs > 0) & (xs <= m)]
                c = 0.5 * float(np.min(self(xs) / xs))
        else:
            c = float(self.c)
        if not c > 0:
            raise ModelError(f"c must be > 0, got {c}", "intensity.c")
        if not self._linear_margin(m, c) > 0:
            raise IntensityBelowLinearBound(
                f"phi(x) > {c} x fails somewhere on [0, {m}]", "intensity.c"
            )
        return IntensitySpec(
            self.family, self.a, self.b, self.breakpoints, self.values, delta, c
        )

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.family == "affine":
            d.update(a=self.a, b=self.b)
        else:
            d.update(breakpoints=list(self.breakpoints), values=list(self.values))
        if self.delta is not None:
            d["delta"] = self.delta
        if self.c is not None:
            d["c"] = self.c
        return d

    @classmethod
    def from_dict(cls, raw: Mapping) -> "IntensitySpec":
        if not isinstance(raw, Mapping):
            raise ModelError("expected an object", "intensity")
        family = raw.get("family", "affine")
        known = {"family", "a", "b", "breakpoints", "values", "delta", "c"}
        extra = set(raw) - known
        if extra:
            raise ModelError(f"unknown keys {sorted(extra)}", "intensity")

        def num(key, default=None):
            if key not in raw or raw[key] is None:
                return default
            return float(exact(raw[key], f"intensity.{key}"))

        if family == "affine":
            if "a" not in raw:
                raise ModelError("missing floor 'a'", "intensity.a")
            return cls("affine", a=num("a"), b=num("b", 0.0), delta=num("delta"), c=num("c"))
        if family == "table":
            xs, ys = raw.get("breakpoints"), raw.get("values")
            if not isinstance(xs, Sequence) or not isinstance(ys, Sequence):
                raise ModelError("table needs 'breakpoints' and 'values' lists", "intensity")
            xs = tuple(float(exact(v, "intensity.breakpoints")) for v in xs)
            ys = tuple(float(exact(v, "intensity.values")) for v in ys)
            return cls("table", breakpoints=xs, values=ys, delta=num("delta"), c=num("c"))
        raise ModelError(f"unknown family {family!r}", "intensity.family")


@dataclass(frozen=True)
class NeuronModel:
    """Validated network: weights ``W[i][j]`` (i spikes, j receives), intensity, ceiling.

    Construct through :func:`validate_model` or directly; either way all
    assumptions are checked and the intensity bounds certified on ``[0, m]``.
    """

    weights: tuple
    intensity: IntensitySpec
    ceiling: Fraction
    clip_rule: str = "receiver"
    _raw_weights: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        rows = self.weights
        if isinstance(rows, np.ndarray):
            rows = rows.tolist()
        if not isinstance(rows, Sequence) or len(rows) == 0:
            raise ModelError("weights must be a non-empty square matrix", "weights")
        n = len(rows)
        W = []
        for i, row in enumerate(rows):
            if not isinstance(row, Sequence) or isinstance(row, str) or len(row) != n:
                raise ModelError(f"row {i} must have length {n}", f"weights[{i}]")
            out = []
            for j, w in enumerate(row):
                w = exact(w, f"weights[{i}][{j}]")
                if w < 0:
                    raise NegativeWeight(f"{float(w)} < 0", f"weights[{i}][{j}]")
                if i == j and w != 0:
                    raise NonzeroDiagonal(f"{float(w)} != 0", f"weights[{i}][{i}]")
                out.append(w)
            W.append(tuple(out))
        object.__setattr__(self, "weights", tuple(W))
        m = exact(self.ceiling, "ceiling")
        if m <= 0:
            raise NonPositiveCeiling(f"{float(m)} <= 0", "ceiling")
        object.__setattr__(self, "ceiling", m)
        if self.clip_rule not in CLIP_RULES:
            raise ModelError(f"must be one of {CLIP_RULES}", "clip_rule")
        if not isinstance(self.intensity, IntensitySpec):
            raise ModelError("expected an IntensitySpec", "intensity")
        object.__setattr__(self, "intensity", self.intensity.certified(float(m)))

    @property
    def n_neurons(self) -> int:
        return len(self.weights)

    @cached_property
    def weight_matrix(self) -> np.ndarray:
        W = np.array([[float(w) for w in row] for row in self.weights])
        W.flags.writeable = False
        return W

    @property
    def m(self) -> float:
        return float(self.ceiling)

    @property
    def delta(self) -> float:
        return self.intensity.delta

    @property
    def c(self) -> float:
        return self.intensity.c

    @property
    def phi_max(self) -> float:
        """``phi(m)``, the largest single-neuron rate on the compact set."""
        return self.intensity.peak_on(self.m)

    @property
    def total_rate_bound(self) -> float:
        """``N * phi(m)``, an upper bound of the total rate over the compact set."""
        return self.n_neurons * self.phi_max

    def phi(self, x):
        return self.intensity(x)

    def to_dict(self) -> dict:
        return {
            "n_neurons": self.n_neurons,
            "weights": [[_plain(w) for w in row] for row in self.weights],
            "intensity": self.intensity.to_dict(),
            "ceiling": _plain(self.ceiling),
            "clip_rule": self.clip_rule,
        }


def _plain(q: Fraction):
    """Render an exact value as an int or a float when that is lossless."""
    if q.denominator == 1:
        return int(q)
    f = float(q)
    return f if Fraction(repr(f)) == q else str(q)


def validate_model(raw: Mapping | NeuronModel) -> NeuronModel:
    """Build a :class:`NeuronModel` from a JSON-like mapping, checking every assumption.

    Expected keys: ``weights`` (N x N), ``intensity`` (see
    :meth:`IntensitySpec.from_dict`), ``ceiling``, optional ``n_neurons`` (must
    agree with the weights) and ``clip_rule``.
    """
    if isinstance(raw, NeuronModel):
        return raw
    if not isinstance(raw, Mapping):
        raise ModelError("model block must be an object", "model")
    known = {"n_neurons", "weights", "intensity", "ceiling", "clip_rule"}
    extra = set(raw) - known
    if extra:
        raise ModelError(f"unknown keys {sorted(extra)}", "model")
    for key in ("weights", "intensity", "ceiling"):
        if key not in raw:
            raise ModelError("missing", key)
    weights = raw["weights"]
    if not isinstance(weights, Sequence) or isinstance(weights, str):
        raise ModelError("must be a list of lists", "weights")
    n = raw.get("n_neurons")
    if n is not None:
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise ModelError("must be a positive integer", "n_neurons")
        if len(weights) != n:
            raise ModelError(f"expected {n} rows, got {len(weights)}", "weights")
    intensity = IntensitySpec.from_dict(raw["intensity"])
    return NeuronModel(
        weights=weights,
        intensity=intensity,
        ceiling=raw["ceiling"],
        clip_rule=raw.get("clip_rule", "receiver"),
    )


def jump(values: Sequence, i: int, weights: Sequence, ceiling, rule: str = "receiver") -> tuple:
    """Exact jump map on any exactly-comparable numbers (ints on a grid, Fractions)."""
    xi = values[i]
    row = weights[i]
    out = []
    for j, xj in enumerate(values):
        if j == i:
            out.append(0 * xj)
            continue
        w = row[j]
        test = xj + w if rule == "receiver" else xi + w
        out.append(xj + w if test <= ceiling else xj)
    return tuple(out)


def as_state(model: NeuronModel, x, check_bounds: bool = True) -> tuple:
    """Validate a potential vector and convert it to exact Fractions."""
    if isinstance(x, np.ndarray):
        x = x.tolist()
    if not isinstance(x, Sequence) or len(x) != model.n_neurons:
        raise InvalidState(f"state must have length {model.n_neurons}", "state")
    xs = tuple(exact(v, f"state[{k}]") for k, v in enumerate(x))
    if check_bounds:
        for k, v in enumerate(xs):
            if v < 0 or v > model.ceiling:
                raise InvalidState(f"{float(v)} outside [0, {model.m}]", f"state[{k}]")
    return xs


def _check_index(model: NeuronModel, i: int):
    if isinstance(i, bool) or not isinstance(i, (int, np.integer)) or not 0 <= i < model.n_neurons:
        raise IndexOutOfRange(f"neuron index {i} not in [0, {model.n_neurons})")


def apply_jump(model: NeuronModel, x, i: int) -> np.ndarray:
    """State right after neuron ``i`` (0-based) spikes from ``x``."""
    _check_index(model, i)
    xs = as_state(model, x, check_bounds=model.clip_rule == "receiver")
    y = jump(xs, int(i), model.weights, model.ceiling, model.clip_rule)
    return np.array([float(v) for v in y])


def intensities(model: NeuronModel, x) -> np.ndarray:
    xs = as_state(model, x, check_bounds=model.clip_rule == "receiver")
    return model.phi(np.array([float(v) for v in xs]))


def total_intensity(model: NeuronModel, x) -> float:
    return float(np.sum(intensities(model, x)))


def _evaluate(f: Callable, y: np.ndarray) -> float:
    try:
        v = f(y)
    except (KeyError, IndexError, LookupError) as exc:
        raise ObservableUndefined(f"observable undefined at {y.tolist()}") from exc
    v = float(v)
    if not math.isfinite(v):
        raise ObservableUndefined(f"observable is not finite at {y.tolist()}")
    return v


def _jump_differences(model: NeuronModel, f: Callable, x):
    x = np.array([float(v) for v in as_state(model, x, model.clip_rule == "receiver")])
    fx = _evaluate(f, x)
    rates = model.phi(x)
    diffs = np.array(
        [_evaluate(f, apply_jump(model, x, i)) - fx for i in range(model.n_neurons)]
    )
    return rates, diffs


def generator_apply(model: NeuronModel, f: Callable, x) -> float:
    """``Lf(x) = sum_i phi(x_i) (f(Delta_i x) - f(x))`` for a callable observable."""
    rates, diffs = _jump_differences(model, f, x)
    return float(np.dot(rates, diffs))


def carre_du_champ(model: NeuronModel, f: Callable, x) -> float:
    """``Gamma(f, f)(x) = 1/2 sum_i phi(x_i) (f(Delta_i x) - f(x))^2``."""
    rates, diffs = _jump_differences(model, f, x)
    return 0.5 * float(np.dot(rates, diffs * diffs))
