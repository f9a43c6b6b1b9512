"""Exact-in-law simulation of the network and Monte-Carlo estimators.

Two samplers live here.  :func:`sample_path` follows one trajectory in
exact arithmetic straight from the model (waiting time, spiking neuron,
jump map) and is the reference for path validity.  :func:`sample_endpoints`
simulates many paths at once on the enumerated state space and returns how
many ended in each state; the estimators only need those counts, which makes
the reduction an integer sum and therefore independent of scheduling.

Randomness comes from Philox streams keyed by ``(seed, block)``.  Paths are
cut into fixed blocks of ``BLOCK_SIZE``, so the draws of a path depend only
on the seed and its position, never on the number of workers.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .model import NeuronModel, as_state, jump
from .statespace import StateSpace, enumerate_reachable

BLOCK_SIZE = 4096


def stream(seed: int, key: int = 0, experiment: int = 0) -> np.random.Generator:
    """Counter-based generator for block ``key`` of experiment ``experiment`` under ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, experiment, key])))


@dataclass(frozen=True)
class PathSample:
    initial_state: tuple
    horizon: float
    jump_times: tuple = ()
    spiking_neuron: tuple = ()
    states: tuple = ()

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def state_at(self, t: float) -> tuple:
        """Potential vector at time ``t`` (right-continuous)."""
        k = int(np.searchsorted(self.jump_times, t, side="right"))
        return self.initial_state if k == 0 else self.states[k - 1]


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    n_paths: int
    seed: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "n_paths": self.n_paths, "seed": self.seed}


def sample_path(model: NeuronModel, x0, horizon: float, rng: np.random.Generator) -> PathSample:
    """One trajectory on ``[0, horizon]`` with exact potentials.

    From state ``x`` the holding time is exponential with rate
    ``sum_j phi(x_j)``; neuron ``i`` then spikes with probability
    ``phi(x_i) / sum_j phi(x_j)`` and the state becomes ``apply_jump(x, i)``.
    Spikes that leave the state unchanged are still recorded.
    """
    if not horizon >= 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    x = as_state(model, x0)
    times, neurons, states = [], [], []
    t = 0.0
    while True:
        rates = model.phi(np.array(x, dtype=float))
        total = float(rates.sum())
        t += rng.exponential(1.0 / total)
        if t > horizon:
            break
        i = int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
        i = min(i, model.n_neurons - 1)
        x = jump(x, i, model.weights, model.ceiling, model.clip_rule)
        times.append(t)
        neurons.append(i)
        states.append(x)
    return PathSample(as_state(model, x0), float(horizon), tuple(times), tuple(neurons), tuple(states))


def write_path_csv(path: PathSample, handle) -> None:
    """Rows ``time, neuron, x_0, ..., x_{N-1}``; the first row is the start (neuron empty)."""
    w = csv.writer(handle, lineterminator="\n")
    n = len(path.initial_state)
    w.writerow(["time", "neuron"] + [f"x{j}" for j in range(n)])
    w.writerow([0.0, ""] + [str(v) for v in path.initial_state])
    for t, i, x in zip(path.jump_times, path.spiking_neuron, path.states):
        w.writerow([repr(t), i] + [str(v) for v in x])


def _simulate_block(space: StateSpace, cum: np.ndarray, start: int, t: float, n: int, rng) -> np.ndarray:
    """End-state indices of ``n`` paths run to time ``t`` (vectorized Gillespie)."""
    state = np.full(n, start, dtype=np.int64)
    clock = rng.exponential(1.0, n) / space.total_rates[state]
    active = np.flatnonzero(clock <= t)
    N = cum.shape[1]
    while active.size:
        s = state[active]
        u = rng.random(active.size)
        neuron = np.minimum((cum[s] <= u[:, None]).sum(axis=1), N - 1)
        s = space.edges[s, neuron]
        state[active] = s
        clock[active] += rng.exponential(1.0, active.size) / space.total_rates[s]
        active = active[clock[active] <= t]
    return state


def sample_endpoints(space: StateSpace, x_index: int, t: float, n_paths: int, seed: int,
                     workers: int = 1, block_size: int = BLOCK_SIZE, substream: int = 0) -> np.ndarray:
    """Number of the ``n_paths`` simulated paths that sit in each state at time ``t``.

    ``substream`` separates independent experiments sharing one seed.
    """
    if not t >= 0:
        raise ValueError(f"t must be >= 0, got {t}")
    rates = space.rates
    cum = np.cumsum(rates, axis=1) / space.total_rates[:, None]
    sizes = [min(block_size, n_paths - b * block_size) for b in range(math.ceil(n_paths / block_size))]

    def run(b):
        ends = _simulate_block(space, cum, x_index, t, sizes[b], stream(seed, b, substream))
        return np.bincount(ends, minlength=space.n_states)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        counts = list(pool.map(run, range(len(sizes))))
    return np.sum(counts, axis=0, dtype=np.int64) if counts else np.zeros(space.n_states, dtype=np.int64)


def _values_on(space: StateSpace, f) -> np.ndarray:
    if callable(f):
        X = space.states
        try:
            v = np.asarray(f(X), dtype=float)
            if v.shape == (space.n_states,):
                return v
        except Exception:
            pass
        return np.array([float(f(x)) for x in X])
    v = np.asarray(f, dtype=float)
    if v.shape != (space.n_states,):
        raise ValueError(f"observable needs {space.n_states} values, got shape {v.shape}")
    return v


def _central_moments(counts, values):
    n = int(counts.sum())
    seen = values[counts > 0]
    if seen.size and np.all(seen == seen[0]):
        return n, float(seen[0]), 0.0, 0.0
    mean = math.fsum(counts * values) / n
    d = values - mean
    m2 = math.fsum(counts * d**2) / n
    m4 = math.fsum(counts * d**4) / n
    return n, mean, m2, m4


def expectation_from_counts(counts, values, seed=0) -> Estimate:
    n, mean, m2, _ = _central_moments(np.asarray(counts), np.asarray(values, dtype=float))
    s2 = m2 * n / (n - 1)
    return Estimate(mean, math.sqrt(max(s2, 0.0) / n), n, seed)


def variance_from_counts(counts, values, seed=0) -> Estimate:
    """Unbiased sample variance; its standard error uses the fourth central moment."""
    n, _, m2, m4 = _central_moments(np.asarray(counts), np.asarray(values, dtype=float))
    s2 = m2 * n / (n - 1)
    var_s2 = (m4 - m2**2 * (n - 3) / (n - 1)) / n
    return Estimate(s2, math.sqrt(max(var_s2, 0.0)), n, seed)


def _prepare(model, x0, space):
    if space is None:
        space = enumerate_reachable(model, x0)
    return space, space.index(x0)


def estimate_expectation(model: NeuronModel, f, t: float, x0, n_paths: int, seed: int,
                         workers: int = 1, space: StateSpace | None = None) -> Estimate:
    """Monte-Carlo estimate of ``E f(X_t)`` started from ``x0``.

    ``f`` is either a callable on potential vectors or an array of values
    on the states of ``space``.
    """
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    space, x = _prepare(model, x0, space)
    counts = sample_endpoints(space, x, t, n_paths, seed, workers)
    return expectation_from_counts(counts, _values_on(space, f), seed)


def estimate_variance(model: NeuronModel, f, t: float, x0, n_paths: int, seed: int,
                      workers: int = 1, space: StateSpace | None = None) -> Estimate:
    """Monte-Carlo estimate of ``Var f(X_t)`` started from ``x0``."""
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    space, x = _prepare(model, x0, space)
    counts = sample_endpoints(space, x, t, n_paths, seed, workers)
    return variance_from_counts(counts, _values_on(space, f), seed)


def chi_square_fit(counts, probs, min_expected: float = 5.0):
    """Goodness of fit of endpoint counts against an exact distribution row.

    States are sorted by expected count and the smallest are pooled until
    every bin expects at least ``min_expected`` paths.  Returns
    ``(statistic, p_value, n_bins)``.
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    probs = probs / probs.sum()
    n = counts.sum()
    order = np.argsort(probs, kind="stable")
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for k in order:
        acc_o += counts[k]
        acc_e += probs[k] * n
        if acc_e >= min_expected:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if exp:
            obs[-1] += acc_o
            exp[-1] += acc_e
        else:
            obs.append(acc_o)
            exp.append(acc_e)
    if len(exp) < 2:
        return 0.0, 1.0, len(exp)
    res = stats.chisquare(obs, exp)
    return float(res.statistic), float(res.pvalue), len(exp)


def sample_thinning_path(model: NeuronModel, x0, horizon: float, rng: np.random.Generator) -> tuple:
    """End state of one path built by thinning a Poisson clock of rate ``N phi(m)``.

    Each neuron carries its own clock of rate ``phi(m)``; a ring of neuron
    ``i`` is kept with probability ``phi(x_i) / phi(m)``.
    """
    x = as_state(model, x0)
    peak = float(model.phi_max)
    N = model.n_neurons
    t = rng.exponential(1.0 / (N * peak))
    while t <= horizon:
        i = int(rng.integers(N))
        if rng.random() * peak < float(model.phi(np.array([float(x[i])]))[0]):
            x = jump(x, i, model.weights, model.ceiling, model.clip_rule)
        t += rng.exponential(1.0 / (N * peak))
    return x
