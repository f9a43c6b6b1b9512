"""Finite reachable state space, its jump graph and the generator matrix."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import StateSpaceTooLarge
from .model import NeuronModel, as_state, jump

DEFAULT_MAX_STATES = 200_000


@dataclass(frozen=True, eq=False)
class StateSpace:
    """States reachable from ``x0`` (index 0) with the jump map tabulated.

    Potentials are stored on an integer grid: ``keys[u][j] / scale`` is the
    potential of neuron ``j`` in state ``u``.  ``edges[u, i]`` is the index of
    the state reached when neuron ``i`` spikes from state ``u``.
    """

    model: NeuronModel
    scale: int
    keys: tuple
    edges: np.ndarray
    closed_classes: tuple

    @property
    def n_states(self) -> int:
        return len(self.keys)

    def __len__(self):
        return len(self.keys)

    @cached_property
    def index_of(self) -> dict:
        return {k: u for u, k in enumerate(self.keys)}

    @cached_property
    def states(self) -> np.ndarray:
        """Potentials as a float array of shape ``(n_states, N)``."""
        X = np.array(self.keys, dtype=float).reshape(len(self.keys), -1) / self.scale
        X.flags.writeable = False
        return X

    @cached_property
    def rates(self) -> np.ndarray:
        """``rates[u, i] = phi(x_u[i])``."""
        R = self.model.phi(self.states)
        R.flags.writeable = False
        return R

    @cached_property
    def total_rates(self) -> np.ndarray:
        return self.rates.sum(axis=1)

    @cached_property
    def recurrent_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.keys), dtype=bool)
        for c in self.closed_classes:
            mask[c] = True
        return mask

    def index(self, x) -> int:
        """Index of a potential vector (exact lookup)."""
        xs = as_state(self.model, x, check_bounds=False)
        key = tuple(v * self.scale for v in xs)
        if any(k.denominator != 1 for k in key):
            raise KeyError(f"{list(map(float, xs))} is off the state grid")
        try:
            return self.index_of[tuple(int(k) for k in key)]
        except KeyError:
            raise KeyError(f"{list(map(float, xs))} is not reachable") from None

    def edge_list(self) -> list:
        """``(source, neuron, target)`` triples, self-loops included."""
        S, N = self.edges.shape
        return [(u, i, int(self.edges[u, i])) for u in range(S) for i in range(N)]


def _grid_scale(model: NeuronModel, x0) -> int:
    dens = [model.ceiling.denominator]
    dens += [w.denominator for row in model.weights for w in row]
    dens += [v.denominator for v in x0]
    return math.lcm(*dens)


def enumerate_reachable(model: NeuronModel, x0, max_states: int = DEFAULT_MAX_STATES) -> StateSpace:
    """Breadth-first closure of ``{x0}`` under all jump maps.

    States are numbered in discovery order, neurons explored in index order.
    Raises :class:`StateSpaceTooLarge` once more than ``max_states`` states
    have been discovered.
    """
    xs = as_state(model, x0, check_bounds=True)
    scale = _grid_scale(model, xs)
    W = tuple(tuple(int(w * scale) for w in row) for row in model.weights)
    m = int(model.ceiling * scale)
    rule = model.clip_rule
    N = model.n_neurons

    start = tuple(int(v * scale) for v in xs)
    index = {start: 0}
    keys = [start]
    edges = []
    queue = deque([start])
    while queue:
        key = queue.popleft()
        row = []
        for i in range(N):
            nxt = jump(key, i, W, m, rule)
            v = index.get(nxt)
            if v is None:
                if len(keys) >= max_states:
                    raise StateSpaceTooLarge(
                        f"more than {max_states} reachable states; coarsen the weight grid"
                    )
                v = index[nxt] = len(keys)
                keys.append(nxt)
                queue.append(nxt)
            row.append(v)
        edges.append(row)
    E = np.array(edges, dtype=np.int64).reshape(len(keys), N)
    E.flags.writeable = False
    return StateSpace(model, scale, tuple(keys), E, _closed_classes(E))


def _jump_graph(edges: np.ndarray) -> sp.csr_matrix:
    S, N = edges.shape
    rows = np.repeat(np.arange(S), N)
    return sp.csr_matrix((np.ones(S * N), (rows, edges.ravel())), shape=(S, S))


def _closed_classes(edges: np.ndarray) -> tuple:
    S = edges.shape[0]
    n_comp, labels = connected_components(_jump_graph(edges), directed=True, connection="strong")
    leaves = np.zeros(n_comp, dtype=bool)
    src = np.repeat(np.arange(S), edges.shape[1])
    crossing = labels[src] != labels[edges.ravel()]
    leaves[np.unique(labels[src[crossing]])] = True
    classes = [np.flatnonzero(labels == c) for c in range(n_comp) if not leaves[c]]
    classes.sort(key=lambda c: c[0])
    for c in classes:
        c.flags.writeable = False
    return tuple(classes)


@dataclass(frozen=True, eq=False)
class RecurrentDomain:
    """Union of the closed communicating classes of the jump graph."""

    indices: np.ndarray
    classes: tuple

    @property
    def irreducible(self) -> bool:
        return len(self.classes) == 1


def recurrent_class(space: StateSpace) -> RecurrentDomain:
    """Closed communicating classes of the jump graph (the support of invariant laws).

    Several classes are reported, not raised; :func:`pjmp.engine.invariant_measure`
    refuses to pick one on its own.
    """
    idx = np.flatnonzero(space.recurrent_mask)
    return RecurrentDomain(idx, space.closed_classes)


def coordinate_support_bound(model: NeuronModel, x0) -> int:
    """Product over neurons of ``|(S_i U (x_i + S_i)) n [0, m]|``.

    ``S_i`` holds 0 and every finite sum of incoming weights of neuron ``i``;
    the product bounds the number of reachable states.
    """
    xs = as_state(model, x0, check_bounds=True)
    scale = _grid_scale(model, xs)
    m = int(model.ceiling * scale)
    total = 1
    for i in range(model.n_neurons):
        incoming = {int(model.weights[j][i] * scale) for j in range(model.n_neurons)} - {0}
        sums = {0}
        frontier = [0]
        while frontier:
            s = frontier.pop()
            for w in incoming:
                if s + w <= m and s + w not in sums:
                    sums.add(s + w)
                    frontier.append(s + w)
        xi = int(xs[i] * scale)
        total *= len(sums | {xi + s for s in sums if xi + s <= m})
    return total


def build_rate_matrix(model: NeuronModel, space: StateSpace) -> sp.csr_matrix:
    """Sparse generator ``Q``; rates of neurons sending ``u`` to the same ``v`` add up.

    A spike that leaves the state unchanged contributes nothing.
    """
    S, N = space.edges.shape
    src = np.repeat(np.arange(S), N)
    dst = space.edges.ravel()
    rate = space.rates.ravel()
    keep = src != dst
    off = sp.coo_matrix((rate[keep], (src[keep], dst[keep])), shape=(S, S)).tocsr()
    off.sum_duplicates()
    Q = off - sp.diags(np.asarray(off.sum(axis=1)).ravel())
    return sp.csr_matrix(Q)
