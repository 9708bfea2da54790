"""Probability measures on a scenario tree and their conditional calculus.

A :class:`Measure` is stored as per-node transition probabilities
``q[n] = Q(n | parent(n))``.  Zeros are allowed; since the reference
measure has full support every such ``Q`` is absolutely continuous with
respect to ``P``.  Conditional quantities at a node with ``Z_t = 0`` are
defined to be 0, following ``E_Q[X|F_t] := E_P[Z_T X|F_t] / Z_t`` on
``{Z_t > 0}`` and 0 elsewhere.
"""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from .exceptions import DepthOutOfRange, InvalidMeasure
from .filtration import EPS_PROB, ScenarioTree, normalised


class Measure:
    """Transition probabilities of a measure ``Q << P`` (``q[0] == 1``)."""

    __slots__ = ("q",)

    def __init__(self, q):
        q = np.array(q, dtype=float)
        q.setflags(write=False)
        self.q = q

    def __eq__(self, other):
        if not isinstance(other, Measure):
            return NotImplemented
        return np.array_equal(self.q, other.q)

    __hash__ = None

    def __repr__(self):
        return f"Measure({np.array2string(self.q, precision=4)})"

    @classmethod
    def reference(cls, tree: ScenarioTree) -> Measure:
        """The reference measure ``P`` itself."""
        return cls(tree.p_cond)

    @classmethod
    def from_conditionals(cls, tree: ScenarioTree, q, tol: float = EPS_PROB) -> Measure:
        """Validate per-node transition probabilities and renormalise them."""
        q = np.array(q, dtype=float)
        if q.shape != (tree.n_nodes,):
            raise InvalidMeasure(f"expected {tree.n_nodes} transition probabilities, got {q.shape}")
        if not np.all(np.isfinite(q)) or np.any(q < 0):
            raise InvalidMeasure("transition probabilities must be finite and >= 0")
        q[0] = 1.0
        for v in range(tree.n_nodes):
            ch = tree.children(v)
            if not ch:
                continue
            total = q[list(ch)].sum()
            if abs(total - 1.0) > tol:
                raise InvalidMeasure(f"transition probabilities of N{v} sum to {total!r}")
            q[list(ch)] = normalised(q[list(ch)], total)
        return cls(q)

    @classmethod
    def from_edges(cls, tree: ScenarioTree, q_edge: Mapping) -> Measure:
        """Build from ``{"<nodeid>": [q1..qk]}`` covering every non-leaf node."""
        q = np.zeros(tree.n_nodes)
        q[0] = 1.0
        seen = set()
        for label, dist in q_edge.items():
            v = tree.parse_node_label(label)
            ch = tree.children(v)
            if not ch:
                raise InvalidMeasure(f"{label} is a leaf and has no transition distribution")
            if not isinstance(dist, (list, tuple)) or len(dist) != len(ch):
                raise InvalidMeasure(f"{label}: expected {len(ch)} probabilities")
            for x in dist:
                if isinstance(x, bool) or not isinstance(x, (int, float)):
                    raise InvalidMeasure(f"{label}: {x!r} is not a number")
            q[list(ch)] = dist
            seen.add(v)
        missing = [v for v in range(tree.n_nodes) if tree.children(v) and v not in seen]
        if missing:
            raise InvalidMeasure(f"no transition distribution for {tree.node_label(missing[0])}")
        return cls.from_conditionals(tree, q)

    @classmethod
    def from_leaf_masses(cls, tree: ScenarioTree, masses) -> Measure:
        """Measure with the given (non-negative, unit-sum) leaf masses.

        Transitions out of nodes of zero mass are taken from ``P``.
        """
        masses = np.asarray(masses, dtype=float)
        if masses.shape != (tree.n_leaves,) or np.any(masses < -EPS_PROB):
            raise InvalidMeasure("leaf masses must be a non-negative vector over the leaves")
        masses = np.clip(masses, 0.0, None)
        node_mass = np.zeros(tree.n_nodes)
        node_mass[tree.leaves] = masses
        for c in range(tree.n_nodes - 1, 0, -1):
            node_mass[tree.parent[c]] += node_mass[c]
        if abs(node_mass[0] - 1.0) > 1e-9:
            raise InvalidMeasure(f"leaf masses sum to {node_mass[0]!r}")
        q = np.array(tree.p_cond)
        par = tree.parent[1:]
        live = node_mass[par] > 0
        q[1:][live] = node_mass[1:][live] / node_mass[par][live]
        return cls.from_conditionals(tree, q, tol=1e-9)

    def edge(self, tree: ScenarioTree, node) -> np.ndarray:
        """Transition distribution out of ``node``."""
        return self.q[list(tree.children(node))]

    def to_edges(self, tree: ScenarioTree) -> dict[str, list[float]]:
        return {
            tree.node_label(v): [float(x) for x in self.edge(tree, v)]
            for v in range(tree.n_nodes)
            if tree.children(v)
        }


def node_mass(tree: ScenarioTree, Q: Measure) -> np.ndarray:
    """``Q(n)`` for every node (product of transitions along the root path)."""
    mass = np.ones(tree.n_nodes)
    for lv in tree.levels[1:]:
        mass[lv] = mass[tree.parent[lv]] * Q.q[lv]
    return mass


def density_process(tree: ScenarioTree, Q: Measure) -> np.ndarray:
    """Node-indexed density process ``Z_t = dQ/dP |F_t``."""
    return node_mass(tree, Q) / tree.prob


def _cond_weights(tree: ScenarioTree, mass: np.ndarray, t: int, u: int):
    """``Q(m | ancestor at t)`` for depth-``u`` nodes, 0 below null ancestors."""
    top = tree.broadcast(mass[tree.levels[t]], t, u)
    bottom = mass[tree.levels[u]]
    out = np.zeros_like(bottom)
    np.divide(bottom, top, out=out, where=top > 0)
    return out


def cond_expectation(tree: ScenarioTree, Q: Measure, X, t: int, u: int | None = None) -> np.ndarray:
    """``E_Q[Y | F_t]`` as a depth-``t`` level array.

    ``Y`` is ``F_u``-measurable, given at depth ``u`` (default: leaves).  The
    result is exactly 0 at nodes with ``Z_t = 0``.
    """
    u = tree.horizon if u is None else u
    tree._check_depth(t)
    if u < t:
        raise DepthOutOfRange(f"depth {u} precedes {t}")
    w = _cond_weights(tree, node_mass(tree, Q), t, u)
    return tree.aggregate(w * np.asarray(X, dtype=float), u, t)


def _log_density(tree: ScenarioTree, Q: Measure) -> np.ndarray:
    """``log Z`` per node; ``-inf`` on null nodes."""
    out = np.zeros(tree.n_nodes)
    with np.errstate(divide="ignore"):
        step = np.log(Q.q) - np.log(tree.p_cond)
    for lv in tree.levels[1:]:
        out[lv] = out[tree.parent[lv]] + step[lv]
    return out


def relative_entropy(tree: ScenarioTree, Q: Measure, t: int, u: int | None = None) -> np.ndarray:
    """Conditional relative entropy ``E_Q[log(Z_u / Z_t) | F_t]`` at depth ``t``.

    With the default ``u = T`` this is ``H_t(Q|P)``.  ``0 log 0 = 0``;
    the value is 0 at nodes with ``Z_t = 0``.
    """
    u = tree.horizon if u is None else u
    tree._check_depth(t)
    if u < t:
        raise DepthOutOfRange(f"depth {u} precedes {t}")
    mass = node_mass(tree, Q)
    w = _cond_weights(tree, mass, t, u)
    logz = _log_density(tree, Q)
    with np.errstate(invalid="ignore"):
        diff = logz[tree.levels[u]] - tree.broadcast(logz[tree.levels[t]], t, u)
    terms = np.zeros_like(w)
    np.multiply(w, diff, out=terms, where=w > 0)
    return np.maximum(tree.aggregate(terms, u, t), 0.0)


def paste(tree: ScenarioTree, Q1: Measure, Q2: Measure, t: int) -> Measure:
    """Follow ``Q1`` up to date ``t`` and ``Q2``'s transitions from ``t`` on."""
    tree._check_depth(t)
    q = np.where(tree.depth <= t, Q1.q, Q2.q)
    q[0] = 1.0
    return Measure(q)


def equals_on(tree: ScenarioTree, Q: Measure, R: Measure, t: int, tol: float = 1e-9) -> bool:
    """True iff ``Q`` and ``R`` agree on ``F_t`` (densities equal at depths <= t)."""
    tree._check_depth(t)
    keep = tree.depth <= t
    zq, zr = density_process(tree, Q), density_process(tree, R)
    return bool(np.all(np.abs(zq[keep] - zr[keep]) <= tol))


def sample_measure(tree: ScenarioTree, rng: np.random.Generator, zero_fraction: float = 0.0) -> Measure:
    """Random measure with Dirichlet(1) transitions.

    At each internal node with at least two children, with probability
    ``zero_fraction`` one randomly chosen child gets weight 0.
    """
    if not 0.0 <= zero_fraction < 1.0:
        raise ValueError("zero_fraction must lie in [0, 1)")
    q = np.ones(tree.n_nodes)
    for v in range(tree.n_nodes):
        ch = list(tree.children(v))
        if not ch:
            continue
        d = rng.dirichlet(np.ones(len(ch)))
        if len(ch) > 1 and rng.random() < zero_fraction:
            d[rng.integers(len(ch))] = 0.0
            d /= d.sum()
        q[ch] = d
    return Measure.from_conditionals(tree, q)
