"""Finite filtered probability spaces represented as scenario trees.

Nodes are numbered in depth-first preorder, so the subtree of node ``n``
occupies the contiguous id range ``[n, n + size(n))`` and the leaves below
any node form a contiguous block of the leaf ordering.  Everything that is
``F_t``-measurable is stored as a *level array*: one entry per node of
depth ``t``, aligned with :meth:`ScenarioTree.depth_slice`.  Random
variables are level arrays at depth ``T`` (one value per leaf).  Functions
acting on level arrays accept arbitrary leading batch dimensions; the last
axis is always the node axis.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence

import numpy as np

from .exceptions import (
    DepthOutOfRange,
    InvalidPosition,
    MalformedSpec,
    NonPositiveProbability,
    ProbabilitySumMismatch,
    RaggedDepth,
    UnknownNode,
)

EPS_PROB = 1e-12


def normalised(ps, total):
    """``ps / total`` unless the sum is already 1 up to rounding.

    Leaving near-normalised vectors alone makes parsing idempotent, so
    serialised trees and measures re-parse bit for bit.
    """
    if abs(total - 1.0) <= 4 * len(ps) * np.finfo(float).eps:
        return ps
    return ps / total


def _readonly(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


class ScenarioTree:
    """Rooted tree with strictly positive reference transition probabilities.

    Use :func:`build_tree`, :func:`uniform_tree` or :func:`random_tree`
    rather than calling the constructor directly.  ``parent`` and ``p_cond``
    must already be in preorder; ``p_cond[n]`` is ``P(n | parent(n))`` and
    ``p_cond[0] == 1``.
    """

    def __init__(self, horizon: int, parent: Sequence[int], p_cond: Sequence[float]):
        parent = np.asarray(parent, dtype=np.int64)
        p_cond = np.asarray(p_cond, dtype=float)
        n = parent.shape[0]
        if n == 0 or parent[0] != -1 or np.any(parent[1:] < 0):
            raise MalformedSpec("node 0 must be the unique root")
        if np.any(parent[1:] >= np.arange(1, n)):
            raise MalformedSpec("nodes are not in preorder")
        if p_cond.shape != (n,):
            raise MalformedSpec("p_cond must have one entry per node")

        children: list[list[int]] = [[] for _ in range(n)]
        for c in range(1, n):
            children[parent[c]].append(c)
        depth = np.zeros(n, dtype=np.int64)
        for c in range(1, n):
            depth[c] = depth[parent[c]] + 1
        size = np.ones(n, dtype=np.int64)
        for c in range(n - 1, 0, -1):
            size[parent[c]] += size[c]
        for v in range(n):
            expect = v + 1
            for c in children[v]:
                if c != expect:
                    raise MalformedSpec("nodes are not in preorder")
                expect += size[c]

        is_leaf = np.array([not ch for ch in children])
        if horizon < 1:
            raise MalformedSpec(f"horizon must be >= 1, got {horizon}")
        bad = np.flatnonzero(is_leaf & (depth != horizon))
        if bad.size:
            raise RaggedDepth(
                f"leaf N{bad[0]} has depth {depth[bad[0]]}, expected {horizon}"
            )
        if np.any(depth > horizon):
            raise RaggedDepth("tree is deeper than its horizon")

        p_cond = p_cond.copy()
        p_cond[0] = 1.0
        for v in range(n):
            if not children[v]:
                continue
            ps = p_cond[children[v]]
            if np.any(~np.isfinite(ps)) or np.any(ps <= 0):
                raise NonPositiveProbability(f"node N{v} has a non-positive child probability")
            total = ps.sum()
            if abs(total - 1.0) > EPS_PROB:
                raise ProbabilitySumMismatch(
                    f"child probabilities of N{v} sum to {total!r}"
                )
            p_cond[children[v]] = normalised(ps, total)

        prob = np.ones(n)
        for c in range(1, n):
            prob[c] = prob[parent[c]] * p_cond[c]

        self.horizon = int(horizon)
        self.n_nodes = n
        self.parent = _readonly(parent)
        self.depth = _readonly(depth)
        self.size = _readonly(size)
        self.p_cond = _readonly(p_cond)
        self.prob = _readonly(prob)
        self._children = tuple(tuple(ch) for ch in children)
        self.levels = tuple(
            _readonly(np.flatnonzero(depth == t)) for t in range(self.horizon + 1)
        )
        self.leaves = self.levels[-1]
        self.n_leaves = self.leaves.shape[0]
        leaf_pos = np.full(n, -1, dtype=np.int64)
        leaf_pos[self.leaves] = np.arange(self.n_leaves)
        self.leaf_pos = _readonly(leaf_pos)
        self._group_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def __repr__(self):
        return f"ScenarioTree(horizon={self.horizon}, nodes={self.n_nodes}, leaves={self.n_leaves})"

    def __eq__(self, other):
        if not isinstance(other, ScenarioTree):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and np.array_equal(self.parent, other.parent)
            and np.array_equal(self.p_cond, other.p_cond)
        )

    __hash__ = None

    # ------------------------------------------------------------------ nodes

    def _check_node(self, node):
        if not 0 <= int(node) < self.n_nodes:
            raise UnknownNode(f"no node {node!r}")
        return int(node)

    def _check_depth(self, t):
        if not 0 <= int(t) <= self.horizon:
            raise DepthOutOfRange(f"depth {t} outside 0..{self.horizon}")
        return int(t)

    def children(self, node) -> tuple[int, ...]:
        return self._children[self._check_node(node)]

    def is_leaf(self, node) -> bool:
        return not self._children[self._check_node(node)]

    def depth_slice(self, t) -> np.ndarray:
        """Node ids at depth ``t``, in ascending (left-to-right) order."""
        return self.levels[self._check_depth(t)]

    def leaf_slice(self, node) -> slice:
        """Positions, in the leaf ordering, of the leaves below ``node``."""
        node = self._check_node(node)
        start = int(np.searchsorted(self.leaves, node))
        stop = int(np.searchsorted(self.leaves, node + self.size[node]))
        return slice(start, stop)

    def leaves_under(self, node) -> np.ndarray:
        return self.leaves[self.leaf_slice(node)]

    def level_index(self, node) -> int:
        """Position of ``node`` inside its depth slice."""
        node = self._check_node(node)
        return int(np.searchsorted(self.levels[self.depth[node]], node))

    # --------------------------------------------------------- level algebra

    def groups(self, t, u) -> tuple[np.ndarray, np.ndarray]:
        """For each depth-``t`` node, where its depth-``u`` descendants start in
        the depth-``u`` slice and how many there are."""
        t, u = self._check_depth(t), self._check_depth(u)
        if u < t:
            raise DepthOutOfRange(f"depth {u} precedes {t}")
        key = (t, u)
        if key not in self._group_cache:
            lt, lu = self.levels[t], self.levels[u]
            starts = np.searchsorted(lu, lt)
            stops = np.searchsorted(lu, lt + self.size[lt])
            self._group_cache[key] = (_readonly(starts), _readonly(stops - starts))
        return self._group_cache[key]

    def broadcast(self, values, t, u) -> np.ndarray:
        """Copy a depth-``t`` level array onto the depth-``u`` descendants."""
        _, counts = self.groups(t, u)
        return np.repeat(np.asarray(values, dtype=float), counts, axis=-1)

    def lift(self, values, t) -> np.ndarray:
        """An ``F_t``-measurable level array as a random variable on the leaves."""
        return self.broadcast(values, t, self.horizon)

    def aggregate(self, values, u, t) -> np.ndarray:
        """Sum a depth-``u`` level array over the descendants of each depth-``t`` node."""
        starts, _ = self.groups(t, u)
        return np.add.reduceat(np.asarray(values, dtype=float), starts, axis=-1)

    def group_max(self, values, u, t) -> np.ndarray:
        starts, _ = self.groups(t, u)
        return np.maximum.reduceat(np.asarray(values, dtype=float), starts, axis=-1)

    def cond_weights(self, t, u) -> np.ndarray:
        """``P(m | ancestor of m at depth t)`` for every depth-``u`` node ``m``."""
        return self.prob[self.levels[u]] / self.broadcast(self.prob[self.levels[t]], t, u)

    def expect(self, values, u, t) -> np.ndarray:
        """``E_P[Y | F_t]`` for an ``F_u``-measurable ``Y`` given at depth ``u``."""
        return self.aggregate(self.cond_weights(t, u) * values, u, t)

    def level_of(self, process, t) -> np.ndarray:
        """Restrict a node-indexed process (last axis of length ``n_nodes``) to depth ``t``."""
        return np.asarray(process)[..., self.depth_slice(t)]

    # ------------------------------------------------------------- subtrees

    def subtree(self, node) -> ScenarioTree:
        """The subtree rooted at ``node``, renumbered so that local id ``i`` is
        global id ``node + i``."""
        node = self._check_node(node)
        if self.depth[node] == self.horizon:
            raise DepthOutOfRange("a leaf has no non-trivial subtree")
        sl = slice(node, node + self.size[node])
        parent = self.parent[sl] - node
        parent[0] = -1
        p_cond = self.p_cond[sl].copy()
        p_cond[0] = 1.0
        return ScenarioTree(self.horizon - int(self.depth[node]), parent, p_cond)

    # ---------------------------------------------------------------- labels

    @staticmethod
    def node_label(node) -> str:
        return f"N{int(node)}"

    @staticmethod
    def leaf_label(pos) -> str:
        return f"L{int(pos)}"

    def parse_node_label(self, label: str) -> int:
        if not (isinstance(label, str) and label.startswith("N") and label[1:].isdigit()):
            raise UnknownNode(f"bad node id {label!r}")
        return self._check_node(int(label[1:]))

    def parse_leaf_label(self, label: str) -> int:
        if not (isinstance(label, str) and label.startswith("L") and label[1:].isdigit()):
            raise UnknownNode(f"bad leaf id {label!r}")
        pos = int(label[1:])
        if not 0 <= pos < self.n_leaves:
            raise UnknownNode(f"no leaf {label!r}")
        return pos

    def to_spec(self) -> dict:
        """Inverse of :func:`build_tree`."""

        def node_spec(v):
            ch = self._children[v]
            if not ch:
                return {}
            return {"p": [float(self.p_cond[c]) for c in ch], "children": [node_spec(c) for c in ch]}

        return {"horizon": self.horizon, "root": node_spec(0)}


def build_tree(spec: Mapping) -> ScenarioTree:
    """Build and validate a tree from its JSON description.

    ``{"horizon": T, "root": node}`` where a leaf is ``{}`` and an internal
    node is ``{"p": [...], "children": [...]}``.
    """
    if not isinstance(spec, Mapping) or "horizon" not in spec or "root" not in spec:
        raise MalformedSpec("tree spec needs 'horizon' and 'root'")
    horizon = spec["horizon"]
    if isinstance(horizon, bool) or not isinstance(horizon, int):
        raise MalformedSpec(f"horizon must be an integer, got {horizon!r}")
    if horizon < 1:
        raise MalformedSpec(f"horizon must be >= 1, got {horizon}")

    parent: list[int] = []
    p_cond: list[float] = []
    # explicit stack keeps preorder without recursion
    stack = [(spec["root"], -1, 1.0)]
    while stack:
        node, par, p = stack.pop()
        if not isinstance(node, Mapping):
            raise MalformedSpec(f"node must be an object, got {type(node).__name__}")
        me = len(parent)
        parent.append(par)
        p_cond.append(p)
        kids = node.get("children", [])
        probs = node.get("p", [])
        if not isinstance(kids, list) or not isinstance(probs, list):
            raise MalformedSpec(f"node N{me}: 'p' and 'children' must be lists")
        if len(kids) != len(probs):
            raise MalformedSpec(f"node N{me}: {len(probs)} probabilities for {len(kids)} children")
        for q in probs:
            if isinstance(q, bool) or not isinstance(q, (int, float)):
                raise MalformedSpec(f"node N{me}: probability {q!r} is not a number")
        for kid, q in reversed(list(zip(kids, probs))):
            stack.append((kid, me, float(q)))
        if len(parent) > 10_000_000:
            raise MalformedSpec("tree too large")

    # depth check before the constructor so the message names the offending branch
    depth = [0] * len(parent)
    for c in range(1, len(parent)):
        depth[c] = depth[parent[c]] + 1
        if depth[c] > horizon:
            raise RaggedDepth(f"node N{c} lies below the horizon {horizon}")
    return ScenarioTree(horizon, parent, p_cond)


def uniform_tree(branching, horizon: int | None = None) -> ScenarioTree:
    """Tree with uniform transition probabilities.

    ``branching`` is either an int (used at every depth, requires ``horizon``)
    or a sequence with the number of children per depth.
    """
    if isinstance(branching, int):
        if horizon is None:
            raise ValueError("horizon is required with a scalar branching factor")
        branching = [branching] * horizon
    branching = list(branching)

    def node(d):
        if d == len(branching):
            return {}
        k = branching[d]
        return {"p": [1.0 / k] * k, "children": [node(d + 1) for _ in range(k)]}

    return build_tree({"horizon": len(branching), "root": node(0)})


def random_tree(rng: np.random.Generator, horizon: int, max_branching: int = 3,
                min_branching: int = 1) -> ScenarioTree:
    """Random tree with i.i.d. branching factors and Dirichlet(1) probabilities."""

    def node(d):
        if d == horizon:
            return {}
        k = int(rng.integers(min_branching, max_branching + 1))
        p = rng.dirichlet(np.ones(k)) if k > 1 else np.ones(1)
        # keep P strictly positive and well away from denormals
        p = 0.05 / k + 0.95 * p
        return {"p": list(p / p.sum()), "children": [node(d + 1) for _ in range(k)]}

    return build_tree({"horizon": horizon, "root": node(0)})


def as_position(tree: ScenarioTree, X) -> np.ndarray:
    """Validate a random variable (one finite value per leaf)."""
    X = np.asarray(X, dtype=float)
    if X.shape[-1:] != (tree.n_leaves,):
        raise InvalidPosition(f"expected {tree.n_leaves} leaf values, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidPosition("positions must be finite")
    return X
