"""Dynamic convex risk measures as evaluable families ``(rho_t)_{t<=T}``.

Three variants are provided: the conditional entropic risk measure with an
adapted risk-aversion process, conditional Average Value at Risk with an
adapted level process, and the backward recursive composition of any base
family.  Parameters are either a scalar (constant over the tree) or a
node-indexed array; only the entries at depths ``0..T-1`` matter.

Every evaluator is written for ``F_u``-measurable payoffs given as depth-``u``
level arrays; the usual terminal-payoff case is ``u = T``.  Leading batch
dimensions are supported throughout.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .exceptions import DepthOutOfRange, InvalidFamily, OverflowGuard
from .filtration import ScenarioTree, as_position

TOL_AS = 1e-9


def _resolve_param(value, tree: ScenarioTree, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(tree.n_nodes, float(arr))
    if arr.shape != (tree.n_nodes,):
        raise InvalidFamily(f"{name} has {arr.shape[0]} entries, tree has {tree.n_nodes} nodes")
    return arr


def _freeze_param(value):
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        return float(arr)
    if arr.ndim != 1:
        raise InvalidFamily("parameter must be a scalar or a node-indexed vector")
    arr.setflags(write=False)
    return arr


class RiskFamily(ABC):
    """A dynamic risk measure on a given tree."""

    variant: str

    @abstractmethod
    def evaluate_level(self, tree: ScenarioTree, Y, u: int, t: int) -> np.ndarray:
        """``rho_t(Y)`` for ``Y`` given at depth ``u >= t``."""

    def evaluate(self, tree: ScenarioTree, X, t: int) -> np.ndarray:
        return self.evaluate_level(tree, as_position(tree, X), tree.horizon, t)

    def process(self, tree: ScenarioTree, X) -> np.ndarray:
        """Node-indexed risk process ``(rho_t(X))_t``."""
        X = as_position(tree, X)
        out = np.empty(X.shape[:-1] + (tree.n_nodes,))
        for t in range(tree.horizon + 1):
            out[..., tree.levels[t]] = self.evaluate_level(tree, X, tree.horizon, t)
        return out

    def base_step(self) -> RiskFamily:
        """Family whose one-period restriction equals this family's."""
        return self

    @abstractmethod
    def restrict(self, tree: ScenarioTree, node: int) -> RiskFamily:
        """The same family on ``tree.subtree(node)``."""

    @staticmethod
    def _depths(tree: ScenarioTree, u: int, t: int):
        tree._check_depth(t)
        tree._check_depth(u)
        if u < t:
            raise DepthOutOfRange(f"payoff depth {u} precedes evaluation depth {t}")


@dataclass(frozen=True, eq=False)
class Entropic(RiskFamily):
    """``rho_t(X) = (1/gamma_t) log E[exp(-gamma_t X) | F_t]``."""

    gamma: float | np.ndarray = 1.0
    variant = "entropic"

    def __post_init__(self):
        g = _freeze_param(self.gamma)
        if not np.all(np.isfinite(g)) or np.any(np.asarray(g) <= 0):
            raise InvalidFamily("risk aversion must be finite and > 0 at every node")
        object.__setattr__(self, "gamma", g)

    def params(self, tree: ScenarioTree) -> np.ndarray:
        return _resolve_param(self.gamma, tree, "gamma")

    def evaluate_level(self, tree, Y, u, t):
        self._depths(tree, u, t)
        Y = np.asarray(Y, dtype=float)
        if u == t:
            return -Y
        g = self.params(tree)[tree.levels[t]]
        a = -tree.broadcast(g, t, u) * Y
        shift = tree.group_max(a, u, t)
        w = tree.cond_weights(t, u)
        # dividing by the rounded weight sum keeps constants exact
        s = tree.aggregate(w * np.exp(a - tree.broadcast(shift, t, u)), u, t) / tree.aggregate(w, u, t)
        out = (shift + np.log(s)) / g
        if not np.all(np.isfinite(out)):
            raise OverflowGuard("entropic evaluation produced a non-finite value")
        return out

    def weights_level(self, tree, Y, u, t) -> np.ndarray:
        """Gibbs weights ``P(m|n) exp(-gamma_t Y_m) / E[exp(-gamma_t Y) | F_t]``.

        These are the conditional transition weights of the measure attaining
        the dual representation of ``rho_t(Y)``.
        """
        self._depths(tree, u, t)
        g = self.params(tree)[tree.levels[t]]
        a = -tree.broadcast(g, t, u) * np.asarray(Y, dtype=float)
        e = tree.cond_weights(t, u) * np.exp(a - tree.broadcast(tree.group_max(a, u, t), t, u))
        return e / tree.broadcast(tree.aggregate(e, u, t), t, u)

    def restrict(self, tree, node):
        if isinstance(self.gamma, float):
            return self
        return Entropic(self.gamma[node:node + tree.size[node]])

    def is_constant(self, tree: ScenarioTree, tol: float = 0.0) -> bool:
        g = self.params(tree)[tree.depth < tree.horizon]
        return bool(np.ptp(g) <= tol)


def greedy_weights(y, caps) -> np.ndarray:
    """Maximiser of ``sum w_i (-y_i)`` over ``0 <= w_i <= caps_i``, ``sum w = 1``.

    Fills the worst outcomes (smallest ``y``) first; ties are filled in index
    order.  ``y`` may carry leading batch dimensions.  Requires ``sum caps >= 1``.
    """
    y = np.asarray(y, dtype=float)
    caps = np.broadcast_to(np.asarray(caps, dtype=float), y.shape)
    order = np.argsort(y, axis=-1, kind="stable")
    cs = np.take_along_axis(caps, order, axis=-1)
    before = np.cumsum(cs, axis=-1) - cs
    ws = np.clip(1.0 - before, 0.0, cs)
    w = np.empty_like(ws)
    np.put_along_axis(w, order, ws, axis=-1)
    return w


@dataclass(frozen=True, eq=False)
class AVaR(RiskFamily):
    """Conditional Average Value at Risk at level ``lam_t`` in ``(0, 1]``.

    ``rho_t(X)`` is the largest ``E_Q[-X | F_t]`` over measures that agree with
    ``P`` on ``F_t`` and whose density is capped by ``1 / lam_t``.
    """

    lam: float | np.ndarray = 0.5
    variant = "avar"

    def __post_init__(self):
        lam = _freeze_param(self.lam)
        arr = np.asarray(lam)
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0) or np.any(arr > 1):
            raise InvalidFamily("AVaR levels must lie in (0, 1]")
        object.__setattr__(self, "lam", lam)

    def params(self, tree: ScenarioTree) -> np.ndarray:
        return _resolve_param(self.lam, tree, "lam")

    def restrict(self, tree, node):
        if isinstance(self.lam, float):
            return self
        return AVaR(self.lam[node:node + tree.size[node]])

    def weights_level(self, tree, Y, u, t) -> np.ndarray:
        """Optimal conditional weights on the depth-``u`` nodes, grouped by depth-``t`` ancestor."""
        self._depths(tree, u, t)
        Y = np.asarray(Y, dtype=float)
        lam = self.params(tree)[tree.levels[t]]
        caps = tree.cond_weights(t, u) / tree.broadcast(lam, t, u)
        starts, counts = tree.groups(t, u)
        w = np.empty(Y.shape)
        for s, c in zip(starts, counts):
            w[..., s:s + c] = greedy_weights(Y[..., s:s + c], caps[s:s + c])
        return w

    def evaluate_level(self, tree, Y, u, t):
        self._depths(tree, u, t)
        Y = np.asarray(Y, dtype=float)
        if u == t:
            return -Y
        return tree.aggregate(self.weights_level(tree, Y, u, t) * -Y, u, t)


@dataclass(frozen=True, eq=False)
class Composed(RiskFamily):
    """Recursive composition ``rho~_T = -X``, ``rho~_t = rho_t(-rho~_{t+1})``."""

    base: RiskFamily
    variant = "composed"

    def __post_init__(self):
        if not isinstance(self.base, RiskFamily):
            raise InvalidFamily("composed family needs a base risk family")

    def base_step(self):
        return self.base.base_step()

    def restrict(self, tree, node):
        return Composed(self.base.restrict(tree, node))

    def evaluate_level(self, tree, Y, u, t):
        self._depths(tree, u, t)
        step = self.base_step()
        v = -np.asarray(Y, dtype=float)
        for s in range(u - 1, t - 1, -1):
            v = step.evaluate_level(tree, -v, s + 1, s)
        return v

    def process(self, tree, X):
        X = as_position(tree, X)
        step = self.base_step()
        out = np.empty(X.shape[:-1] + (tree.n_nodes,))
        v = -X
        out[..., tree.leaves] = v
        for s in range(tree.horizon - 1, -1, -1):
            v = step.evaluate_level(tree, -v, s + 1, s)
            out[..., tree.levels[s]] = v
        return out


def compose_recursive(base: RiskFamily) -> Composed:
    return Composed(base)


def evaluate(family: RiskFamily, tree: ScenarioTree, X, t: int) -> np.ndarray:
    """``rho_t(X)`` at every depth-``t`` node."""
    return family.evaluate(tree, X, t)


def risk_process(family: RiskFamily, tree: ScenarioTree, X) -> np.ndarray:
    return family.process(tree, X)


def entropic_eval(gamma, tree: ScenarioTree, X, t: int) -> np.ndarray:
    return Entropic(gamma).evaluate(tree, X, t)


def avar_eval(lam, tree: ScenarioTree, X, t: int) -> np.ndarray:
    return AVaR(lam).evaluate(tree, X, t)


def accepts(family: RiskFamily, tree: ScenarioTree, X, t: int, tol: float = TOL_AS) -> np.ndarray:
    """Membership of ``X`` in the acceptance set ``{rho_t <= 0}``, per node."""
    return family.evaluate(tree, X, t) <= tol


def known_time_consistent(family: RiskFamily, tree: ScenarioTree) -> bool:
    """Families that are time consistent by construction or closed form."""
    if isinstance(family, Composed) or tree.horizon == 1:
        return True
    if isinstance(family, Entropic):
        return family.is_constant(tree)
    if isinstance(family, AVaR):
        return bool(np.all(family.params(tree)[tree.depth < tree.horizon] == 1.0))
    return False
