"""Minimal penalty functions and the robust (dual) representation.

Closed forms are available for every family in :mod:`risktree.risk`:

* entropic: ``alpha_t(Q) = H_t(Q|P) / gamma_t``;
* AVaR: 0 where the conditional density ``Z_T / Z_t`` stays below
  ``1 / lam_t`` and ``+inf`` elsewhere;
* composed: the backward sum of one-step penalties of the base family.

Penalties are level arrays with ``+inf`` allowed.  At nodes where
``Z_t = 0`` every conditional quantity, penalties included, is 0.
:func:`generic_penalty_oracle` computes the same quantity by direct search
over positions, independently of these formulas.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .exceptions import BudgetExceeded, DepthOutOfRange, InvalidFamily
from .filtration import ScenarioTree, as_position
from .measure import Measure, _cond_weights, cond_expectation, node_mass, relative_entropy
from .risk import AVaR, Composed, Entropic, RiskFamily

# relative slack on density caps; the cap itself counts as feasible
RATIO_RTOL = 1e-9


def _null_mask(tree: ScenarioTree, Q: Measure, t: int) -> np.ndarray:
    return node_mass(tree, Q)[tree.levels[t]] == 0


def q_expect(tree: ScenarioTree, Q: Measure, values, u: int, t: int) -> np.ndarray:
    """``E_Q[Y | F_t]`` for an extended-real ``Y`` given at depth ``u``.

    ``+inf`` on a set of positive conditional mass gives ``+inf``; values on
    ``Q``-null nodes never contribute.
    """
    w = _cond_weights(tree, node_mass(tree, Q), t, u)
    values = np.asarray(values, dtype=float)
    terms = np.zeros(np.broadcast_shapes(w.shape, values.shape))
    np.multiply(w, values, out=terms, where=w > 0)
    return tree.aggregate(terms, u, t)


def entropic_penalty(gamma, tree: ScenarioTree, Q: Measure, t: int) -> np.ndarray:
    """``H_t(Q|P) / gamma_t`` at depth ``t``."""
    return penalty_window(Entropic(gamma), tree, Q, t, tree.horizon)


def avar_penalty(lam, tree: ScenarioTree, Q: Measure, t: int) -> np.ndarray:
    """0 where ``Z_T / Z_t <= 1 / lam_t`` on the whole subtree, ``+inf`` otherwise."""
    return penalty_window(AVaR(lam), tree, Q, t, tree.horizon)


def penalty_window(family: RiskFamily, tree: ScenarioTree, Q: Measure, t: int, u: int) -> np.ndarray:
    """Minimal penalty ``alpha_{t,u}(Q)`` of ``rho_t`` restricted to ``F_u``-measurable payoffs.

    ``u = T`` gives the minimal penalty ``alpha_t(Q)``; ``u = t + 1`` the
    one-step penalty.
    """
    tree._check_depth(t)
    tree._check_depth(u)
    if u < t:
        raise DepthOutOfRange(f"window end {u} precedes {t}")
    n_t = tree.levels[t].shape[0]
    if u == t:
        return np.zeros(n_t)

    if isinstance(family, Entropic):
        out = relative_entropy(tree, Q, t, u) / family.params(tree)[tree.levels[t]]
    elif isinstance(family, AVaR):
        lam = tree.broadcast(family.params(tree)[tree.levels[t]], t, u)
        ratio_ok = _cond_weights(tree, node_mass(tree, Q), t, u) * lam <= tree.cond_weights(t, u) * (1 + RATIO_RTOL)
        bad = tree.aggregate((~ratio_ok).astype(float), u, t) > 0
        out = np.where(bad, np.inf, 0.0)
    elif isinstance(family, Composed):
        step = family.base_step()
        acc = np.zeros(tree.levels[u].shape[0])
        for s in range(u - 1, t - 1, -1):
            acc = penalty_window(step, tree, Q, s, s + 1) + q_expect(tree, Q, acc, s + 1, s)
        out = acc
    else:
        raise InvalidFamily(f"no closed-form penalty for {type(family).__name__}")
    return np.where(_null_mask(tree, Q, t), 0.0, out)


def minimal_penalty(family: RiskFamily, tree: ScenarioTree, Q: Measure, t: int) -> np.ndarray:
    """Closed-form minimal penalty ``alpha_t^min(Q)`` at depth ``t``."""
    return penalty_window(family, tree, Q, t, tree.horizon)


def one_step_penalty(family: RiskFamily, tree: ScenarioTree, Q: Measure, t: int) -> np.ndarray:
    if t >= tree.horizon:
        raise DepthOutOfRange("one-step penalties need t < T")
    return penalty_window(family.base_step(), tree, Q, t, t + 1)


def composed_penalty(family: Composed, tree: ScenarioTree, Q: Measure, t: int) -> np.ndarray:
    if not isinstance(family, Composed):
        raise InvalidFamily("composed_penalty needs a Composed family")
    return penalty_window(family, tree, Q, t, tree.horizon)


def penalty_process(family: RiskFamily, tree: ScenarioTree, Q: Measure) -> np.ndarray:
    """Node-indexed process ``(alpha_t^min(Q))_t``."""
    out = np.zeros(tree.n_nodes)
    for t in range(tree.horizon + 1):
        out[tree.levels[t]] = minimal_penalty(family, tree, Q, t)
    return out


# --------------------------------------------------------------------------
# brute-force oracle

@dataclass
class OracleResult:
    """Lower bounds on ``alpha_t^min(Q)`` found by search, per depth-``t`` node."""

    value: np.ndarray
    step: np.ndarray
    argmax: list = field(default_factory=list)


def _local_measure(tree: ScenarioTree, Q: Measure, node: int) -> Measure:
    q = np.array(Q.q[node:node + tree.size[node]])
    q[0] = 1.0
    return Measure(q)


def generic_penalty_oracle(family: RiskFamily, tree: ScenarioTree, Q: Measure, t: int,
                           B: float = 20.0, grid: int = 9, sweeps: int = 200,
                           min_step: float = 1e-6, max_leaves: int = 6,
                           chunk: int = 1 << 16) -> OracleResult:
    """Maximise ``E_Q[-X|F_t] - rho_t(X)`` over ``X`` in ``[-B, B]^leaves``.

    A full grid with ``grid`` points per coordinate seeds a coordinate-ascent
    pattern search whose step halves whenever a sweep brings no improvement;
    improving sweeps are followed by extrapolation along their displacement.
    The returned values are attained objectives, hence certified lower bounds
    on the minimal penalty.  Only the evaluator ``rho_t`` is used.
    """
    tree._check_depth(t)
    level = tree.levels[t]
    value = np.zeros(level.shape[0])
    steps = np.zeros(level.shape[0])
    argmax: list = [None] * level.shape[0]
    if t == tree.horizon:
        return OracleResult(value, steps, argmax)
    mass = node_mass(tree, Q)
    for i, n in enumerate(level):
        if mass[n] == 0:
            continue
        sub = tree.subtree(n)
        if sub.n_leaves > max_leaves:
            raise BudgetExceeded(f"{tree.node_label(n)} has {sub.n_leaves} leaves (budget {max_leaves})")
        fam = family.restrict(tree, n)
        wq = node_mass(sub, _local_measure(tree, Q, n))[sub.leaves]

        def objective(xs):
            return -(xs @ wq) - fam.evaluate_level(sub, xs, sub.horizon, 0)[..., 0]

        k = sub.n_leaves
        pts = np.linspace(-B, B, grid)
        best_f, best_x = -np.inf, None
        combos = itertools.product(pts, repeat=k)
        while True:
            block = np.array(list(itertools.islice(combos, chunk)), dtype=float)
            if block.size == 0:
                break
            f = objective(block)
            j = int(np.argmax(f))
            if f[j] > best_f:
                best_f, best_x = float(f[j]), block[j].copy()

        h = (pts[1] - pts[0]) / 2 if grid > 1 else B / 2
        offsets = np.arange(-4, 5, dtype=float)
        for _ in range(sweeps):
            if h < min_step:
                break
            improved = False
            base_x = best_x
            for c in range(k):
                cand = np.repeat(best_x[None, :], offsets.size, axis=0)
                cand[:, c] = np.clip(best_x[c] + h * offsets, -B, B)
                f = objective(cand)
                j = int(np.argmax(f))
                if f[j] > best_f + 1e-15:
                    best_f, best_x = float(f[j]), cand[j].copy()
                    improved = True
            if not improved:
                h /= 2
                continue
            # extrapolate along the last sweep's displacement while it pays
            move = best_x - base_x
            while True:
                cand = np.clip(best_x + move, -B, B)
                f = float(objective(cand[None, :])[0])
                if f <= best_f + 1e-15:
                    break
                best_f, best_x = f, cand
                move = 2 * move
        value[i] = max(best_f, 0.0)
        steps[i] = h
        argmax[i] = best_x
    return OracleResult(value, steps, argmax)


# --------------------------------------------------------------------------
# robust representation

class NotAttained:
    """Marker returned when no maximising measure was found."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NOT_ATTAINED"

    def __bool__(self):
        return False


NOT_ATTAINED = NotAttained()


@dataclass
class DualReport:
    """Outcome of evaluating the robust representation at depth ``t``.

    ``value`` is the dual objective ``E_Q[-X|F_t] - alpha_t(Q)`` at the
    maximiser, ``primal`` the direct evaluation, and ``gap`` the signed
    primal-minus-dual difference of largest magnitude.
    """

    t: int
    value: np.ndarray
    primal: np.ndarray
    maximizer: Measure
    gap: float


def maximizing_measure(family: RiskFamily, tree: ScenarioTree, X, t: int) -> Measure:
    """A measure equal to ``P`` on ``F_t`` attaining ``rho_t(X)`` at every depth-``t`` node.

    Entropic families use Gibbs weights, AVaR the greedy cap weights, and
    composed families nest the one-step maximisers of their base backward.
    """
    X = as_position(tree, X)
    if isinstance(family, Composed):
        step = family.base_step()
        if not isinstance(step, (Entropic, AVaR)):
            raise InvalidFamily(f"no maximiser for base {type(step).__name__}")
        values = family.process(tree, X)
        q = np.array(tree.p_cond)
        for s in range(t, tree.horizon):
            payoff = -values[tree.levels[s + 1]]
            q[tree.levels[s + 1]] = step.weights_level(tree, payoff, s + 1, s)
        return Measure.from_conditionals(tree, q, tol=1e-9)
    if isinstance(family, (Entropic, AVaR)):
        w = family.weights_level(tree, X, tree.horizon, t)
        masses = w * tree.lift(tree.prob[tree.levels[t]], t)
        return Measure.from_leaf_masses(tree, masses)
    raise InvalidFamily(f"no maximiser for {type(family).__name__}")


def robust_eval(family: RiskFamily, tree: ScenarioTree, X, t: int, tol: float = 1e-9) -> DualReport:
    """Evaluate ``rho_t(X)`` through its dual representation and compare with the primal.

    ``P`` is returned as maximiser whenever it attains the supremum.
    """
    X = as_position(tree, X)
    primal = family.evaluate(tree, X, t)
    P = Measure.reference(tree)
    if np.all(np.abs(cond_expectation(tree, P, -X, t) - primal) <= tol):
        Q = P
    else:
        Q = maximizing_measure(family, tree, X, t)
    value = cond_expectation(tree, Q, -X, t) - minimal_penalty(family, tree, Q, t)
    diff = primal - value
    gap = float(diff[np.argmax(np.abs(diff))])
    return DualReport(t, value, primal, Q, gap)


def worst_case_measure(family: RiskFamily, tree: ScenarioTree, X, tol: float = 1e-9):
    """A measure attaining the robust representation of ``rho_0(X)``, or ``NOT_ATTAINED``."""
    rep = robust_eval(family, tree, X, 0, tol=tol)
    if abs(rep.gap) <= tol:
        return rep.maximizer
    return NOT_ATTAINED
