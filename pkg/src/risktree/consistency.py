"""Randomised certification of the time-consistency hierarchy.

Every ``check_*`` function returns a :class:`ConsistencyReport`.  A passing
verdict means no sampled trial violated the property by more than the
tolerance; a failing one carries the trial with the largest violation as a
:class:`Witness`.  Comparisons involving ``+inf`` follow the usual order:
``+inf <= +inf`` holds, as does ``+inf == +inf``.

Positions are sampled as a structured set (zero, constants, signed node
indicators and their cash translates) followed by i.i.d. uniform draws on
``[-5, 5]``.  Measures are sampled as ``P``, robust maximisers of random
positions and Dirichlet draws, some with null branches.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .duality import (
    NOT_ATTAINED,
    maximizing_measure,
    minimal_penalty,
    one_step_penalty,
    penalty_process,
    penalty_window,
    q_expect,
    worst_case_measure,
)
from .exceptions import InfinitePenalty, InvalidFamily, NotTimeConsistent
from .filtration import ScenarioTree, as_position
from .measure import Measure, node_mass, paste, sample_measure
from .risk import TOL_AS, AVaR, Composed, Entropic, RiskFamily, greedy_weights, known_time_consistent


class Property(str, enum.Enum):
    TIME_CONSISTENT = "TimeConsistent"
    REJECTION_CONSISTENT = "RejectionConsistent"
    ACCEPTANCE_CONSISTENT = "AcceptanceConsistent"
    WEAK_ACCEPTANCE = "WeakAcceptance"
    WEAK_REJECTION = "WeakRejection"
    PENALTY_RECURSION = "PenaltyRecursion"
    SUPERMARTINGALE_V = "SupermartingaleV"
    RIESZ_DECOMPOSITION = "RieszDecomposition"
    SUSTAINABILITY = "Sustainability"
    PASTING_STABILITY = "PastingStability"


@dataclass
class Witness:
    """The trial with the largest violation: global node id, its depth and the signed gap."""

    t: int
    node: int
    gap: float
    position: np.ndarray | None = None
    measure: Measure | None = None
    process: np.ndarray | None = None


@dataclass
class ConsistencyReport:
    property: Property
    verdict: str
    witness: Witness | None
    trials: int
    tolerance: float
    certified: bool = False
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


class _Tracker:
    """Keeps the worst violation seen over a sequence of batched trials."""

    def __init__(self, tree: ScenarioTree, tol: float):
        self.tree = tree
        self.tol = tol
        self.trials = 0
        self.worst = -np.inf
        self.witness: Witness | None = None

    def update(self, violation, gap, t, positions=None, measure=None, process=None, count=None):
        violation = np.atleast_2d(np.asarray(violation, dtype=float))
        gap = np.broadcast_to(np.asarray(gap, dtype=float), violation.shape)
        self.trials += violation.shape[0] if count is None else count
        if violation.size == 0:
            return
        flat = np.nan_to_num(violation, nan=-np.inf)
        k, j = np.unravel_index(int(np.argmax(flat)), flat.shape)
        v = flat[k, j]
        if v > self.worst:
            self.worst = float(v)
            pos = None
            if positions is not None:
                positions = np.atleast_2d(positions)
                pos = np.array(positions[k if positions.shape[0] > 1 else 0])
            self.witness = Witness(int(t), int(self.tree.levels[t][j]), float(gap[k, j]),
                                   pos, measure, process)

    def report(self, prop: Property, certified: bool = False, **details) -> ConsistencyReport:
        failed = self.worst > self.tol
        return ConsistencyReport(
            prop, "fail" if failed else "pass", self.witness if failed else None,
            self.trials, self.tol, certified and not failed, details,
        )


def _seed(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


# -------------------------------------------------------------------- sampling

def sample_positions(tree: ScenarioTree, rng, n: int = 100, scale: float = 5.0) -> np.ndarray:
    """Structured positions followed by ``n`` uniform draws on ``[-scale, scale]``."""
    rng = _seed(rng)
    k = tree.n_leaves
    rows = [np.zeros(k), np.full(k, -1.0), np.full(k, 2.0)]
    for v in range(1, tree.n_nodes):
        ind = np.zeros(k)
        ind[tree.leaf_slice(v)] = 1.0
        rows += [ind, -ind, ind - 0.5]
    rows = np.array(rows)
    return np.vstack([rows, rng.uniform(-scale, scale, size=(n, k))])


def feasible_transition(caps, p, rng) -> np.ndarray:
    """Random distribution ``w`` with ``w <= caps``: a mix of ``p`` and a greedy vertex."""
    vertex = greedy_weights(rng.uniform(size=p.shape), caps)
    a = 1.0 if rng.random() < 0.3 else rng.random()
    return a * vertex + (1 - a) * p


def sample_zero_penalty_measure(tree: ScenarioTree, lam, rng, depths=None, base: Measure | None = None) -> Measure:
    """A measure whose one-step AVaR penalties vanish at the given depths.

    Transitions out of other depths are copied from ``base`` (default: a
    random Dirichlet measure).
    """
    rng = _seed(rng)
    lam = AVaR(lam).params(tree)
    depths = range(tree.horizon) if depths is None else depths
    q = np.array((base or sample_measure(tree, rng)).q)
    for t in depths:
        for n in tree.levels[t]:
            ch = list(tree.children(n))
            p = tree.p_cond[ch]
            q[ch] = feasible_transition(p / lam[n], p, rng)
    return Measure.from_conditionals(tree, q, tol=1e-9)


def sample_dual_measures(family: RiskFamily, tree: ScenarioTree, rng, n: int = 50) -> list[Measure]:
    """``P``, maximisers of random positions, zero-penalty measures for AVaR
    bases and Dirichlet draws (half of them with null branches)."""
    rng = _seed(rng)
    out = [Measure.reference(tree)]
    step = family.base_step()
    while len(out) < n:
        kind = len(out) % 4
        if kind == 1:
            X = rng.uniform(-5, 5, tree.n_leaves)
            try:
                out.append(maximizing_measure(family, tree, X, 0))
                continue
            except InvalidFamily:
                pass
        if kind == 2 and isinstance(step, AVaR):
            out.append(sample_zero_penalty_measure(tree, step.lam, rng))
            continue
        out.append(sample_measure(tree, rng, zero_fraction=0.3 if kind == 3 else 0.0))
    return out[:n]


# ------------------------------------------------------- primal recursion tests

def _recursion_gaps(family: RiskFamily, tree: ScenarioTree, X, t: int, u: int):
    inner = family.evaluate_level(tree, X, tree.horizon, u)
    nested = family.evaluate_level(tree, -inner, u, t)
    return nested - family.evaluate_level(tree, X, tree.horizon, t)


def check_recursive(family: RiskFamily, tree: ScenarioTree, n_samples: int = 100, rng=0,
                    tol: float = TOL_AS, positions=None) -> ConsistencyReport:
    """``rho_t(-rho_u(X)) == rho_t(X)`` for all ``t < u <= T``."""
    X = sample_positions(tree, rng, n_samples) if positions is None else as_position(tree, positions)
    tr = _Tracker(tree, tol)
    for t in range(tree.horizon):
        for u in range(t + 1, tree.horizon + 1):
            gap = _recursion_gaps(family, tree, X, t, u)
            tr.update(np.abs(gap), gap, t, X, count=0)
    tr.trials = X.shape[0]
    return tr.report(Property.TIME_CONSISTENT, certified=known_time_consistent(family, tree))


def _one_sided(family, tree, n_samples, rng, tol, positions, sign, prop):
    X = sample_positions(tree, rng, n_samples) if positions is None else as_position(tree, positions)
    tr = _Tracker(tree, tol)
    for t in range(tree.horizon):
        gap = _recursion_gaps(family, tree, X, t, t + 1)
        tr.update(sign * gap, gap, t, X, count=0)
    tr.trials = X.shape[0]
    return tr.report(prop, certified=known_time_consistent(family, tree))


def check_rejection(family: RiskFamily, tree: ScenarioTree, n_samples: int = 100, rng=0,
                    tol: float = TOL_AS, positions=None) -> ConsistencyReport:
    """``rho_t(-rho_{t+1}(X)) <= rho_t(X)``."""
    return _one_sided(family, tree, n_samples, rng, tol, positions, 1.0, Property.REJECTION_CONSISTENT)


def check_acceptance(family: RiskFamily, tree: ScenarioTree, n_samples: int = 100, rng=0,
                     tol: float = TOL_AS, positions=None) -> ConsistencyReport:
    """``rho_t(-rho_{t+1}(X)) >= rho_t(X)``."""
    return _one_sided(family, tree, n_samples, rng, tol, positions, -1.0, Property.ACCEPTANCE_CONSISTENT)


def check_weak(family: RiskFamily, tree: ScenarioTree, n_samples: int = 100, rng=0,
               mode: str = "acceptance", tol: float = TOL_AS, positions=None,
               measures=None) -> ConsistencyReport:
    """Weak consistency: acceptance (rejection) at ``t+1`` carries over to ``t``.

    Each sample is cash-translated onto the boundary ``rho_{t+1}(X') = 0``.
    In acceptance mode the penalty supermartingale inequality
    ``E_Q[alpha_{t+1}(Q) | F_t] <= alpha_t(Q)`` is also tested on sampled
    measures and must hold as well.
    """
    if mode not in ("acceptance", "rejection"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = _seed(rng)
    X = sample_positions(tree, rng, n_samples) if positions is None else as_position(tree, positions)
    tr = _Tracker(tree, tol)
    sign = 1.0 if mode == "acceptance" else -1.0
    for t in range(tree.horizon):
        shift = family.evaluate_level(tree, X, tree.horizon, t + 1)
        Xp = X + tree.broadcast(shift, t + 1, tree.horizon)
        value = family.evaluate_level(tree, Xp, tree.horizon, t)
        tr.update(sign * value, value, t, Xp, count=0)
    tr.trials = X.shape[0]
    primal_ok = tr.worst <= tol
    details = {"primal": "pass" if primal_ok else "fail"}
    if mode == "acceptance":
        if measures is None:
            measures = sample_dual_measures(family, tree, rng, 50)
        dual = _Tracker(tree, tol)
        for Q in measures:
            pos = node_mass(tree, Q)
            for t in range(tree.horizon):
                now = minimal_penalty(family, tree, Q, t)
                ahead = q_expect(tree, Q, minimal_penalty(family, tree, Q, t + 1), t + 1, t)
                gap = _inf_diff(ahead, now)
                live = pos[tree.levels[t]] > 0
                dual.update(np.where(live, gap, -np.inf)[None], gap, t, measure=Q, count=0)
            dual.trials += 1
        details["penalty_supermartingale"] = "pass" if dual.worst <= tol else "fail"
        details["penalty_trials"] = dual.trials
        if primal_ok and dual.worst > tol:
            tr.worst, tr.witness = dual.worst, dual.witness
        tr.trials += dual.trials
    prop = Property.WEAK_ACCEPTANCE if mode == "acceptance" else Property.WEAK_REJECTION
    return tr.report(prop, certified=known_time_consistent(family, tree), **details)


# ----------------------------------------------------------- dual-side checks

def _inf_diff(a, b):
    """``a - b`` with ``inf - inf = 0``."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    out = np.zeros(a.shape)
    both = np.isinf(a) & np.isinf(b) & (np.sign(a) == np.sign(b))
    np.subtract(a, b, out=out, where=~both)
    return out


def check_penalty_recursion(family: RiskFamily, tree: ScenarioTree, measures, s: int = 1,
                            mode: str = "eq", tol: float = TOL_AS) -> ConsistencyReport:
    """``alpha_t = alpha_{t,t+s} + E_Q[alpha_{t+s} | F_t]`` at ``Q``-positive nodes.

    ``mode`` ``"le"`` (``"ge"``) requires only ``alpha_t <=`` (``>=``) the
    right-hand side.  The report's ``details["max_strict_gap"]`` is the
    largest finite ``rhs - alpha_t`` seen, useful as a strictness witness.
    """
    if mode not in ("eq", "le", "ge"):
        raise ValueError(f"unknown mode {mode!r}")
    if s < 1:
        raise ValueError("s must be >= 1")
    tr = _Tracker(tree, tol)
    strict = -np.inf
    for Q in measures:
        pos = node_mass(tree, Q)
        for t in range(tree.horizon - s + 1):
            lhs = minimal_penalty(family, tree, Q, t)
            rhs = penalty_window(family, tree, Q, t, t + s) + q_expect(
                tree, Q, minimal_penalty(family, tree, Q, t + s), t + s, t)
            gap = _inf_diff(lhs, rhs)
            viol = {"eq": np.abs(gap), "le": gap, "ge": -gap}[mode]
            live = pos[tree.levels[t]] > 0
            tr.update(np.where(live, viol, -np.inf)[None], gap, t, measure=Q, count=0)
            finite = live & np.isfinite(gap)
            if finite.any():
                strict = max(strict, float(np.max(-gap[finite])))
        tr.trials += 1
    return tr.report(Property.PENALTY_RECURSION, mode=mode, s=s, max_strict_gap=strict)


def check_supermartingale_V(family: RiskFamily, tree: ScenarioTree, positions, measures,
                            tol: float = TOL_AS, martingale: bool = False) -> ConsistencyReport:
    """``E_Q[V_{t+1} | F_t] <= V_t`` with ``V_t = rho_t(X) + alpha_t(Q)``.

    Tested at nodes where ``Z_t > 0`` and ``alpha_t(Q)`` is finite.  With
    ``martingale=True`` equality is required.
    """
    X = as_position(tree, positions)
    X = np.atleast_2d(X)
    rho = family.process(tree, X)
    tr = _Tracker(tree, tol)
    for Q in measures:
        alpha = penalty_process(family, tree, Q)
        V = rho + alpha
        pos = node_mass(tree, Q)
        for t in range(tree.horizon):
            now = V[:, tree.levels[t]]
            ahead = q_expect(tree, Q, V[:, tree.levels[t + 1]], t + 1, t)
            gap = _inf_diff(ahead, now)
            live = (pos[tree.levels[t]] > 0) & np.isfinite(alpha[tree.levels[t]])
            viol = np.abs(gap) if martingale else gap
            tr.update(np.where(live, viol, -np.inf), gap, t, X, measure=Q, count=0)
        tr.trials += X.shape[0]
    return tr.report(Property.SUPERMARTINGALE_V, martingale=martingale)


def check_worst_case_martingale(family: RiskFamily, tree: ScenarioTree, positions,
                                tol: float = TOL_AS) -> ConsistencyReport:
    """``V^{Q*}`` is a ``Q*``-martingale for the worst-case measure of each position."""
    X = np.atleast_2d(as_position(tree, positions))
    tr = _Tracker(tree, tol)
    unattained = 0
    for x in X:
        Q = worst_case_measure(family, tree, x, tol=tol)
        if Q is NOT_ATTAINED:
            unattained += 1
            continue
        rep = check_supermartingale_V(family, tree, x, [Q], tol=tol, martingale=True)
        tr.trials += 1
        if rep.witness is not None and abs(rep.witness.gap) > tr.worst:
            tr.worst, tr.witness = abs(rep.witness.gap), rep.witness
    return tr.report(Property.SUPERMARTINGALE_V, martingale=True, not_attained=unattained)


# -------------------------------------------------------------- decomposition

@dataclass
class RieszDecomposition:
    """Node-indexed processes of the penalty decomposition under ``Q``.

    ``potential`` is the tail sum of one-step penalties, ``martingale_part``
    the remainder (identically 0 at finite horizon).
    ``alpha = doob_martingale - doob_predictable`` with a non-decreasing
    predictable part starting at 0.
    """

    alpha: np.ndarray
    potential: np.ndarray
    martingale_part: np.ndarray
    doob_martingale: np.ndarray
    doob_predictable: np.ndarray

    def reconstruction_error(self, tree: ScenarioTree, Q: Measure) -> float:
        live = node_mass(tree, Q) > 0
        err = np.abs(self.alpha - self.potential - self.martingale_part)[live]
        return float(err.max(initial=0.0))


def riesz_decompose(family: RiskFamily, tree: ScenarioTree, Q: Measure) -> RieszDecomposition:
    """Decompose ``alpha_t^min(Q)`` for a time-consistent family."""
    if not known_time_consistent(family, tree):
        raise NotTimeConsistent(f"{family.variant} family is not known to be time consistent")
    alpha = penalty_process(family, tree, Q)
    if not np.isfinite(alpha[0]):
        raise InfinitePenalty("alpha_0(Q) is +inf")
    T = tree.horizon
    steps = np.zeros(tree.n_nodes)
    potential = np.zeros(tree.n_nodes)
    acc = np.zeros(tree.levels[T].shape[0])
    for t in range(T - 1, -1, -1):
        steps[tree.levels[t]] = one_step_penalty(family, tree, Q, t)
        acc = steps[tree.levels[t]] + q_expect(tree, Q, acc, t + 1, t)
        potential[tree.levels[t]] = acc
    predictable = np.zeros(tree.n_nodes)
    for lv in tree.levels[1:]:
        par = tree.parent[lv]
        predictable[lv] = predictable[par] + steps[par]
    return RieszDecomposition(alpha, potential, np.zeros(tree.n_nodes), alpha + predictable, predictable)


def check_riesz(family: RiskFamily, tree: ScenarioTree, measures, tol: float = TOL_AS) -> ConsistencyReport:
    """Reconstruction ``alpha = Z + M`` with ``M = 0`` and a monotone predictable part."""
    tr = _Tracker(tree, tol)
    skipped = 0
    for Q in measures:
        try:
            dec = riesz_decompose(family, tree, Q)
        except InfinitePenalty:
            skipped += 1
            continue
        live = node_mass(tree, Q) > 0
        recon = _inf_diff(dec.alpha, dec.potential + dec.martingale_part)
        incr = dec.doob_predictable[1:] - dec.doob_predictable[tree.parent[1:]]
        for t in range(tree.horizon + 1):
            lv = tree.levels[t]
            gap = np.where(live[lv], recon[lv], 0.0)
            if t > 0:
                step = incr[lv - 1]
                tr.update(np.where(live[lv], -step, -np.inf)[None], step, t, measure=Q, count=0)
            else:
                tr.update(np.abs(dec.doob_predictable[lv])[None], dec.doob_predictable[lv], t, measure=Q, count=0)
            tr.update(np.abs(gap)[None], gap, t, measure=Q, count=0)
        tr.trials += 1
    return tr.report(Property.RIESZ_DECOMPOSITION, certified=True, infinite_penalty=skipped)


# ------------------------------------------------------------- sustainability

def check_sustainable(family: RiskFamily, tree: ScenarioTree, U, measures=None,
                      tol: float = TOL_AS) -> ConsistencyReport:
    """``rho_t(U_t - U_{t+1}) <= 0`` for every ``t < T``.

    With ``measures`` the dual form ``E_Q[U_{t+1} | F_t] <= U_t +
    alpha_{t,t+1}(Q)`` is also evaluated and reported; it does not affect
    the verdict.
    """
    U = np.asarray(U, dtype=float)
    if U.shape != (tree.n_nodes,):
        raise ValueError(f"process must have {tree.n_nodes} entries")
    tr = _Tracker(tree, tol)
    for t in range(tree.horizon):
        drop = tree.broadcast(U[tree.levels[t]], t, t + 1) - U[tree.levels[t + 1]]
        value = family.evaluate_level(tree, drop, t + 1, t)
        tr.update(value[None], value, t, process=U, count=0)
    tr.trials = 1
    details = {}
    if measures is not None:
        dual = _Tracker(tree, tol)
        for Q in measures:
            pos = node_mass(tree, Q)
            for t in range(tree.horizon):
                a = penalty_window(family.base_step(), tree, Q, t, t + 1)
                gap = q_expect(tree, Q, U[tree.levels[t + 1]], t + 1, t) - U[tree.levels[t]] - a
                live = (pos[tree.levels[t]] > 0) & np.isfinite(a)
                dual.update(np.where(live, gap, -np.inf)[None], gap, t, measure=Q, count=0)
            dual.trials += 1
        details = {"dual": "pass" if dual.worst <= tol else "fail", "dual_trials": dual.trials}
    return tr.report(Property.SUSTAINABILITY, **details)


def sample_sustainable(family: RiskFamily, tree: ScenarioTree, X, rng) -> np.ndarray:
    """Sustainable process covering ``-X``: noisy backward recursion.

    ``U_T = -X + e_T`` and ``U_t = rho_t(-U_{t+1}) + e_t`` with
    ``F_t``-measurable noise ``e >= 0``, switched off at random dates.
    """
    rng = _seed(rng)
    X = as_position(tree, X)
    U = np.zeros(tree.n_nodes)

    def noise(t):
        size = tree.levels[t].shape[0]
        return rng.uniform(0, 1, size) if rng.random() < 0.5 else np.zeros(size)

    U[tree.leaves] = -X + noise(tree.horizon)
    for t in range(tree.horizon - 1, -1, -1):
        U[tree.levels[t]] = family.evaluate_level(tree, -U[tree.levels[t + 1]], t + 1, t) + noise(t)
    return U


def check_smallest_sustainable(family: RiskFamily, tree: ScenarioTree, n_samples: int = 100,
                               rng=0, tol: float = TOL_AS) -> ConsistencyReport:
    """Sustainable processes covering ``-X`` dominate the recursive process of ``X``.

    The recursive process itself must be sustainable with equality.
    """
    rng = _seed(rng)
    composed = Composed(family)
    tr = _Tracker(tree, tol)
    for _ in range(n_samples):
        X = rng.uniform(-5, 5, tree.n_leaves)
        smallest = composed.process(tree, X)
        for t in range(tree.horizon):
            lv = tree.levels[t]
            drop = tree.broadcast(smallest[lv], t, t + 1) - smallest[tree.levels[t + 1]]
            value = family.evaluate_level(tree, drop, t + 1, t)
            tr.update(np.abs(value)[None], value, t, X, process=smallest, count=0)
        U = sample_sustainable(family, tree, X, rng)
        sus = check_sustainable(family, tree, U, tol=tol)
        if not sus.passed and sus.witness.gap > tr.worst:
            tr.worst, tr.witness = sus.witness.gap, sus.witness
        for t in range(tree.horizon + 1):
            lv = tree.levels[t]
            gap = U[lv] - smallest[lv]
            tr.update((-gap)[None], gap, t, X, process=U, count=0)
        tr.trials += 1
    return tr.report(Property.SUSTAINABILITY, smallest=True)


# ------------------------------------------------------------------- pasting

def _require_composed_avar(family):
    if not (isinstance(family, Composed) and isinstance(family.base_step(), AVaR)):
        raise InvalidFamily("pasting stability is defined for composed AVaR families")
    return family.base_step()


def check_pasting_stability(family: Composed, tree: ScenarioTree, n_samples: int = 50, rng=0,
                            t: int | None = None, tol: float = TOL_AS) -> ConsistencyReport:
    """Zero-penalty sets of composed AVaR are closed under pasting.

    For each date ``t`` (all of ``0..T-1`` by default), ``Q1`` is feasible at
    step ``t`` and arbitrary elsewhere, ``Q2`` feasible from ``t+1`` on; their
    paste at ``t+1`` must have zero penalty at ``t``.  Conversely sampled
    zero-penalty measures must split into a feasible step and a zero-penalty
    tail, and reproduce themselves when pasted with themselves.
    """
    base = _require_composed_avar(family)
    rng = _seed(rng)
    dates = range(tree.horizon) if t is None else [tree._check_depth(t)]
    tr = _Tracker(tree, tol)
    for s in dates:
        if s >= tree.horizon:
            continue
        for _ in range(n_samples):
            Q1 = sample_zero_penalty_measure(tree, base.lam, rng, depths=[s])
            Q2 = sample_zero_penalty_measure(tree, base.lam, rng, depths=range(s + 1, tree.horizon))
            R = paste(tree, Q1, Q2, s + 1)
            pen = minimal_penalty(family, tree, R, s)
            live = node_mass(tree, R)[tree.levels[s]] > 0
            tr.update(np.where(live, pen, -np.inf)[None], pen, s, measure=R, count=0)

            Q = sample_zero_penalty_measure(tree, base.lam, rng, depths=range(s, tree.horizon))
            live = node_mass(tree, Q)[tree.levels[s]] > 0
            for part in (minimal_penalty(family, tree, Q, s), one_step_penalty(family, tree, Q, s)):
                tr.update(np.where(live, part, -np.inf)[None], part, s, measure=Q, count=0)
            if s + 1 < tree.horizon:
                tail = minimal_penalty(family, tree, Q, s + 1)
                live1 = node_mass(tree, Q)[tree.levels[s + 1]] > 0
                tr.update(np.where(live1, tail, -np.inf)[None], tail, s + 1, measure=Q, count=0)
            mismatch = float(np.max(np.abs(paste(tree, Q, Q, s + 1).q - Q.q)))
            tr.update(np.full((1, tree.levels[0].shape[0]), mismatch), mismatch, 0, measure=Q, count=0)
            tr.trials += 1
    return tr.report(Property.PASTING_STABILITY)


# ------------------------------------------------------ entropic gamma shape

@dataclass
class GammaCriterionReport:
    classification: str
    predictions: dict
    reports: dict
    agrees: bool


def classify_gamma(family: Entropic, tree: ScenarioTree, tol: float = 0.0) -> str:
    """Shape of the risk-aversion process along edges ending before the horizon."""
    g = family.params(tree)
    edges = np.nonzero((tree.depth >= 1) & (tree.depth <= tree.horizon - 1))[0]
    diff = g[edges] - g[tree.parent[edges]]
    up, down = bool(np.any(diff > tol)), bool(np.any(diff < -tol))
    if not up and not down:
        return "constant"
    if up and down:
        return "mixed"
    return "non-decreasing" if up else "non-increasing"


def entropic_gamma_criterion(family: Entropic, tree: ScenarioTree, n_samples: int = 100, rng=0,
                             tol: float = TOL_AS) -> GammaCriterionReport:
    """Predict consistency verdicts from the shape of ``gamma`` and test them.

    Only the sufficient direction is predicted; properties without a
    prediction are reported but never counted as disagreement.
    """
    if not isinstance(family, Entropic):
        raise InvalidFamily("the gamma criterion applies to entropic families")
    shape = classify_gamma(family, tree)
    predictions = {
        "recursive": True if shape == "constant" else None,
        "rejection": True if shape in ("constant", "non-increasing") else None,
        "acceptance": True if shape in ("constant", "non-decreasing") else None,
    }
    X = sample_positions(tree, rng, n_samples)
    reports = {
        "recursive": check_recursive(family, tree, tol=tol, positions=X),
        "rejection": check_rejection(family, tree, tol=tol, positions=X),
        "acceptance": check_acceptance(family, tree, tol=tol, positions=X),
    }
    agrees = all(reports[k].passed for k, v in predictions.items() if v)
    return GammaCriterionReport(shape, predictions, reports, agrees)
