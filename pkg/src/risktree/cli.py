"""``risktree`` command-line interface.

Exit status: 0 when everything requested passed, 1 when a checked property
failed (or a worst-case measure was not attained), 2 on usage or input
errors.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import io
from .consistency import (
    check_acceptance,
    check_pasting_stability,
    check_penalty_recursion,
    check_recursive,
    check_rejection,
    check_riesz,
    check_smallest_sustainable,
    check_supermartingale_V,
    check_weak,
    check_worst_case_martingale,
    entropic_gamma_criterion,
    riesz_decompose,
    sample_dual_measures,
    sample_positions,
)
from .duality import NOT_ATTAINED, generic_penalty_oracle, minimal_penalty, worst_case_measure
from .exceptions import RiskTreeError
from .measure import Measure
from .risk import Composed, Entropic

PROPERTIES = (
    "recursive", "rejection", "acceptance", "weak-acceptance", "weak-rejection",
    "penalty-recursion", "supermartingale", "riesz", "sustainability", "pasting", "gamma",
)
ORACLE_BUDGETS = (10.0, 20.0, 40.0)


class UsageError(Exception):
    pass


def _load(args):
    tree = io.tree_from_json(io.load_json(args.tree))
    family = io.family_from_json(tree, io.load_json(args.family))
    return tree, family


def _position(args, tree):
    if args.position is None:
        raise UsageError("--position is required")
    return io.position_from_json(tree, io.load_json(args.position))


def _measure(args, tree):
    if args.measure is None:
        raise UsageError("--measure is required")
    return io.measure_from_json(tree, io.load_json(args.measure))


def _depths(args, tree):
    if args.t is None:
        return list(range(tree.horizon + 1))
    tree._check_depth(args.t)
    return [args.t]


def cmd_eval(args) -> int:
    tree, family = _load(args)
    X = _position(args, tree)
    out = {str(t): io.level_to_json(tree, family.evaluate(tree, X, t), t) for t in _depths(args, tree)}
    io.write_text(io.dumps(out), args.out)
    return 0


def _run_property(name, family, tree, args, rng):
    n, tol = args.samples, args.tol
    if name == "recursive":
        return [check_recursive(family, tree, n, rng, tol)]
    if name == "rejection":
        return [check_rejection(family, tree, n, rng, tol)]
    if name == "acceptance":
        return [check_acceptance(family, tree, n, rng, tol)]
    if name in ("weak-acceptance", "weak-rejection"):
        return [check_weak(family, tree, n, rng, mode=name.split("-")[1], tol=tol)]
    if name == "penalty-recursion":
        Qs = _measures(args, family, tree, rng)
        return [check_penalty_recursion(family, tree, Qs, s=1, mode=args.mode, tol=tol)]
    if name == "supermartingale":
        Qs = _measures(args, family, tree, rng)
        X = sample_positions(tree, rng, n)
        return [check_supermartingale_V(family, tree, X, Qs, tol=tol),
                check_worst_case_martingale(family, tree, X[-min(n, 20):], tol=tol)]
    if name == "riesz":
        return [check_riesz(family, tree, _measures(args, family, tree, rng), tol=tol)]
    if name == "sustainability":
        return [check_smallest_sustainable(family.base_step(), tree, n, rng, tol)]
    if name == "pasting":
        return [check_pasting_stability(family, tree, n, rng, t=args.t, tol=tol)]
    if name == "gamma":
        if not isinstance(family, Entropic):
            raise UsageError("property gamma needs an entropic family")
        res = entropic_gamma_criterion(family, tree, n, rng, tol)
        for r in res.reports.values():
            r.details.update(classification=res.classification, agrees=res.agrees)
        return list(res.reports.values())
    raise UsageError(f"unknown property {name!r}")


def _measures(args, family, tree, rng):
    if args.measure is not None:
        return [_measure(args, tree)]
    return sample_dual_measures(family, tree, rng, min(args.samples, 50))


def cmd_check(args) -> int:
    tree, family = _load(args)
    names = args.property or ["recursive"]
    rng = np.random.default_rng(args.seed)
    reports = []
    for name in names:
        reports += _run_property(name, family, tree, args, rng)
    io.write_text(io.dumps([io.report_to_json(tree, r) for r in reports]), args.out)
    return 0 if all(r.passed for r in reports) else 1


def _diverging(values) -> bool:
    d1, d2 = values[1] - values[0], values[2] - values[1]
    return bool(d2 > 1e-3 and d2 >= 0.9 * d1)


def cmd_penalty(args) -> int:
    tree, family = _load(args)
    Q = _measure(args, tree) if args.measure is not None else Measure.reference(tree)
    depths = _depths(args, tree)
    out = {"penalty": {str(t): io.level_to_json(tree, minimal_penalty(family, tree, Q, t), t) for t in depths}}
    if args.oracle:
        oracle, discrepancy, diverging = {}, 0.0, False
        for t in depths:
            closed = minimal_penalty(family, tree, Q, t)
            runs = [generic_penalty_oracle(family, tree, Q, t, B=B).value for B in ORACLE_BUDGETS]
            oracle[str(t)] = {format(B, "g"): io.level_to_json(tree, v, t) for B, v in zip(ORACLE_BUDGETS, runs)}
            for j in range(closed.shape[0]):
                if np.isfinite(closed[j]):
                    discrepancy = max(discrepancy, abs(runs[1][j] - closed[j]))
                else:
                    diverging |= _diverging([r[j] for r in runs])
        out["oracle"] = oracle
        out["max_discrepancy"] = discrepancy
        out["diverging_with_B"] = diverging
    io.write_text(io.dumps(out), args.out)
    return 0


def cmd_decompose(args) -> int:
    tree, family = _load(args)
    Q = _measure(args, tree) if args.measure is not None else Measure.reference(tree)
    dec = riesz_decompose(family, tree, Q)
    io.write_text(io.decomposition_to_csv(tree, dec), args.out)
    return 0


def cmd_compose(args) -> int:
    tree, family = _load(args)
    io.write_text(io.dumps(io.family_to_json(tree, Composed(family))), args.out)
    return 0


def cmd_worst_case(args) -> int:
    tree, family = _load(args)
    X = _position(args, tree)
    Q = worst_case_measure(family, tree, X, tol=args.tol)
    if Q is NOT_ATTAINED:
        io.write_text(io.dumps({"q_edge": None, "attained": False, "martingale_report": None}), args.out)
        return 1
    rep = check_supermartingale_V(family, tree, X, [Q], tol=args.tol, martingale=True)
    out = {"q_edge": Q.to_edges(tree), "attained": True, "martingale_report": io.report_to_json(tree, rep)}
    io.write_text(io.dumps(out), args.out)
    return 0


COMMANDS = {
    "eval": cmd_eval,
    "check": cmd_check,
    "penalty": cmd_penalty,
    "decompose": cmd_decompose,
    "compose": cmd_compose,
    "worst-case": cmd_worst_case,
}


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="risktree", description="Dynamic risk measures on scenario trees.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--tree", required=True)
        p.add_argument("--family", required=True)
        p.add_argument("--position")
        p.add_argument("--measure")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=_positive_float, default=1e-9)
        p.add_argument("--samples", type=_positive_int, default=100)
        p.add_argument("--out")
        p.add_argument("--t", type=int, help="restrict to one date")
        if name == "check":
            p.add_argument("--property", action="append", choices=PROPERTIES)
            p.add_argument("--mode", choices=("eq", "le", "ge"), default="eq",
                           help="penalty-recursion comparison")
        if name == "penalty":
            p.add_argument("--oracle", action="store_true", help="cross-check by brute-force search")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (RiskTreeError, UsageError) as exc:
        print(f"risktree: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
