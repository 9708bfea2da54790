"""JSON and CSV formats for trees, positions, measures, families and reports.

Floats are written with 17 significant digits so that every value survives
a round trip exactly; infinities are written as the strings ``"+inf"`` and
``"-inf"``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .consistency import ConsistencyReport, RieszDecomposition, Witness
from .duality import DualReport
from .exceptions import InvalidFamily, InvalidPosition, MalformedSpec
from .filtration import ScenarioTree, build_tree
from .measure import Measure
from .risk import AVaR, Composed, Entropic, RiskFamily

INF_TOKEN = "+inf"


# ----------------------------------------------------------------- encoding

def _number(x: float) -> str:
    if math.isnan(x):
        raise ValueError("NaN cannot be serialised")
    if math.isinf(x):
        return json.dumps(INF_TOKEN if x > 0 else "-inf")
    return format(x + 0.0, ".17g")  # no negative zero


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _number(float(obj))
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    return _encode(obj, indent, 0) + "\n"


def _decode_number(x, what: str) -> float:
    if x == INF_TOKEN:
        return math.inf
    if x == "-inf":
        return -math.inf
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise MalformedSpec(f"{what}: {x!r} is not a number")
    return float(x)


def load_json(path) -> object:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedSpec(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise MalformedSpec(f"{path}: {exc.strerror}") from None


def write_text(text: str, path=None):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------- documents

def tree_to_json(tree: ScenarioTree) -> dict:
    return tree.to_spec()


def tree_from_json(doc) -> ScenarioTree:
    return build_tree(doc)


def level_to_json(tree: ScenarioTree, values, t: int) -> dict:
    return {tree.node_label(n): float(v) for n, v in zip(tree.levels[t], values)}


def process_to_json(tree: ScenarioTree, process) -> dict:
    return {tree.node_label(n): float(v) for n, v in enumerate(process)}


def position_to_json(tree: ScenarioTree, X) -> dict:
    return {"leaf_values": {tree.leaf_label(i): float(v) for i, v in enumerate(X)}}


def position_from_json(tree: ScenarioTree, doc) -> np.ndarray:
    if not isinstance(doc, dict) or not isinstance(doc.get("leaf_values"), dict):
        raise InvalidPosition('position must be {"leaf_values": {...}}')
    values = np.full(tree.n_leaves, np.nan)
    for label, v in doc["leaf_values"].items():
        values[tree.parse_leaf_label(label)] = _decode_number(v, label)
    missing = np.nonzero(np.isnan(values))[0]
    if missing.size:
        raise InvalidPosition(f"no value for leaf {tree.leaf_label(missing[0])}")
    if not np.all(np.isfinite(values)):
        raise InvalidPosition("leaf values must be finite")
    return values


def measure_to_json(tree: ScenarioTree, Q: Measure) -> dict:
    return {"q_edge": Q.to_edges(tree)}


def measure_from_json(tree: ScenarioTree, doc) -> Measure:
    if not isinstance(doc, dict) or not isinstance(doc.get("q_edge"), dict):
        raise MalformedSpec('measure must be {"q_edge": {...}}')
    return Measure.from_edges(tree, doc["q_edge"])


_VARIANTS = {"entropic": (Entropic, "gamma"), "avar": (AVaR, "lam")}


def family_to_json(tree: ScenarioTree, family: RiskFamily) -> dict:
    if isinstance(family, Composed):
        return {"variant": "composed", "base": family_to_json(tree, family.base)}
    for name, (cls, attr) in _VARIANTS.items():
        if isinstance(family, cls):
            value = getattr(family, attr)
            if isinstance(value, float):
                return {"variant": name, "param_const": value}
            return {"variant": name, "param": process_to_json(tree, family.params(tree))}
    raise InvalidFamily(f"cannot serialise {type(family).__name__}")


def family_from_json(tree: ScenarioTree, doc) -> RiskFamily:
    """Parse a family document.

    ``param`` maps node ids to values and must cover every non-leaf node;
    leaf entries are optional since they never enter an evaluation.
    """
    if not isinstance(doc, dict) or "variant" not in doc:
        raise InvalidFamily('family must be {"variant": ..., ...}')
    variant = doc["variant"]
    if variant == "composed":
        if "base" not in doc:
            raise InvalidFamily("composed family needs a base")
        return Composed(family_from_json(tree, doc["base"]))
    if variant not in _VARIANTS:
        raise InvalidFamily(f"unknown variant {variant!r}")
    cls, _ = _VARIANTS[variant]
    if ("param" in doc) == ("param_const" in doc):
        raise InvalidFamily('give exactly one of "param" and "param_const"')
    if "param_const" in doc:
        return cls(_decode_number(doc["param_const"], "param_const"))
    raw = doc["param"]
    if not isinstance(raw, dict):
        raise InvalidFamily('"param" must map node ids to numbers')
    values = np.full(tree.n_nodes, np.nan)
    for label, v in raw.items():
        values[tree.parse_node_label(label)] = _decode_number(v, label)
    internal = tree.depth < tree.horizon
    gaps = np.nonzero(np.isnan(values) & internal)[0]
    if gaps.size:
        raise InvalidFamily(f"no parameter for node {tree.node_label(gaps[0])}")
    values[np.isnan(values)] = 1.0
    return cls(values)


def witness_to_json(tree: ScenarioTree, w: Witness | None):
    if w is None:
        return None
    return {
        "position": None if w.position is None else position_to_json(tree, w.position),
        "measure": None if w.measure is None else measure_to_json(tree, w.measure),
        "process": None if w.process is None else process_to_json(tree, w.process),
        "t": w.t,
        "node": tree.node_label(w.node),
        "gap": w.gap,
    }


def report_to_json(tree: ScenarioTree, r: ConsistencyReport) -> dict:
    return {
        "property": r.property.value,
        "verdict": r.verdict,
        "witness": witness_to_json(tree, r.witness),
        "trials": r.trials,
        "tolerance": r.tolerance,
        "certified": r.certified,
        "details": r.details,
    }


def dual_report_to_json(tree: ScenarioTree, r: DualReport) -> dict:
    return {
        "value": level_to_json(tree, r.value, r.t),
        "maximizer": measure_to_json(tree, r.maximizer),
        "gap": r.gap,
    }


DECOMPOSITION_COLUMNS = ("t", "node", "alpha", "Z", "M", "doob_martingale", "doob_predictable")


def decomposition_to_csv(tree: ScenarioTree, dec: RieszDecomposition) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DECOMPOSITION_COLUMNS)
    cols = (dec.alpha, dec.potential, dec.martingale_part, dec.doob_martingale, dec.doob_predictable)
    for n in range(tree.n_nodes):
        writer.writerow([int(tree.depth[n]), tree.node_label(n)] + [format(float(c[n]), ".17g") for c in cols])
    return buf.getvalue()
