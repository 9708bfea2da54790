import csv
import io as stdio
import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risktree import AVaR, Composed, Entropic, Measure, random_tree, sample_measure, uniform_tree
from risktree import io
from risktree.cli import main
from risktree.exceptions import InvalidFamily, InvalidPosition, MalformedSpec

ENTROPIC_EXAMPLE = 0.62011450695827752
TWO_ATOM_ENTROPY = 0.13081203594113694


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def files(tmp_path, one_period, binary2):
    """Input files for the one-period and the depth-2 binary trees."""
    four = uniform_tree([4])
    return {
        "one": write(tmp_path / "one.json", io.tree_to_json(one_period)),
        "bin2": write(tmp_path / "bin2.json", io.tree_to_json(binary2)),
        "four": write(tmp_path / "four.json", io.tree_to_json(four)),
        "ent": write(tmp_path / "ent.json", {"variant": "entropic", "param_const": 1.0}),
        "avar": write(tmp_path / "avar.json", {"variant": "avar", "param_const": 0.5}),
        "cavar": write(tmp_path / "cavar.json", {"variant": "composed", "base": {"variant": "avar", "param_const": 0.5}}),
        "x01": write(tmp_path / "x01.json", {"leaf_values": {"L0": 0.0, "L1": -1.0}}),
        "x0": write(tmp_path / "x0.json", {"leaf_values": {"L0": 0.0, "L1": 0.0}}),
        "xmissing": write(tmp_path / "xm.json", {"leaf_values": {"L0": 0.0}}),
        "xbin": write(tmp_path / "xbin.json", {"leaf_values": {"L0": 1.0, "L1": -2.0, "L2": 0.5, "L3": 3.0}}),
        "qtilt": write(tmp_path / "qtilt.json", {"q_edge": {"N0": [0.75, 0.25]}}),
        "qbad": write(tmp_path / "qbad.json", {"q_edge": {"N0": [0.7, 0.1, 0.1, 0.1]}}),
        "qbin": write(tmp_path / "qbin.json", {"q_edge": {"N0": [0.3, 0.7], "N1": [0.6, 0.4], "N4": [0.2, 0.8]}}),
    }


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# ------------------------------------------------------------------ documents

def test_number_format():
    assert io.dumps(0.1) == "0.10000000000000001\n"
    assert io.dumps([math.inf, -math.inf, -0.0]) == '["+inf", "-inf", 0]\n'
    with pytest.raises(ValueError):
        io.dumps(math.nan)


@given(st.integers(0, 2**32 - 1))
def test_round_trips(seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, 3, 3)
    assert io.tree_from_json(json.loads(io.dumps(io.tree_to_json(tree)))) == tree
    X = rng.normal(size=tree.n_leaves) * 10 ** rng.uniform(-5, 5)
    back = io.position_from_json(tree, json.loads(io.dumps(io.position_to_json(tree, X))))
    np.testing.assert_array_equal(back, X)
    Q = sample_measure(tree, rng, 0.3)
    assert io.measure_from_json(tree, json.loads(io.dumps(io.measure_to_json(tree, Q)))) == Q
    for fam in (Entropic(1.5), AVaR(rng.uniform(0.1, 1, tree.n_nodes)), Composed(Entropic(rng.uniform(0.5, 2, tree.n_nodes)))):
        doc = json.loads(io.dumps(io.family_to_json(tree, fam)))
        again = io.family_from_json(tree, doc)
        np.testing.assert_array_equal(again.evaluate(tree, X, 0), fam.evaluate(tree, X, 0))


def test_document_errors(binary2):
    with pytest.raises(InvalidPosition, match="L3"):
        io.position_from_json(binary2, {"leaf_values": {"L0": 0, "L1": 0, "L2": 0}})
    with pytest.raises(InvalidFamily, match="N4"):
        io.family_from_json(binary2, {"variant": "avar", "param": {"N0": 0.5, "N1": 0.5}})
    with pytest.raises(InvalidFamily):
        io.family_from_json(binary2, {"variant": "weird", "param_const": 1})
    with pytest.raises(InvalidFamily):
        io.family_from_json(binary2, {"variant": "avar", "param_const": 0.5, "param": {}})
    with pytest.raises(MalformedSpec):
        io.measure_from_json(binary2, [0.5])


def test_load_json_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(MalformedSpec):
        io.load_json(bad)
    with pytest.raises(MalformedSpec):
        io.load_json(tmp_path / "absent.json")


# ----------------------------------------------------------------------- CLI

def test_eval(capsys, files):
    code, out, _ = run(capsys, "eval", "--tree", files["one"], "--family", files["ent"], "--position", files["x01"])
    assert code == 0
    doc = json.loads(out)
    assert doc["0"]["N0"] == pytest.approx(ENTROPIC_EXAMPLE, abs=1e-12)
    assert doc["1"] == {"N1": 0.0, "N2": 1.0}
    code, out, _ = run(capsys, "eval", "--tree", files["one"], "--family", files["ent"], "--position", files["x0"])
    assert all(v == 0 for level in json.loads(out).values() for v in level.values())


def test_eval_missing_leaf(capsys, files):
    code, out, err = run(capsys, "eval", "--tree", files["one"], "--family", files["ent"], "--position", files["xmissing"])
    assert code == 2 and out == ""
    assert "L1" in err and err.startswith("risktree: error:")


def test_eval_requires_position(capsys, files):
    code, _, err = run(capsys, "eval", "--tree", files["one"], "--family", files["ent"])
    assert code == 2 and "--position" in err


def test_check_exit_codes(capsys, files):
    code, out, _ = run(capsys, "check", "--tree", files["bin2"], "--family", files["cavar"], "--property", "recursive")
    assert code == 0 and json.loads(out)[0]["verdict"] == "pass"
    code, out, _ = run(capsys, "check", "--tree", files["bin2"], "--family", files["avar"], "--property", "recursive")
    rep = json.loads(out)[0]
    assert code == 1 and rep["verdict"] == "fail"
    assert set(rep["witness"]["position"]["leaf_values"]) == {"L0", "L1", "L2", "L3"}
    assert abs(rep["witness"]["gap"]) > 1e-9
    with pytest.raises(SystemExit) as exc:
        main(["check", "--tree", files["bin2"], "--family", files["avar"], "--property", "bogus"])
    assert exc.value.code == 2


def test_check_all_properties(capsys, files):
    props = ["recursive", "rejection", "acceptance", "weak-acceptance", "weak-rejection",
             "penalty-recursion", "supermartingale", "riesz", "sustainability", "pasting"]
    argv = ["check", "--tree", files["bin2"], "--family", files["cavar"], "--samples", "20"]
    for p in props:
        argv += ["--property", p]
    code, out, _ = run(capsys, *argv)
    reports = json.loads(out)
    assert code == 0 and all(r["verdict"] == "pass" for r in reports)
    code, out, _ = run(capsys, "check", "--tree", files["bin2"], "--family", files["ent"], "--property", "gamma")
    assert code == 0 and json.loads(out)[0]["details"]["classification"] == "constant"
    code, _, err = run(capsys, "check", "--tree", files["bin2"], "--family", files["avar"], "--property", "gamma")
    assert code == 2 and "entropic" in err
    code, _, _ = run(capsys, "check", "--tree", files["bin2"], "--family", files["avar"], "--property", "pasting")
    assert code == 2


def test_penalty(capsys, files):
    code, out, _ = run(capsys, "penalty", "--tree", files["bin2"], "--family", files["ent"])
    assert code == 0
    assert all(v == 0 for level in json.loads(out)["penalty"].values() for v in level.values())
    code, out, _ = run(capsys, "penalty", "--tree", files["one"], "--family", files["ent"],
                       "--measure", files["qtilt"], "--t", "0")
    assert json.loads(out)["penalty"]["0"]["N0"] == pytest.approx(TWO_ATOM_ENTROPY, abs=1e-12)
    assert round(json.loads(out)["penalty"]["0"]["N0"], 6) == 0.130812


def test_penalty_oracle_flags(capsys, files):
    code, out, _ = run(capsys, "penalty", "--tree", files["four"], "--family", files["avar"],
                       "--measure", files["qbad"], "--t", "0", "--oracle")
    doc = json.loads(out)
    assert code == 0
    assert doc["penalty"]["0"]["N0"] == "+inf"
    assert doc["diverging_with_B"] is True
    runs = [doc["oracle"]["0"][b]["N0"] for b in ("10", "20", "40")]
    assert runs[0] < runs[1] < runs[2]
    code, out, _ = run(capsys, "penalty", "--tree", files["one"], "--family", files["ent"],
                       "--measure", files["qtilt"], "--t", "0", "--oracle")
    doc = json.loads(out)
    assert doc["diverging_with_B"] is False and doc["max_discrepancy"] <= 1e-4


def test_decompose(capsys, files):
    code, out, _ = run(capsys, "decompose", "--tree", files["bin2"], "--family", files["ent"])
    rows = list(csv.DictReader(stdio.StringIO(out)))
    assert code == 0 and len(rows) == 7
    assert tuple(rows[0]) == io.DECOMPOSITION_COLUMNS
    assert all(float(r[c]) == 0 for r in rows for c in io.DECOMPOSITION_COLUMNS[2:])
    code, out, _ = run(capsys, "decompose", "--tree", files["bin2"], "--family", files["ent"], "--measure", files["qbin"])
    rows = list(csv.DictReader(stdio.StringIO(out)))
    assert all(float(r["alpha"]) == pytest.approx(float(r["Z"]), abs=1e-12) for r in rows)
    code, _, err = run(capsys, "decompose", "--tree", files["bin2"], "--family", files["avar"])
    assert code == 2 and err


def test_compose_and_worst_case(capsys, files, tmp_path):
    out_path = tmp_path / "composed.json"
    code, _, _ = run(capsys, "compose", "--tree", files["bin2"], "--family", files["avar"], "--out", str(out_path))
    assert code == 0
    doc = json.loads(out_path.read_text())
    assert doc == {"variant": "composed", "base": {"variant": "avar", "param_const": 0.5}}
    code, out, _ = run(capsys, "worst-case", "--tree", files["bin2"], "--family", str(out_path), "--position", files["xbin"])
    doc = json.loads(out)
    assert code == 0 and doc["attained"] and doc["martingale_report"]["verdict"] == "pass"
    assert Measure.from_edges(io.tree_from_json(io.load_json(files["bin2"])), doc["q_edge"])


def test_module_entry_point(files):
    cmd = [sys.executable, "-m", "risktree", "eval", "--tree", files["one"], "--family", files["ent"],
           "--position", files["x01"]]
    res = subprocess.run(cmd, capture_output=True, text=True, check=False)
    assert res.returncode == 0 and json.loads(res.stdout)["0"]["N0"] == pytest.approx(ENTROPIC_EXAMPLE)
