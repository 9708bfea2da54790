import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risktree import (
    AVaR,
    Composed,
    Entropic,
    accepts,
    avar_eval,
    compose_recursive,
    entropic_eval,
    evaluate,
    random_tree,
    risk_process,
    uniform_tree,
)
from risktree.exceptions import DepthOutOfRange, InvalidFamily, InvalidPosition
from risktree.risk import greedy_weights, known_time_consistent

import oracles

# ln((1 + e) / 2): entropic risk of (0, -1) under uniform P with gamma = 1
ENTROPIC_EXAMPLE = 0.62011450695827752
# vertex enumeration of the AVaR LP on (0, -1, -2, -3), caps 0.5
AVAR_FOUR_LEAVES = 2.5


def test_frozen_constants():
    assert math.log((1 + math.e) / 2) == pytest.approx(ENTROPIC_EXAMPLE, abs=1e-15)
    assert oracles.avar_lp([0.25] * 4, [0, -1, -2, -3], 0.5) == pytest.approx(AVAR_FOUR_LEAVES, abs=1e-15)
    assert oracles.avar_lp([0.5, 0.5], [0, -1], 0.5) == pytest.approx(1.0, abs=1e-15)


def families(tree, rng):
    g = rng.uniform(0.3, 3.0, tree.n_nodes)
    lam = rng.uniform(0.1, 1.0, tree.n_nodes)
    return [
        Entropic(1.0), Entropic(g), AVaR(0.5), AVaR(lam), Composed(Entropic(g)), Composed(AVaR(lam)),
    ]


def test_evaluate_examples(one_period, rng):
    tree = random_tree(rng, 3, 3)
    for fam in families(tree, rng):
        for t in range(tree.horizon + 1):
            assert np.all(evaluate(fam, tree, np.zeros(tree.n_leaves), t) == 0)
            np.testing.assert_allclose(evaluate(fam, tree, np.full(tree.n_leaves, 1.7), t), -1.7, atol=1e-12)
    assert evaluate(Entropic(1.0), one_period, [0, -1], 0)[0] == pytest.approx(ENTROPIC_EXAMPLE, abs=1e-12)
    with pytest.raises(DepthOutOfRange):
        evaluate(Entropic(1.0), one_period, [0, -1], 2)


def test_entropic_examples(one_period):
    assert entropic_eval(1.0, one_period, [0, -1], 0)[0] == pytest.approx(ENTROPIC_EXAMPLE, abs=1e-12)
    assert entropic_eval(1.0, one_period, [1, 0], 0)[0] == pytest.approx(ENTROPIC_EXAMPLE - 1, abs=1e-12)
    np.testing.assert_allclose(entropic_eval(3.0, one_period, [2.5, 2.5], 0), -2.5)


def test_entropic_large_exponents_are_stable(one_period):
    # exp(1000) overflows a double; the shifted form must not
    assert entropic_eval(1.0, one_period, [-1000.0, 0.0], 0)[0] == pytest.approx(1000 - math.log(2), abs=1e-9)
    assert entropic_eval(50.0, one_period, [30.0, 40.0], 0)[0] == pytest.approx(-30 - math.log(2) / 50, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_entropic_matches_direct_formula(seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, 3, 3)
    g = rng.uniform(0.3, 3.0, tree.n_nodes)
    X = rng.uniform(-5, 5, tree.n_leaves)
    for t in range(tree.horizon + 1):
        np.testing.assert_allclose(entropic_eval(g, tree, X, t), oracles.entropic_direct(tree, X, g, t), atol=1e-10)


def test_avar_examples(one_period, rng):
    tree = random_tree(rng, 3, 3)
    X = rng.uniform(-5, 5, tree.n_leaves)
    for t in range(tree.horizon + 1):
        np.testing.assert_allclose(avar_eval(1.0, tree, X, t), tree.expect(-X, tree.horizon, t), atol=1e-12)
    assert avar_eval(0.5, one_period, [0, -1], 0)[0] == pytest.approx(1.0, abs=1e-12)
    assert avar_eval(0.5, uniform_tree([4]), [0, -1, -2, -3], 0)[0] == pytest.approx(AVAR_FOUR_LEAVES, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_greedy_avar_equals_vertex_lp(seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, 2, 3)
    if tree.n_leaves > 6:
        tree = uniform_tree([2, 3])
    lam = rng.uniform(0.05, 1.0, tree.n_nodes)
    X = np.round(rng.uniform(-3, 3, tree.n_leaves), 1)  # rounding makes ties likely
    for t in range(tree.horizon + 1):
        np.testing.assert_allclose(avar_eval(lam, tree, X, t), oracles.avar_subtree(tree, X, lam, t), atol=1e-9)


def test_greedy_avar_equals_scipy_lp(rng):
    linprog = pytest.importorskip("scipy.optimize").linprog
    for _ in range(30):
        k = int(rng.integers(1, 7))
        p = rng.dirichlet(np.ones(k))
        y = rng.uniform(-5, 5, k)
        lam = float(rng.uniform(0.05, 1.0))
        res = linprog(y, A_eq=np.ones((1, k)), b_eq=[1.0], bounds=[(0, c) for c in p / lam], method="highs")
        w = greedy_weights(y, p / lam)
        assert float(w @ -y) == pytest.approx(-res.fun, abs=1e-9)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(w <= p / lam + 1e-15)


def test_greedy_tie_break_is_leaf_order():
    w = greedy_weights(np.zeros(4), np.full(4, 0.5))
    np.testing.assert_array_equal(w, [0.5, 0.5, 0.0, 0.0])


def _axiom_case(seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, int(rng.integers(1, 5)), 3)
    return rng, tree


@given(st.integers(0, 2**32 - 1))
def test_axioms(seed):
    rng, tree = _axiom_case(seed)
    X = rng.uniform(-5, 5, (20, tree.n_leaves))
    Y = X - rng.uniform(0, 2, X.shape)  # Y <= X
    for fam in families(tree, rng):
        for t in range(tree.horizon + 1):
            n_t = len(tree.depth_slice(t))
            m = rng.uniform(-3, 3, (20, n_t))
            shifted = fam.evaluate(tree, X + tree.lift(m, t), t)
            assert np.max(np.abs(shifted - (fam.evaluate(tree, X, t) - m))) <= 1e-9
            assert np.all(fam.evaluate(tree, Y, t) >= fam.evaluate(tree, X, t) - 1e-9)
            lam = rng.uniform(0, 1, (20, n_t))
            L = tree.lift(lam, t)
            mix = fam.evaluate(tree, L * X + (1 - L) * Y, t)
            bound = lam * fam.evaluate(tree, X, t) + (1 - lam) * fam.evaluate(tree, Y, t)
            assert np.all(mix <= bound + 1e-9)


@given(st.integers(0, 2**32 - 1))
def test_avar_positive_homogeneity(seed):
    rng, tree = _axiom_case(seed)
    X = rng.uniform(-5, 5, (10, tree.n_leaves))
    fam = AVaR(rng.uniform(0.1, 1.0, tree.n_nodes))
    for t in range(tree.horizon + 1):
        c = rng.uniform(0, 4, (10, len(tree.depth_slice(t))))
        lhs = fam.evaluate(tree, tree.lift(c, t) * X, t)
        assert np.max(np.abs(lhs - c * fam.evaluate(tree, X, t))) <= 1e-9


def test_composed_examples(rng):
    tree = random_tree(rng, 3, 3)
    X = rng.uniform(-5, 5, (30, tree.n_leaves))
    T = tree.horizon
    for t in range(T + 1):
        np.testing.assert_allclose(
            compose_recursive(Entropic(1.3)).evaluate(tree, X, t), Entropic(1.3).evaluate(tree, X, t), atol=1e-9)
        np.testing.assert_allclose(
            Composed(AVaR(1.0)).evaluate(tree, X, t), tree.expect(-X, T, t), atol=1e-9)
    np.testing.assert_allclose(Composed(AVaR(0.4)).evaluate(tree, X, T - 1), AVaR(0.4).evaluate(tree, X, T - 1))
    np.testing.assert_array_equal(Composed(AVaR(0.4)).evaluate(tree, X, T), -X)


@given(st.integers(0, 2**32 - 1))
def test_composed_is_recursive(seed):
    rng, tree = _axiom_case(seed)
    fam = Composed(AVaR(rng.uniform(0.1, 1.0, tree.n_nodes)))
    X = rng.uniform(-5, 5, (10, tree.n_leaves))
    for t in range(tree.horizon + 1):
        for s in range(tree.horizon - t + 1):
            inner = fam.evaluate_level(tree, X, tree.horizon, t + s)
            nested = fam.evaluate_level(tree, -inner, t + s, t)
            assert np.max(np.abs(nested - fam.evaluate(tree, X, t))) <= 1e-9


def test_process_matches_pointwise(rng):
    tree = random_tree(rng, 3, 3)
    X = rng.uniform(-5, 5, tree.n_leaves)
    for fam in families(tree, rng):
        proc = risk_process(fam, tree, X)
        for t in range(tree.horizon + 1):
            np.testing.assert_allclose(proc[tree.depth_slice(t)], fam.evaluate(tree, X, t), atol=1e-12)


def test_accepts_examples(rng):
    tree = random_tree(rng, 3, 3)
    for fam in families(tree, rng):
        for t in range(tree.horizon + 1):
            assert np.all(accepts(fam, tree, np.zeros(tree.n_leaves), t))
            assert not np.any(accepts(fam, tree, np.full(tree.n_leaves, -1.0), t))
            X = rng.uniform(-5, 5, tree.n_leaves)
            compensated = X + tree.lift(fam.evaluate(tree, X, t), t)
            assert np.all(accepts(fam, tree, compensated, t))


def test_family_validation(binary2):
    for bad in (0.0, -1.0, np.inf):
        with pytest.raises(InvalidFamily):
            Entropic(bad)
    for bad in (0.0, 1.5):
        with pytest.raises(InvalidFamily):
            AVaR(bad)
    with pytest.raises(InvalidFamily):
        Entropic(np.ones(3)).evaluate(binary2, np.zeros(4), 0)
    with pytest.raises(InvalidFamily):
        Composed("entropic")
    with pytest.raises(InvalidPosition):
        Entropic(1.0).evaluate(binary2, np.zeros(3), 0)


def test_known_time_consistent(binary2):
    assert known_time_consistent(Entropic(2.0), binary2)
    assert known_time_consistent(Composed(AVaR(0.3)), binary2)
    assert known_time_consistent(AVaR(1.0), binary2)
    assert not known_time_consistent(AVaR(0.5), binary2)
    g = np.array([2.0, 1, 9, 9, 1, 9, 9])  # leaf values are irrelevant
    assert not known_time_consistent(Entropic(g), binary2)
    g[1] = g[4] = 2.0
    assert known_time_consistent(Entropic(g), binary2)
    assert known_time_consistent(AVaR(0.5), uniform_tree([3]))


def test_restrict_matches_subtree_evaluation(rng):
    tree = random_tree(rng, 3, 3)
    X = rng.uniform(-5, 5, tree.n_leaves)
    for fam in families(tree, rng):
        for v in tree.depth_slice(1):
            sub = tree.subtree(v)
            local = fam.restrict(tree, v).evaluate(sub, X[tree.leaf_slice(v)], 0)[0]
            assert local == pytest.approx(fam.evaluate(tree, X, 1)[tree.level_index(v)], abs=1e-12)
