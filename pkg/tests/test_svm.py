import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fingerloc.fingerprints import FingerprintDb, with_voronoi_labels
from fingerloc.knn import KnnConfig, knn_classify
from fingerloc.svm import (BinarySvm, KernelSpec, SmoConvergenceError, dual_objective, kernel_eval,
                           ovo_classify, ovo_classify_batch, ovo_from_dict, ovo_to_dict, ovo_train,
                           smo_gram, smo_solve, svm_decision, svm_localize)

LINEAR = KernelSpec("linear")


def test_kernel_examples():
    assert kernel_eval(KernelSpec("rbf", 0.3), [1, 2], [1, 2]) == 1
    assert kernel_eval(LINEAR, [1, 2], [3, 4]) == 11
    assert kernel_eval(KernelSpec("rbf", 0.25), [0, 0], [2, 0]) == pytest.approx(math.exp(-1))
    assert kernel_eval(KernelSpec("polynomial", degree=2, coef=1.0), [1, 1], [1, 2]) == 16
    with pytest.raises(ValueError):
        kernel_eval(LINEAR, [1], [1, 2])
    with pytest.raises(ValueError):
        KernelSpec("rbf", gamma=0)
    with pytest.raises(ValueError):
        KernelSpec("polynomial", degree=0)


def test_two_point_analytic_solution():
    m = smo_solve([[0.0], [2.0]], [1, -1], c_penalty=10, spec=LINEAR)
    np.testing.assert_allclose(m.dual_coef, [0.5, -0.5], atol=1e-9)
    assert m.bias == pytest.approx(1.0, abs=1e-9)
    assert svm_decision(m, [1.0]) == pytest.approx(0.0, abs=1e-9)
    assert svm_decision(m, [0.0]) == pytest.approx(1.0, abs=1e-9)
    assert svm_decision(m, [0.9]) > 0 > svm_decision(m, [1.1])


def test_duplicated_point_hits_bound():
    alpha, b, _ = smo_gram(np.ones((2, 2)), np.array([1.0, -1.0]), 0.5)
    np.testing.assert_array_equal(alpha, [0.5, 0.5])
    assert math.isfinite(b)


def test_input_validation():
    with pytest.raises(ValueError):
        smo_solve([[0.0], [1.0]], [1, 1])
    with pytest.raises(ValueError):
        smo_solve([[0.0], [1.0]], [1, 2])
    with pytest.raises(ValueError):
        smo_gram(np.eye(2), np.array([1.0, -1.0]), 1.0, tol=0)


def test_convergence_error_carries_iterate():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 2))
    y = np.where(X[:, 0] + 0.3 * rng.normal(size=30) > 0, 1.0, -1.0)
    with pytest.raises(SmoConvergenceError) as exc:
        smo_gram(KernelSpec("rbf", 1.0).gram(X, X), y, 10.0, max_iter=2)
    assert exc.value.iterations == 2 and exc.value.alpha.shape == (30,)


def random_problem(rng, n=None):
    n = n or int(rng.integers(2, 7))
    X = rng.normal(size=(n, 2))
    y = rng.choice([-1.0, 1.0], size=n)
    y[0], y[1] = 1.0, -1.0
    kind = rng.choice(["linear", "rbf", "polynomial"])
    spec = KernelSpec(str(kind), gamma=float(rng.uniform(0.2, 2.0)), degree=2, coef=1.0)
    c = float(rng.choice([0.1, 1.0, 10.0]))
    return X, y, spec, c


def kkt_ok(alpha, b, y, K, c, tol=1e-3):
    f = K @ (alpha * y) + b
    m = y * f
    ok = abs(alpha @ y) <= tol and np.all(alpha >= 0) and np.all(alpha <= c)
    free = (alpha > 0) & (alpha < c)
    ok &= np.all(np.abs(m[free] - 1) <= tol)
    ok &= np.all(m[alpha == 0] >= 1 - tol)
    ok &= np.all(m[alpha == c] <= 1 + tol)
    return bool(ok)


def test_kkt_on_random_problems():
    rng = np.random.default_rng(11)
    for _ in range(100):
        X, y, spec, c = random_problem(rng)
        K = spec.gram(X, X)
        alpha, b, _ = smo_gram(K, y, c)
        assert kkt_ok(alpha, b, y, K, c), (spec, c)


def grid_search_dual(K, y, c, steps=40):
    """Dense search of the dual over the box with the equality constraint solved for the last coordinate."""
    n = len(y)
    grid = np.linspace(0.0, c, steps + 1)
    best = -np.inf
    for free in itertools.product(grid, repeat=n - 1):
        a = np.array(free)
        last = -(a @ y[:-1]) * y[-1]
        if -1e-12 <= last <= c + 1e-12:
            best = max(best, dual_objective(np.append(a, last), y, K))
    return best


def test_dual_objective_vs_grid_search():
    rng = np.random.default_rng(21)
    for _ in range(20):
        X, y, spec, c = random_problem(rng, n=int(rng.integers(2, 5)))
        K = spec.gram(X, X)
        alpha, _, _ = smo_gram(K, y, c)
        assert dual_objective(alpha, y, K) >= grid_search_dual(K, y, c) - 1e-3


def test_decision_sign_invariant_to_row_order():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(12, 2))
    y = np.where(X[:, 0] > 0, 1.0, -1.0)
    spec = KernelSpec("rbf", 0.5)
    m = smo_solve(X, y, 1.0, spec, tol=1e-6)
    perm = rng.permutation(12)
    m2 = smo_solve(X[perm], y[perm], 1.0, spec, tol=1e-6)
    q = rng.normal(size=(200, 2))
    s1, s2 = svm_decision(m, q), svm_decision(m2, q)
    clear = np.abs(s1) > 1e-2
    np.testing.assert_array_equal(np.sign(s1[clear]), np.sign(s2[clear]))


def test_free_support_vector_scores_one():
    X = np.array([[0.0], [1.0], [3.0], [4.0]])
    y = np.array([1.0, 1.0, -1.0, -1.0])
    m = smo_solve(X, y, 10.0, LINEAR, tol=1e-8)
    assert svm_decision(m, [1.0]) == pytest.approx(1.0, abs=1e-6)


def test_rbf_gram_is_psd():
    X = np.random.default_rng(2).normal(size=(40, 3))
    assert np.linalg.eigvalsh(KernelSpec("rbf", 0.7).gram(X, X)).min() >= -1e-8


def labelled_db(X, labels):
    return FingerprintDb(tuple(f"a{i}" for i in range(X.shape[1])), 1, np.zeros((len(X), 2)), X, labels=labels)


def test_ovo_counts_and_membership():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(9, 2))
    m = ovo_train(labelled_db(X, np.repeat([0, 1, 2], 3)), 1.0, KernelSpec("rbf", 0.5))
    assert len(m.machines) == 3
    for (a, b), bm in zip(m.pairs, m.machines):
        assert set(bm.sv_index) <= set(range(3 * a, 3 * a + 3)) | set(range(3 * b, 3 * b + 3))
        assert np.all(np.abs(bm.dual_coef) <= 1.0 + 1e-12)


def test_ovo_41_classes():
    X = np.random.default_rng(0).normal(size=(41, 3))
    assert len(ovo_train(labelled_db(X, np.arange(41)), 1.0, KernelSpec("rbf", 0.25)).machines) == 820


def test_one_nn_equivalence():
    rng = np.random.default_rng(31)
    for _ in range(20):
        X = rng.normal(size=(6, 3)) * 2
        spec = KernelSpec("rbf", 0.25)
        K = spec.gram(X, X)
        off = K[~np.eye(6, dtype=bool)]
        c = 1.0 / (1.0 - off.max()) + 1.0
        m = ovo_train(labelled_db(X, np.arange(6)), c, spec, tol=1e-6)
        for q in rng.normal(size=(30, 3)) * 2:
            nn = knn_classify(labelled_db(X, np.arange(6)), q, KnnConfig(k=1))
            assert ovo_classify(m, q) == nn


def test_vote_ties_and_localize():
    grid = np.array([[0.0, 0.0], [4.0, 0.0], [8.0, 0.0]])
    X = np.array([[0.0], [1.0], [2.0]])
    db = with_voronoi_labels(FingerprintDb(("a",), 1, grid, X), grid)
    m = ovo_train(db, 10.0, KernelSpec("rbf", 1.0))
    np.testing.assert_array_equal(svm_localize(m, [0.0], k_top=1), [0, 0])
    np.testing.assert_allclose(svm_localize(m, [0.0], k_top=2), [2, 0])
    votes = m.votes(np.array([[0.0], [2.0]]))
    assert votes.sum(axis=1).tolist() == [3, 3]
    assert votes[0].tolist() == [2, 1, 0]
    assert ovo_classify_batch(m, np.array([[2.0]]))[0] == 2
    with pytest.raises(ValueError):
        svm_localize(m, [0.0], k_top=0)


def test_ovo_serialization_round_trip():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(12, 2))
    m = ovo_train(labelled_db(X, np.repeat(np.arange(4), 3)), 1.0, KernelSpec("rbf", 0.5))
    back = ovo_from_dict(json.loads(json.dumps(ovo_to_dict(m))))
    q = rng.normal(size=(50, 2))
    np.testing.assert_allclose(back.pair_scores(q), m.pair_scores(q), atol=1e-12)
    bm = m.machines[0]
    again = BinarySvm.from_dict(json.loads(json.dumps(bm.to_dict())))
    np.testing.assert_allclose(svm_decision(again, q), svm_decision(bm, q), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_feasibility_property(seed):
    X, y, spec, c = random_problem(np.random.default_rng(seed))
    alpha, b, _ = smo_gram(spec.gram(X, X), y, c)
    assert np.all((alpha >= 0) & (alpha <= c))
    assert abs(alpha @ y) <= 1e-3
    assert math.isfinite(b)


def test_tied_votes_prefer_smaller_class(monkeypatch):
    grid = np.array([[0.0, 0.0], [4.0, 0.0], [8.0, 0.0]])
    db = with_voronoi_labels(FingerprintDb(("a",), 1, grid, [[0.0], [1.0], [2.0]]), grid)
    m = ovo_train(db, 1.0, KernelSpec("rbf", 1.0))
    monkeypatch.setattr(m, "votes", lambda X: np.array([[1, 1, 1]]))
    assert ovo_classify(m, [5.0]) == 0
    np.testing.assert_allclose(svm_localize(m, [5.0], k_top=2), [2.0, 0.0])
