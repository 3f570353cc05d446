import itertools

import numpy as np
import pytest

from graindiagrams.apd import classify_points
from graindiagrams.transport import (DualSolution, ImageSupport, check_complementary_slackness,
                                     diagram_from_duals, dual_objective, primal_objective,
                                     solve_wcaa)

EYE2 = np.broadcast_to(np.eye(3), (2, 3, 3))


def _line_support():
    return ImageSupport([[0, 0, 0], [1, 0, 0]], [1.0, 1.0])


def test_identity_assignment():
    cl, du, obj = solve_wcaa(_line_support(), EYE2, [[0, 0, 0], [1, 0, 0]], [1, 1])
    assert obj == 0.0
    assert np.allclose(cl.dense(2, 2), np.eye(2))


def test_fractional_split():
    cl, du, obj = solve_wcaa(_line_support(), EYE2, [[0, 0, 0], [1, 0, 0]], [1.5, 0.5])
    assert obj == pytest.approx(0.5, abs=1e-12)
    assert np.allclose(cl.dense(2, 2), [[1.0, 0.5], [0.0, 0.5]])
    assert len(cl.fractional_points()) == 1


def _vertex_enumeration(C, supply, demand):
    n, k = C.shape
    arcs = list(itertools.product(range(n), range(k)))
    rows = []
    for j in range(n):
        rows.append([1.0 if a[0] == j else 0.0 for a in arcs])
    for i in range(k - 1):                        # one redundant demand row dropped
        rows.append([1.0 if a[1] == i else 0.0 for a in arcs])
    M = np.array(rows)
    rhs = np.concatenate([supply, demand[:-1]])
    best = np.inf
    for basis in itertools.combinations(range(len(arcs)), n + k - 1):
        B = M[:, basis]
        if abs(np.linalg.det(B)) < 1e-9:
            continue
        x = np.linalg.solve(B, rhs)
        if (x >= -1e-9).all():
            best = min(best, float(sum(x[t] * C[arcs[b]] for t, b in enumerate(basis))))
    return best


def test_matches_vertex_enumeration():
    rng = np.random.default_rng(11)
    X = rng.integers(0, 6, (6, 3)).astype(float) + rng.uniform(0, 0.1, (6, 3))
    S = rng.uniform(0, 6, (3, 3))
    A = np.stack([np.eye(3), np.diag([2.0, 1, 1]), np.diag([1.0, 1, 3])])
    w = rng.integers(1, 5, 6).astype(float)
    kappa = np.array([3.0, 4.0, 5.0])
    cl, du, obj = solve_wcaa(ImageSupport(X, w), A, S, kappa)
    C = np.array([[(x - s) @ a @ (x - s) for s, a in zip(S, A)] for x in X])
    ref = _vertex_enumeration(C, w, kappa * w.sum() / kappa.sum())
    assert obj == pytest.approx(ref, rel=1e-10)


def test_symmetric_sizes_equal():
    _, du, _ = solve_wcaa(_line_support(), EYE2, [[0, 0, 0], [1, 0, 0]], [1, 1])
    assert du.gamma.tolist() == [0.0, 0.0]


def test_positive_assignment_is_compatible():
    rng = np.random.default_rng(2)
    X = rng.uniform(0, 10, (3000, 3))
    S = rng.uniform(0, 10, (6, 3))
    A = np.broadcast_to(np.eye(3), (6, 3, 3))
    sup = ImageSupport(X, np.ones(len(X)))
    cl, du, obj = solve_wcaa(sup, A, S, rng.uniform(1, 3, 6))
    lab, _ = classify_points(diagram_from_duals(A, S, du), X)
    assert ((lab[cl.point] == cl.cluster + 1) | (lab[cl.point] == 0)).all()
    res, inf = check_complementary_slackness(sup, A, S, cl, du)
    scale = cl.info["cost_scale"]
    assert res <= 1e-6 * scale and inf <= 1e-6 * scale
    assert primal_objective(sup, A, S, cl) == pytest.approx(obj, rel=1e-9)
    assert dual_objective(sup, rng.uniform(1, 3, 6) * 0 + cl.info["kappa_scaled"], du) == \
        pytest.approx(obj, rel=1e-9)
    assert len(cl.fractional_points()) <= 5
    assert du.gamma.min() == 0.0


def test_injected_dual_fault():
    sup = _line_support()
    S = [[0, 0, 0], [1, 0, 0]]
    cl, du, _ = solve_wcaa(sup, EYE2, S, [1, 1])
    bad = DualSolution(du.eta, du.gamma - np.array([1.0, 0.0]))
    _, inf = check_complementary_slackness(sup, EYE2, S, cl, bad)
    assert inf == pytest.approx(1.0)


def test_zero_cost_instance():
    S = np.array([[0, 0, 0], [5, 0, 0], [0, 5, 0]], float)
    sup = ImageSupport(S, [2.0, 1.0, 1.0])
    cl, du, obj = solve_wcaa(sup, np.broadcast_to(np.eye(3), (3, 3, 3)), S, [2, 1, 1])
    assert obj == 0.0
    assert check_complementary_slackness(sup, np.broadcast_to(np.eye(3), (3, 3, 3)), S, cl, du)[0] == 0.0


def test_candidate_doubling_certifies_optimality():
    rng = np.random.default_rng(4)
    k = 12
    X = rng.uniform(0, 10, (2000, 3))
    S = rng.uniform(0, 10, (k, 3))
    A = np.broadcast_to(np.eye(3), (k, 3, 3))
    kappa = np.r_[np.full(k - 1, 1.0), 40.0]        # one cluster far too heavy for its neighborhood
    sup = ImageSupport(X, np.ones(len(X)))
    cl1, _, obj1 = solve_wcaa(sup, A, S, kappa, candidates=1)
    cl2, _, obj2 = solve_wcaa(sup, A, S, kappa, candidates=k)
    assert obj1 == pytest.approx(obj2, rel=1e-9)
    assert cl1.info["candidates"] > 1


def test_rejects_bad_kappa():
    with pytest.raises(ValueError):
        solve_wcaa(_line_support(), EYE2, [[0, 0, 0], [1, 0, 0]], [1, 0])
