import json

import numpy as np
import pytest

from graindiagrams.metrics import (FitReport, accuracy, centroid_error, covariance_error,
                                   evaluate, neighborhood_report, predicted_counts, weight_error)

from conftest import strip


def test_weight_error_hand_example():
    scan = strip([1] * 8 + [2] * 8)
    pred = np.array([1] * 9 + [2] * 7)
    assert predicted_counts(scan, pred).tolist() == [9, 7]
    assert weight_error(scan, pred) == 0.125


def test_perfect_prediction(blob32):
    r = evaluate(blob32, blob32)
    assert r.accuracy == 1.0 and r.weight_error == 0.0
    assert r.centroid_error == 0.0 and r.covariance_error == 0.0
    assert (r.neighborhood_exact, r.neighborhood_le1, r.neighborhood_le2) == (100.0, 100.0, 100.0)
    assert r.empty_cells == []


def test_all_zero_prediction():
    scan = strip([1, 1, 2, 2])
    assert accuracy(scan, np.zeros(4, int)) == 0.0


def test_accuracy_complement():
    scan = strip([1, 1, 2, 2, 3, 3])
    pred = np.array([1, 0, 2, 3, 3, 0])
    acc = accuracy(scan, pred)
    wrong = np.count_nonzero(pred != scan.labels) / scan.n
    assert acc + wrong == 1.0
    assert acc == 0.5


def test_centroid_and_covariance_hand_example():
    # grain 1 = x ∈ {0.5, …, 9.5}; its first voxel is predicted as grain 2
    scan = strip([1] * 10 + [2] * 10)
    pred = np.array([2] + [1] * 9 + [2] * 10)
    x = scan.coordinates()[:, 0]
    v1 = abs(x[1:10].mean() - x[:10].mean())
    v2 = abs(np.r_[x[0], x[10:]].mean() - x[10:].mean())
    assert v1 == 0.5
    assert centroid_error(scan, pred) == pytest.approx((10 * v1 + 10 * v2) / 20, abs=1e-14)
    s1 = abs(np.var(x[1:10]) - np.var(x[:10]))
    s2 = abs(np.var(np.r_[x[0], x[10:]]) - np.var(x[10:]))
    assert covariance_error(scan, pred) == pytest.approx((10 * s1 + 10 * s2) / 20, abs=1e-12)


def test_empty_cell_policy():
    scan = strip([1, 1, 2, 2])
    pred = np.array([1, 1, 1, 1])
    r = evaluate(scan, pred)
    assert r.empty_cells == [2]
    # c(Ĉ₂) is the volume center 2.0, true centroid 3.0; Σ̂₂ = 0
    c1 = abs(2.0 - 1.0)
    assert r.centroid_error == pytest.approx((2 * c1 + 2 * 1.0) / 4)
    assert r.covariance_error == pytest.approx((2 * abs(1.25 - 0.25) + 2 * 0.25) / 4)


def test_neighborhood_strip_merge():
    scan = strip([1, 1, 2, 2, 3, 3])
    # grains 1 and 2 touch, 2 and 3 touch; the prediction swallows grain 2
    nb = neighborhood_report(scan, np.array([1, 1, 1, 1, 3, 3]))
    # grain 1: {2} vs {3} → 2 errors; grain 2: {1,3} vs {} → 2; grain 3: {2} vs {1} → 2
    assert nb.differences == (2, 2, 2)
    assert (nb.exact, nb.le1, nb.le2, nb.superset) == (0.0, 0.0, 100.0, 0.0)


def test_neighborhood_extra_neighbor():
    scan = strip([1, 1, 2, 2, 3, 3])
    # predicted pairs (1,2) and (1,3): grain 1 gains 3, grain 2 loses 3,
    # grain 3 loses 2 and gains 1
    nb = neighborhood_report(scan, np.array([1, 1, 2, 1, 3, 3]))
    assert nb.differences == (1, 1, 2)
    assert nb.superset == pytest.approx(100.0 / 3)
    assert (nb.exact, nb.le1, nb.le2) == (0.0, pytest.approx(200.0 / 3), 100.0)
    assert nb.exact <= nb.le1 <= nb.le2 <= 100.0


def test_swap_counterexample():
    scan = strip([1, 1, 2, 2])
    pred = np.array([2, 2, 1, 1])
    assert weight_error(scan, pred) == 0.0
    assert accuracy(scan, pred) == 0.0


def test_dims_mismatch():
    scan = strip([1, 1, 2, 2])
    with pytest.raises(ValueError):
        accuracy(scan, np.array([1, 2, 2]))
    with pytest.raises(ValueError):
        evaluate(scan, strip([1, 2, 2]))


def test_report_json_and_table(tmp_path):
    scan = strip([1] * 8 + [2] * 8)
    r = evaluate(scan, np.array([1] * 9 + [2] * 7), {"solve": 1.25})
    r.save(tmp_path / "r.json")
    back = FitReport.from_json(json.loads((tmp_path / "r.json").read_text()))
    assert back == r
    text = r.table("demo")
    lines = text.splitlines()
    assert "demo" in lines[0] and "0.1250" in text and "1.25" in text
    assert len({len(line) for line in lines}) == 1        # aligned columns
