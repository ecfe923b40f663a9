import numpy as np
import pytest

from socialldg.metrics import accuracy, confusion_matrix, macro_f1, majority_baseline_f1, per_class_f1, subset_average, task_report


def _f1_brute(pred, y, C):
    scores = []
    for c in range(C):
        tp = sum(1 for p, t in zip(pred, y) if p == c and t == c)
        fp = sum(1 for p, t in zip(pred, y) if p == c and t != c)
        fn = sum(1 for p, t in zip(pred, y) if p != c and t == c)
        scores.append(0.0 if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn))
    return sum(scores) / C


def test_perfect_predictions():
    y = np.array([0, 1, 2, 1])
    assert macro_f1(y, y, 3) == 1.0
    assert accuracy(y, y) == 1.0


def test_all_zero_prediction_on_balanced_binary():
    y = np.array([0, 1] * 50)
    assert macro_f1(np.zeros(100, dtype=int), y, 2) == pytest.approx(1 / 3, abs=1e-15)


def test_random_three_class_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 60))
        y, p = rng.integers(3, size=n), rng.integers(3, size=n)
        assert abs(macro_f1(p, y, 3) - _f1_brute(p, y, 3)) <= 1e-12


def test_absent_classes_count_as_zero():
    y = np.array([0, 0, 1])
    assert macro_f1(y, y, 4) == pytest.approx(0.5)


def test_confusion_matrix_layout_and_errors():
    cm = confusion_matrix([1, 1, 0], [0, 1, 0], 2)
    assert cm.tolist() == [[1, 1], [0, 1]]  # rows are true classes
    assert per_class_f1(cm).tolist() == pytest.approx([2 / 3, 2 / 3])
    with pytest.raises(ValueError, match="empty"):
        confusion_matrix([], [], 2)
    with pytest.raises(ValueError, match="shape"):
        confusion_matrix([0], [0, 1], 2)
    with pytest.raises(ValueError, match="class index"):
        confusion_matrix([0, 2], [0, 1], 2)


def test_task_report_average_and_subset():
    rng = np.random.default_rng(1)
    C = {"a": 2, "b": 3, "c": 5}
    y = {t: rng.integers(c, size=40) for t, c in C.items()}
    p = {t: rng.integers(c, size=40) for t, c in C.items()}
    rep = task_report(p, y, C)
    assert abs(rep["avg_f1"] - np.mean([rep["tasks"][t]["macro_f1"] for t in C])) <= 1e-12
    assert rep["averaging"] == "macro"
    assert all(0 <= rep["tasks"][t]["macro_f1"] <= 1 for t in C)
    assert np.asarray(rep["tasks"]["c"]["confusion"]).sum() == 40
    assert subset_average(rep, ["a"]) == rep["tasks"]["a"]["macro_f1"]
    with pytest.raises(ValueError, match="missing"):
        task_report(p, {"a": y["a"]}, C)


def test_majority_baseline():
    train = np.array([1, 1, 1, 0])
    test = np.array([1, 0, 1, 1])
    assert majority_baseline_f1(train, test, 2) == pytest.approx(macro_f1(np.ones(4, dtype=int), test, 2))
