import json

import numpy as np
import pytest

from socialldg.affinity import (
    STAGE_NAMES,
    AffinitySeries,
    UndefinedCosineError,
    cosine_curve,
    export_chord,
    segment_stages,
    stage_chords,
    write_analysis,
)
from socialldg.model import future_edge_mask
from socialldg.pose.data import TASKS


def test_identical_matrices_give_unit_curve():
    A = np.random.default_rng(0).uniform(size=(6, 6))
    assert np.allclose(cosine_curve([A, A, A]), 1.0, atol=1e-15)


def test_curve_ignores_masked_entries():
    rng = np.random.default_rng(1)
    mask = future_edge_mask(TASKS)
    A = rng.uniform(size=(6, 6))
    B = A.copy()
    B[mask] = 99.0
    assert cosine_curve([A, B], mask)[0] == pytest.approx(1.0, abs=1e-15)
    assert cosine_curve([A, B])[0] < 0.99


def test_curve_matches_loop_and_bounds():
    rng = np.random.default_rng(2)
    mats = [rng.uniform(size=(4, 4)) for _ in range(5)]
    c = cosine_curve(mats)
    for t in range(4):
        a, b = mats[t].ravel(), mats[t + 1].ravel()
        assert abs(c[t] - sum(a * b) / (sum(a * a) ** 0.5 * sum(b * b) ** 0.5)) < 1e-12
    assert np.all((c >= -1) & (c <= 1))


def test_zero_matrix_cosine_is_undefined():
    with pytest.raises(UndefinedCosineError):
        cosine_curve([np.zeros((3, 3)), np.ones((3, 3))])
    with pytest.raises(ValueError):
        cosine_curve([np.ones((3, 3))])


def test_segmentation_finds_the_two_deepest_minima():
    curve = [0.99, 0.98, 0.80, 0.97, 0.99, 0.96, 0.99, 0.60, 0.98, 0.99]
    seg = segment_stages(curve)
    assert seg.ranked[:2] == [7, 2]
    assert seg.boundaries == [2, 5, 7]
    assert seg.boundary_windows() == [3, 6, 8]
    assert len(seg.labels) == 11
    assert seg.labels[:3] == [STAGE_NAMES[0]] * 3
    assert seg.labels[3] == STAGE_NAMES[1] and seg.labels[8] == STAGE_NAMES[2]


def test_segmentation_is_shift_invariant_and_ignores_plateaus():
    curve = np.array([0.9, 0.7, 0.7, 0.9, 0.5, 0.9])
    a = segment_stages(curve)
    b = segment_stages(curve - 0.3)
    assert a.boundaries == b.boundaries == [4]
    assert segment_stages(np.linspace(1, 0, 8)).boundaries == []
    assert segment_stages([0.9, 0.899, 0.9], prominence=0.01).boundaries == []


def test_chord_export_matches_brute_force():
    rng = np.random.default_rng(3)
    mask = future_edge_mask(TASKS)
    A = np.where(mask, 0.0, rng.uniform(size=(6, 6)))
    chord = export_chord(A, mask, TASKS)
    mean = np.mean([A[i, j] for i in range(6) for j in range(6) if not mask[i, j]])
    expect = {(TASKS[j], TASKS[i]) for i in range(6) for j in range(6) if not mask[i, j] and A[i, j] > mean}
    assert {(l["source"], l["target"]) for l in chord.links} == expect
    assert chord.threshold == pytest.approx(mean, abs=1e-15)


def test_series_requires_increasing_windows():
    with pytest.raises(ValueError, match="increasing"):
        AffinitySeries([0, 0], [np.eye(2), np.eye(2)])
    with pytest.raises(ValueError):
        AffinitySeries([0], [np.eye(2), np.eye(2)])


def test_write_analysis(tmp_path):
    rng = np.random.default_rng(4)
    mask = future_edge_mask(TASKS)
    mats = [np.where(mask, 0.0, rng.uniform(0.2, 0.8, size=(6, 6))) for _ in range(8)]
    series = AffinitySeries(list(range(10, 18)), mats, list(TASKS))
    curve = cosine_curve(series, mask)
    seg = segment_stages(curve)
    out = write_analysis(tmp_path / "aff", series, curve, seg, mask)
    assert json.loads((out / "series.json").read_text())["tasks"] == list(TASKS)
    assert len((out / "curve.csv").read_text().splitlines()) == 8
    b = json.loads((out / "boundaries.json").read_text())
    assert b["boundary_windows"] == [series.windows[i + 1] for i in seg.boundaries]
    chords = json.loads((out / "chords.json").read_text())
    assert set(chords) <= set(STAGE_NAMES) | {"all"}
    assert set(stage_chords(series, seg, mask)) == set(chords)
