"""Affinity dynamics: per-window matrices, consecutive cosine curves, stage boundaries, chord links."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import argrelmin, peak_prominences

STAGE_NAMES = ("pre-interaction", "interacting", "post-interaction")


class UndefinedCosineError(ValueError):
    pass


@dataclass
class AffinitySeries:
    windows: list[int]
    matrices: list[np.ndarray]
    tasks: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.windows) != len(self.matrices):
            raise ValueError("one matrix per window index is required")
        if any(b <= a for a, b in zip(self.windows, self.windows[1:])):
            raise ValueError("window indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.matrices)

    def to_json(self) -> list[dict]:
        return [{"window": int(w), "A": np.asarray(m).tolist()} for w, m in zip(self.windows, self.matrices)]


@dataclass
class StageSegmentation:
    boundaries: list[int]  # curve indices of accepted minima, sorted by position
    ranked: list[int]  # the same minima, deepest first
    prominences: list[float]
    labels: list[str] = field(default_factory=list)  # per series window, when two boundaries exist

    def boundary_windows(self) -> list[int]:
        """First window after each boundary: curve index ``t`` compares windows ``t`` and ``t + 1``."""
        return [b + 1 for b in self.boundaries]


def record_series(model, windows: np.ndarray, mode: str = "full", window_ids: Sequence[int] | None = None) -> AffinitySeries:
    """One forward pass per window; keeps the head-averaged affinity matrix."""
    from .training import predict

    x = np.asarray(windows)
    if len(x) < 2:
        raise ValueError("an affinity series needs at least two windows")
    _, aff = predict(model, x, mode, with_affinity=True)
    if aff is None:
        raise ValueError("model has no affinity matrix (independent heads)")
    ids = list(window_ids) if window_ids is not None else list(range(len(x)))
    return AffinitySeries(ids, [a for a in aff], list(model.tasks))


def _vectorize(A: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    return A[~mask] if mask is not None else A.reshape(-1)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedCosineError("cosine of a zero matrix is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_curve(series: AffinitySeries | Sequence[np.ndarray], mask: np.ndarray | None = None) -> np.ndarray:
    """``c_t = cos(vec A_t, vec A_{t+1})`` over unmasked entries."""
    mats = series.matrices if isinstance(series, AffinitySeries) else list(series)
    if len(mats) < 2:
        raise ValueError("need at least two matrices")
    m = None if mask is None else np.asarray(mask, dtype=bool)
    vecs = [_vectorize(A, m) for A in mats]
    return np.array([cosine(a, b) for a, b in zip(vecs, vecs[1:])])


def segment_stages(curve: Sequence[float], prominence: float = 0.01) -> StageSegmentation:
    """Strict local minima whose prominence reaches ``prominence``.

    The two deepest (most prominent) minima split the series into
    pre-interaction, interacting and post-interaction stages.
    """
    c = np.asarray(curve, dtype=np.float64)
    if len(c) < 3:
        raise ValueError("curve needs at least 3 points")
    (cand,) = argrelmin(c, order=1)  # strict on both sides
    if len(cand):
        prom = peak_prominences(-c, cand)[0]
        keep = prom >= prominence
        cand, prom = cand[keep], prom[keep]
    else:
        prom = np.zeros(0)
    order = np.lexsort((cand, -prom))
    ranked = [int(cand[i]) for i in order]
    top = sorted(ranked[:2])
    labels = []
    if len(top) == 2:
        n = len(c) + 1
        b0, b1 = top[0] + 1, top[1] + 1
        labels = [STAGE_NAMES[0] if w < b0 else STAGE_NAMES[1] if w < b1 else STAGE_NAMES[2] for w in range(n)]
    return StageSegmentation(sorted(ranked), ranked, [float(prom[i]) for i in order], labels)


@dataclass
class ChordExport:
    nodes: list[str]
    links: list[dict]
    threshold: float

    def to_json(self) -> dict:
        return {"nodes": self.nodes, "threshold": self.threshold, "links": self.links}


def export_chord(A: np.ndarray, mask: np.ndarray, tasks: Sequence[str]) -> ChordExport:
    """Directed links ``source -> target`` whose weight is strictly above the unmasked mean."""
    A = np.asarray(A, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    mean = float(A[~mask].mean())
    links = []
    for i, target in enumerate(tasks):
        for j, source in enumerate(tasks):
            if not mask[i, j] and A[i, j] > mean:
                links.append({"source": source, "target": target, "weight": float(A[i, j])})
    return ChordExport(list(tasks), links, mean)


def stage_chords(series: AffinitySeries, seg: StageSegmentation, mask: np.ndarray) -> dict[str, dict]:
    """Chord export of the stage-averaged matrix for every labelled stage."""
    if not seg.labels:
        return {"all": export_chord(np.mean(series.matrices, axis=0), mask, series.tasks).to_json()}
    out = {}
    for name in STAGE_NAMES:
        mats = [m for m, lab in zip(series.matrices, seg.labels) if lab == name]
        if mats:
            out[name] = export_chord(np.mean(mats, axis=0), mask, series.tasks).to_json()
    return out


def write_analysis(out_dir, series: AffinitySeries, curve: np.ndarray, seg: StageSegmentation, mask: np.ndarray) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "series.json").write_text(json.dumps({"tasks": series.tasks, "series": series.to_json()}, indent=1))
    with open(out / "curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["window", "cosine"])
        for t, c in enumerate(curve):
            w.writerow([series.windows[t], repr(float(c))])
    (out / "boundaries.json").write_text(
        json.dumps(
            {
                "curve_indices": seg.boundaries,
                "boundary_windows": [series.windows[b + 1] for b in seg.boundaries],
                "ranked": seg.ranked,
                "prominences": seg.prominences,
                "stage_labels": seg.labels,
            },
            indent=1,
        )
    )
    (out / "chords.json").write_text(json.dumps(stage_chords(series, seg, mask), indent=1))
    return out
