"""Six-task label schema, window samples, and pose-sequence preprocessing.

A pose sequence is a float array of shape ``(T, 133, 3)`` holding
``(x, y, confidence)`` per keypoint; after normalization ``x, y`` lie in
``[-0.5, 0.5]`` relative to the per-frame person bounding box.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .layout import FLIP_INDEX, NUM_KEYPOINTS

log = logging.getLogger(__name__)

TASKS = ("con_cur", "con_fut", "intent", "attitude", "act_cur", "act_fut")
CURRENT_TASKS = ("con_cur", "act_cur")
FUTURE_TASKS = ("con_fut", "act_fut")
FUTURE_OF = {"con_fut": "con_cur", "act_fut": "act_cur"}

CONTACT_CLASSES = ("no_contact", "contact")
INTENT_CLASSES = ("not_interested", "interested", "interacting")
ATTITUDE_CLASSES = ("positive", "negative")
JPL_ACTIONS = (
    "approach", "leave", "wave", "punch", "throw", "handshake",
    "hug", "pet", "point", "gaze", "no_response",
)  # fmt: skip
HARPER_ACTIONS = ("approach", "crash", "avoid", "touch", "stop", "punch", "kick")
PROFILES = {"jpl": JPL_ACTIONS, "harper": HARPER_ACTIONS}


class DatasetError(ValueError):
    """Malformed dataset file or record."""


class SchemaError(DatasetError):
    """A record violates the task schema or keypoint layout."""


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    name: str
    classes: tuple[str, ...]

    @property
    def num_classes(self) -> int:
        return len(self.classes)


@dataclass(frozen=True)
class TaskSchema:
    profile: str
    tasks: tuple[TaskSpec, ...]

    @classmethod
    def for_profile(cls, profile: str = "jpl") -> "TaskSchema":
        if profile not in PROFILES:
            raise ValueError(f"unknown schema profile {profile!r}; expected one of {sorted(PROFILES)}")
        actions = PROFILES[profile]
        return cls(
            profile,
            (
                TaskSpec("con_cur", CONTACT_CLASSES),
                TaskSpec("con_fut", CONTACT_CLASSES),
                TaskSpec("intent", INTENT_CLASSES),
                TaskSpec("attitude", ATTITUDE_CLASSES),
                TaskSpec("act_cur", actions),
                TaskSpec("act_fut", actions),
            ),
        )

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tasks)

    @property
    def num_classes(self) -> dict[str, int]:
        return {t.name: t.num_classes for t in self.tasks}

    def __getitem__(self, name: str) -> TaskSpec:
        for t in self.tasks:
            if t.name == name:
                return t
        raise KeyError(name)

    def subset(self, names: Iterable[str]) -> "TaskSchema":
        wanted = list(names)
        return TaskSchema(self.profile, tuple(self[n] for n in wanted))

    def validate(self, labels: dict[str, int]) -> None:
        for t in self.tasks:
            if t.name not in labels:
                raise SchemaError(f"missing label for task {t.name!r}")
            v = labels[t.name]
            if not (isinstance(v, (int, np.integer)) and 0 <= v < t.num_classes):
                raise SchemaError(f"label {v!r} out of range for task {t.name!r} ({t.num_classes} classes)")

    def to_json(self) -> dict:
        return {"profile": self.profile, "tasks": {t.name: list(t.classes) for t in self.tasks}}

    @classmethod
    def from_json(cls, obj: dict) -> "TaskSchema":
        return cls(obj["profile"], tuple(TaskSpec(n, tuple(c)) for n, c in obj["tasks"].items()))


@dataclass
class WindowSample:
    """One observation window with its six labels.

    ``clean`` optionally carries noise-free normalized coordinates (synthetic
    data only) for evaluating reconstruction against ground truth.
    """

    frames: np.ndarray
    labels: dict[str, int]
    scenario: str = ""
    window: int = 0
    clean: np.ndarray | None = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return self.frames.shape[0]


# -- normalization -------------------------------------------------------------------------


def normalize(sequence: np.ndarray, bboxes: np.ndarray) -> np.ndarray:
    """Map pixel coordinates into the per-frame box: center -> 0, edges -> +-0.5.

    ``bboxes`` is ``(T, 4)`` of ``(x, y, width, height)``; confidences pass through.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    bb = np.asarray(bboxes, dtype=np.float64).reshape(-1, 4)
    if np.any(bb[:, 2] <= 0) or np.any(bb[:, 3] <= 0):
        raise DegenerateInputError("bounding box with non-positive width or height")
    out = seq.copy()
    center = bb[:, :2] + bb[:, 2:] / 2
    out[..., 0] = (seq[..., 0] - center[:, None, 0]) / bb[:, None, 2]
    out[..., 1] = (seq[..., 1] - center[:, None, 1]) / bb[:, None, 3]
    return out


def denormalize(sequence: np.ndarray, bboxes: np.ndarray) -> np.ndarray:
    seq = np.asarray(sequence, dtype=np.float64)
    bb = np.asarray(bboxes, dtype=np.float64).reshape(-1, 4)
    out = seq.copy()
    center = bb[:, :2] + bb[:, 2:] / 2
    out[..., 0] = seq[..., 0] * bb[:, None, 2] + center[:, None, 0]
    out[..., 1] = seq[..., 1] * bb[:, None, 3] + center[:, None, 1]
    return out


def keypoint_bboxes(sequence: np.ndarray) -> np.ndarray:
    """Tight per-frame box around all keypoints, as ``(T, 4)`` x/y/width/height."""
    xy = np.asarray(sequence)[..., :2]
    lo = xy.min(axis=1)
    hi = xy.max(axis=1)
    return np.concatenate([lo, hi - lo], axis=1)


# -- windows -------------------------------------------------------------------------------


def sliding_windows(stream: np.ndarray, T: int = 10, stride: int = 10) -> list[np.ndarray]:
    """Windows starting at 0, stride, 2*stride, ...; a trailing partial window is dropped."""
    n = len(stream)
    if n < T:
        warnings.warn(f"stream of {n} frames is shorter than the window length {T}", stacklevel=2)
        return []
    return [np.asarray(stream[s : s + T]) for s in range(0, n - T + 1, stride)]


# -- augmentation ----------------------------------------------------------------------------


def flip_horizontal(frames: np.ndarray) -> np.ndarray:
    """Mirror x and swap left/right keypoints; applying it twice is the identity."""
    out = np.asarray(frames)[:, FLIP_INDEX].copy()
    out[..., 0] = -out[..., 0]
    return out


def crop(frames: np.ndarray, scale: float, center=(0.0, 0.0)) -> np.ndarray:
    """Crop a ``scale``-sized square of the normalized box and renormalize into it.

    Coordinates falling outside the crop are clipped to its border.
    """
    out = np.array(frames, dtype=np.float64, copy=True)
    c = np.asarray(center, dtype=np.float64)
    out[..., :2] = np.clip((out[..., :2] - c) / scale, -0.5, 0.5)
    return out


def augment(
    sample: WindowSample,
    count: int = 20,
    seed: int | np.random.Generator = 0,
    scale_range: tuple[float, float] = (0.7, 1.0),
    flip_prob: float = 0.5,
) -> list[WindowSample]:
    """``count`` variations, each an independent random crop plus an optional flip."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        s = rng.uniform(*scale_range)
        half = (1.0 - s) / 2
        c = rng.uniform(-half, half, size=2)
        do_flip = rng.random() < flip_prob
        frames = crop(sample.frames, s, c)
        clean = None
        if sample.clean is not None:
            clean_full = np.concatenate([sample.clean, np.zeros(sample.clean.shape[:-1] + (1,))], axis=-1)
            clean = crop(clean_full, s, c)
        if do_flip:
            frames = flip_horizontal(frames)
            clean = flip_horizontal(clean) if clean is not None else None
        frames[..., 2] = (sample.frames[:, FLIP_INDEX, 2] if do_flip else sample.frames[..., 2])
        out.append(
            WindowSample(
                frames=frames,
                labels=dict(sample.labels),
                scenario=sample.scenario,
                window=sample.window,
                clean=clean[..., :2] if clean is not None else None,
            )
        )
    return out


def augment_all(samples: Sequence[WindowSample], count: int, seed: int) -> list[WindowSample]:
    rng = np.random.default_rng(seed)
    out: list[WindowSample] = []
    for s in samples:
        out.extend(augment(s, count, rng))
    return out


# -- splits ----------------------------------------------------------------------------------


def split_by_scenario(
    samples: Sequence[WindowSample], ratios=(6, 2, 2), seed: int = 0
) -> tuple[list[WindowSample], list[WindowSample], list[WindowSample]]:
    """Partition scenarios (never individual windows) into train/val/test."""
    scenarios = sorted({s.scenario for s in samples})
    rng = np.random.default_rng(seed)
    order = [scenarios[i] for i in rng.permutation(len(scenarios))]
    total = sum(ratios)
    n_train = int(round(len(order) * ratios[0] / total))
    n_val = int(round(len(order) * ratios[1] / total))
    groups = {
        "train": set(order[:n_train]),
        "val": set(order[n_train : n_train + n_val]),
        "test": set(order[n_train + n_val :]),
    }
    split = {k: [s for s in samples if s.scenario in v] for k, v in groups.items()}
    return split["train"], split["val"], split["test"]


# -- JSON-lines dataset files ----------------------------------------------------------------


@dataclass
class Dataset:
    schema: TaskSchema
    samples: list[WindowSample]
    window: int = 10

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def save_dataset(path, samples: Sequence[WindowSample], schema: TaskSchema | None = None, window: int | None = None) -> Path:
    """Write a header record followed by one JSON record per window."""
    schema = schema or TaskSchema.for_profile("jpl")
    if window is None:
        window = samples[0].T if samples else 10
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        header = {"type": "header", "window": window, "num_keypoints": NUM_KEYPOINTS, **schema.to_json()}
        fh.write(json.dumps(header) + "\n")
        for s in samples:
            rec = {
                "scenario": s.scenario,
                "window": int(s.window),
                "frames": np.asarray(s.frames).tolist(),
                "labels": {k: int(v) for k, v in s.labels.items()},
            }
            if s.clean is not None:
                rec["clean"] = np.asarray(s.clean).tolist()
            fh.write(json.dumps(rec) + "\n")
    return path


def load_dataset(path) -> Dataset:
    path = Path(path)
    schema = TaskSchema.for_profile("jpl")
    window = 10
    samples: list[WindowSample] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if rec.get("type") == "header":
                schema = TaskSchema.from_json(rec)
                window = int(rec.get("window", window))
                continue
            samples.append(_parse_record(rec, schema, window, f"{path}:{lineno}"))
    return Dataset(schema, samples, window)


def _parse_record(rec: dict, schema: TaskSchema, window: int, where: str) -> WindowSample:
    name = f"record {rec.get('scenario', '?')}#{rec.get('window', '?')} ({where})"
    try:
        frames = np.asarray(rec["frames"], dtype=np.float64)
        labels = {k: int(v) for k, v in rec["labels"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{name}: malformed record ({exc})") from None
    if frames.ndim != 3 or frames.shape[1] != NUM_KEYPOINTS or frames.shape[2] != 3:
        raise SchemaError(f"{name}: expected frames of shape (T, {NUM_KEYPOINTS}, 3), got {frames.shape}")
    if frames.shape[0] != window:
        raise SchemaError(f"{name}: expected {window} frames, got {frames.shape[0]}")
    try:
        schema.validate(labels)
    except SchemaError as exc:
        raise SchemaError(f"{name}: {exc}") from None
    clean = np.asarray(rec["clean"], dtype=np.float64) if "clean" in rec else None
    return WindowSample(frames, labels, str(rec.get("scenario", "")), int(rec.get("window", 0)), clean)


def stack_frames(samples: Sequence[WindowSample]) -> np.ndarray:
    return np.stack([s.frames for s in samples])


def stack_labels(samples: Sequence[WindowSample], tasks: Sequence[str]) -> dict[str, np.ndarray]:
    return {t: np.array([s.labels[t] for s in samples], dtype=np.int64) for t in tasks}
