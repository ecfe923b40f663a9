"""Scripted synthetic interaction scenarios rendered as whole-body pose streams.

A scenario is a sequence of stages, each a motion primitive held for a number
of frames at 10 fps.  A parametric 3D body (torso, limbs, 68-point face,
21-point hands) is animated by the primitive, placed at a distance in front of
a robot-mounted pinhole camera and projected to pixels.  Confidences follow a
Beta(8, 2) base scaled by visibility and the stage's degradation level;
low-confidence keypoints receive coordinate noise proportional to ``1 - alpha``
so that confidence weighting carries real information.

Labels come from the frozen :data:`LABEL_RULES` table.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import (
    ATTITUDE_CLASSES,
    CONTACT_CLASSES,
    INTENT_CLASSES,
    TaskSchema,
    WindowSample,
    normalize,
    sliding_windows,
)
from .layout import _FACE_FLIP, FACE_START, LEFT_HAND_START, NUM_KEYPOINTS, RIGHT_HAND_START

FPS = 10.0
FOCAL = 600.0
IMAGE_SIZE = (640.0, 480.0)
CAMERA_HEIGHT = 1.0
CAMERA_SETBACK = 1.0  # camera sits this far behind the robot's front
CONTACT_DISTANCE = 1.0  # metres; contact actions only count below this


@dataclass(frozen=True)
class ActionRule:
    negative: bool
    touches: bool
    intent: str


LABEL_RULES: dict[str, ActionRule] = {
    "approach": ActionRule(False, False, "interested"),
    "leave": ActionRule(False, False, "not_interested"),
    "wave": ActionRule(False, False, "interacting"),
    "punch": ActionRule(True, True, "interacting"),
    "throw": ActionRule(True, False, "interacting"),
    "handshake": ActionRule(False, True, "interacting"),
    "hug": ActionRule(False, True, "interacting"),
    "pet": ActionRule(False, True, "interacting"),
    "point": ActionRule(False, False, "interacting"),
    "gaze": ActionRule(False, False, "not_interested"),
    "no_response": ActionRule(False, False, "not_interested"),
    "crash": ActionRule(False, True, "not_interested"),
    "avoid": ActionRule(False, False, "not_interested"),
    "touch": ActionRule(False, True, "interacting"),
    "stop": ActionRule(False, False, "interacting"),
    "kick": ActionRule(True, True, "interacting"),
}
"""Frozen label table: attitude, contact eligibility and intent per action."""


@dataclass(frozen=True)
class Stage:
    action: str
    frames: int
    noise: float = 0.03
    degradation: float = 0.0


@dataclass(frozen=True)
class ScenarioScript:
    name: str
    stages: tuple[Stage, ...]
    profile: str = "jpl"

    def validate(self, window: int = 10) -> None:
        schema = TaskSchema.for_profile(self.profile)
        actions = schema["act_cur"].classes
        for s in self.stages:
            if s.frames < 1:
                raise ValueError(f"stage {s.action!r} has duration {s.frames} < 1")
            if s.action not in actions:
                raise ValueError(f"action {s.action!r} is not in the {self.profile} profile")
        if self.length < window:
            raise ValueError(f"scenario {self.name!r} has {self.length} frames, fewer than the window {window}")

    @property
    def length(self) -> int:
        return sum(s.frames for s in self.stages)


@dataclass
class GeneratedScenario:
    script: ScenarioScript
    frames: np.ndarray  # (F, 133, 3) normalized x, y, confidence
    clean: np.ndarray  # (F, 133, 2) noise-free normalized coordinates
    pixels: np.ndarray  # (F, 133, 3) observed pixel coordinates + confidence
    bboxes: np.ndarray  # (F, 4)
    stage_index: np.ndarray  # (F,)
    distance: np.ndarray  # (F,)
    labels: list[dict[str, int]] = field(default_factory=list)
    window: int = 10

    def windows(self) -> list[WindowSample]:
        seqs = sliding_windows(self.frames, self.window, self.window)
        cleans = sliding_windows(self.clean, self.window, self.window)
        return [
            WindowSample(s.copy(), dict(lab), self.script.name, w, c.copy())
            for w, (s, c, lab) in enumerate(zip(seqs, cleans, self.labels))
        ]


# -- body model --------------------------------------------------------------------------------


def _rot_y(v: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Rotate about the vertical axis; ``a`` broadcasts against ``v[..., 0]``."""
    c, s = np.cos(a), np.sin(a)
    out = v.copy()
    out[..., 0] = v[..., 0] * c + v[..., 2] * s
    out[..., 2] = -v[..., 0] * s + v[..., 2] * c
    return out


def _rot_x(v: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Tilt forward: positive ``a`` moves +y toward +z."""
    c, s = np.cos(a), np.sin(a)
    out = v.copy()
    out[..., 1] = v[..., 1] * c - v[..., 2] * s
    out[..., 2] = v[..., 1] * s + v[..., 2] * c
    return out


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _limb_dir(abduct: np.ndarray, flex: np.ndarray, side: float) -> np.ndarray:
    """Unit direction from hanging-down: ``flex`` swings forward/up, ``abduct`` sideways."""
    return np.stack(
        [side * np.sin(abduct) * np.cos(flex), -np.cos(abduct) * np.cos(flex), np.sin(flex)],
        axis=-1,
    )


def _face_template() -> np.ndarray:
    p = np.zeros((68, 3))
    t = np.linspace(0, 1, 17)
    p[:17] = np.stack([-0.072 * np.cos(np.pi * t), -0.11 * np.sin(np.pi * t) ** 1.3, 0.02 + 0.06 * np.sin(np.pi * t)], 1)
    for i, x in enumerate(np.linspace(-0.062, -0.016, 5)):
        p[17 + i] = (x, 0.045 + 0.008 * np.sin(np.pi * i / 4), 0.085)
    for i in range(4):
        p[27 + i] = (0.0, 0.03 - 0.015 * i, 0.09 + 0.009 * i)
    p[31], p[32], p[33] = (-0.018, -0.025, 0.095), (-0.009, -0.028, 0.1), (0.0, -0.03, 0.102)
    for k, a in enumerate([np.pi, 2 * np.pi / 3, np.pi / 3, 0.0, -np.pi / 3, -2 * np.pi / 3]):
        p[36 + k] = (-0.035 + 0.012 * np.cos(a), 0.018 + 0.005 * np.sin(a), 0.08)
    p[48], p[49], p[50], p[51] = (-0.026, -0.058, 0.085), (-0.016, -0.05, 0.092), (-0.006, -0.048, 0.095), (0.0, -0.049, 0.096)
    p[59], p[58], p[57] = (-0.017, -0.066, 0.09), (-0.007, -0.069, 0.093), (0.0, -0.07, 0.094)
    p[60], p[61], p[62] = (-0.02, -0.058, 0.088), (-0.008, -0.055, 0.092), (0.0, -0.055, 0.093)
    p[67], p[66] = (-0.008, -0.06, 0.092), (0.0, -0.06, 0.093)
    for a, b in _FACE_FLIP:  # mirror the subject's right half onto the left half
        src, dst = (a, b) if p[a, 0] < 0 else (b, a)
        p[dst] = p[src] * (-1, 1, 1)
    return p


FACE_TEMPLATE = _face_template()
_LOWER_LIP = np.array([55, 56, 57, 58, 59, 65, 66, 67])
_FINGER_LATERAL = np.array([-0.022, -0.007, 0.008, 0.022])  # index..pinky, thumb side negative
_FINGER_LENGTHS = np.array([[0.04, 0.03, 0.025], [0.045, 0.028, 0.024], [0.042, 0.027, 0.023], [0.033, 0.022, 0.02]])
_THUMB_LENGTHS = np.array([0.035, 0.03, 0.025])

POSE_FIELDS = (
    "yaw", "lean", "twist", "head_yaw", "head_pitch", "bob", "mouth",
    "l_up_ab", "l_up_fl", "l_fo_ab", "l_fo_fl", "l_roll", "l_fist", "l_point",
    "r_up_ab", "r_up_fl", "r_fo_ab", "r_fo_fl", "r_roll", "r_fist", "r_point",
    "l_thigh", "l_knee", "r_thigh", "r_knee",
)  # fmt: skip


@dataclass(frozen=True)
class BodyShape:
    height: float = 1.0  # scale relative to a 1.7 m adult
    width: float = 1.0
    left_handed: bool = False

    @classmethod
    def sample(cls, rng: np.random.Generator) -> "BodyShape":
        return cls(rng.uniform(0.88, 1.1), rng.uniform(0.9, 1.12), bool(rng.random() < 0.15))


def _hand_points(wrist, fore, fist, point, roll, side, scale):
    """21 hand keypoints in COCO order from the wrist position and forearm direction."""
    u = _unit(fore)
    up = np.broadcast_to([0.0, 1.0, 0.0], u.shape)
    fwd = np.broadcast_to([0.0, 0.0, 1.0], u.shape)
    ref = np.where((np.abs(u[:, 1]) > 0.9)[:, None], fwd, up)
    v0 = _unit(np.cross(u, ref))
    w0 = np.cross(u, v0)
    c, s = np.cos(roll)[:, None], np.sin(roll)[:, None]
    v = c * v0 + s * w0
    w = np.cross(u, v)
    lat = side * v
    out = np.empty((len(u), 21, 3))
    out[:, 0] = wrist
    # thumb
    curl = 0.25 + 0.6 * fist
    tdir = _unit(0.6 * u - 0.8 * lat + 0.2 * w)
    p = wrist + scale * (0.025 * u - 0.02 * lat)
    out[:, 1] = p
    for j in range(3):
        a = (curl * (j + 1))[:, None]
        d = np.cos(a) * tdir + np.sin(a) * _unit(u + w)
        p = p + scale * _THUMB_LENGTHS[j] * d
        out[:, 2 + j] = p
    for f in range(4):
        finger_curl = 0.2 + 1.15 * fist
        if f == 0:
            finger_curl = finger_curl * (1.0 - point)
        base = wrist + scale * (0.085 * u + _FINGER_LATERAL[f] * lat)
        out[:, 5 + 4 * f] = base
        p = base
        for j in range(3):
            a = (finger_curl * (j + 1))[:, None]
            p = p + scale * _FINGER_LENGTHS[f, j] * (np.cos(a) * u + np.sin(a) * w)
            out[:, 6 + 4 * f + j] = p
    return out


def body_points(pose: dict[str, np.ndarray], shape: BodyShape) -> tuple[np.ndarray, np.ndarray]:
    """3D keypoints ``(F, 133, 3)`` in the person's frame and the face outward normals' depth.

    Person frame: +x is the person's left, +y up, +z the person's forward.
    """
    F = len(pose["yaw"])
    hs, ws = shape.height, shape.width
    pts = np.zeros((F, NUM_KEYPOINTS, 3))
    pelvis = np.stack([np.zeros(F), 0.95 * hs + pose["bob"], np.zeros(F)], 1)

    def torso(v):
        v = np.broadcast_to(np.asarray(v, dtype=float), (F, 3))
        return _rot_x(_rot_y(v, pose["twist"]), pose["lean"])

    for side, name, hip_i, knee_i, ankle_i, toes in ((1.0, "l", 11, 13, 15, (17, 18, 19)), (-1.0, "r", 12, 14, 16, (20, 21, 22))):
        hip = pelvis + np.array([side * 0.1 * ws, 0.0, 0.0])
        th = pose[f"{name}_thigh"]
        kn = th - pose[f"{name}_knee"]
        knee = hip + 0.45 * hs * np.stack([np.zeros(F), -np.cos(th), np.sin(th)], 1)
        ankle = knee + 0.43 * hs * np.stack([np.zeros(F), -np.cos(kn), np.sin(kn)], 1)
        pts[:, hip_i], pts[:, knee_i], pts[:, ankle_i] = hip, knee, ankle
        big, small, heel = toes
        pts[:, big] = ankle + hs * np.array([-side * 0.02, -0.07, 0.16])
        pts[:, small] = ankle + hs * np.array([side * 0.045, -0.07, 0.13])
        pts[:, heel] = ankle + hs * np.array([0.0, -0.06, -0.05])

    for side, name, sh_i, el_i, wr_i, hand_start in ((1.0, "l", 5, 7, 9, LEFT_HAND_START), (-1.0, "r", 6, 8, 10, RIGHT_HAND_START)):
        shoulder = pelvis + torso([side * 0.19 * ws, 0.5 * hs, 0.0])
        up = torso(_limb_dir(pose[f"{name}_up_ab"], pose[f"{name}_up_fl"], side))
        fore = torso(_limb_dir(pose[f"{name}_fo_ab"], pose[f"{name}_fo_fl"], side))
        elbow = shoulder + 0.3 * hs * up
        wrist = elbow + 0.27 * hs * fore
        pts[:, sh_i], pts[:, el_i], pts[:, wr_i] = shoulder, elbow, wrist
        pts[:, hand_start : hand_start + 21] = _hand_points(
            wrist, fore, pose[f"{name}_fist"], pose[f"{name}_point"], pose[f"{name}_roll"], side, hs
        )

    head_center = pelvis + torso([0.0, 0.72 * hs, 0.02])
    face = np.broadcast_to(FACE_TEMPLATE * hs, (F, 68, 3)).copy()
    face[:, _LOWER_LIP, 1] -= (0.018 * hs * pose["mouth"])[:, None]
    ears = np.array([[0.075, 0.005, -0.01], [-0.075, 0.005, -0.01]]) * hs
    normals = _unit(np.concatenate([FACE_TEMPLATE - [0, 0, -0.04], [[1, 0, -0.3], [-1, 0, -0.3]]]))
    local = np.concatenate([face, np.broadcast_to(ears, (F, 2, 3))], 1)

    def head(v):
        v = _rot_x(_rot_y(v, pose["head_yaw"][:, None]), pose["head_pitch"][:, None])
        return _rot_x(_rot_y(v, pose["twist"][:, None]), pose["lean"][:, None])

    world = head_center[:, None] + head(local)
    world_normals = head(np.broadcast_to(normals, (F, 70, 3)).copy())
    pts[:, FACE_START : FACE_START + 68] = world[:, :68]
    pts[:, 3], pts[:, 4] = world[:, 68], world[:, 69]
    pts[:, 0] = world[:, 30]
    pts[:, 1] = world[:, 42:48].mean(1)
    pts[:, 2] = world[:, 36:42].mean(1)

    # whole-body heading about the vertical through the pelvis
    pts = _rot_y(pts, pose["yaw"][:, None])
    facing = np.full((F, NUM_KEYPOINTS), 1.0)
    nz = _rot_y(world_normals, pose["yaw"][:, None])[..., 2]
    facing[:, FACE_START : FACE_START + 68] = nz[:, :68]
    facing[:, 3], facing[:, 4] = nz[:, 68], nz[:, 69]
    facing[:, 0] = nz[:, 30]
    facing[:, 1], facing[:, 2] = nz[:, 42:48].mean(1), nz[:, 36:42].mean(1)
    return pts, facing


# -- motion primitives ---------------------------------------------------------------------------


def _idle(t: np.ndarray, rng_params: dict) -> dict[str, np.ndarray]:
    z = np.zeros_like(t)
    ph = rng_params["phase"]
    pose = {k: z.copy() for k in POSE_FIELDS}
    for s in ("l", "r"):
        pose[f"{s}_up_ab"] = z + 0.12
        pose[f"{s}_up_fl"] = z + 0.05 + 0.03 * np.sin(0.7 * t + ph)
        pose[f"{s}_fo_ab"] = z + 0.1
        pose[f"{s}_fo_fl"] = z + 0.25
        pose[f"{s}_fist"] = z + 0.3
        pose[f"{s}_knee"] = z + 0.05
    pose["yaw"] = 0.05 * np.sin(0.3 * t + ph)
    pose["head_yaw"] = 0.1 * np.sin(0.5 * t + 2 * ph)
    return pose


def _gait(pose, t, freq, amp=1.0):
    s = np.sin(2 * np.pi * freq * t)
    c = np.cos(2 * np.pi * freq * t)
    pose["l_thigh"] = 0.35 * amp * s
    pose["r_thigh"] = -0.35 * amp * s
    pose["l_knee"] = 0.1 + 0.5 * amp * np.maximum(0, -c)
    pose["r_knee"] = 0.1 + 0.5 * amp * np.maximum(0, c)
    pose["l_up_fl"] = -0.3 * amp * s
    pose["r_up_fl"] = 0.3 * amp * s
    pose["l_fo_fl"] = pose["l_up_fl"] + 0.35
    pose["r_fo_fl"] = pose["r_up_fl"] + 0.35
    pose["bob"] = 0.025 * np.abs(s)
    return pose


def _pulse(t, period, width):
    """Periodic smooth bump: rises and falls within the first ``width`` of each period."""
    p = np.mod(t, period) / period
    return np.where(p < width, np.sin(np.pi * p / width) ** 2, 0.0)


def _dominant(pose, left_handed):
    return ("l", "r") if left_handed else ("r", "l")


def _motion(action: str) -> Callable:
    def approach(t, k, P, d, o):
        P = _gait(P, t, 1.7 * k)
        P["head_pitch"] = 0.05 + 0 * t
        return P

    def leave(t, k, P, d, o):
        P = _gait(P, t, 1.7 * k)
        P["yaw"] = np.pi * np.minimum(1.0, t / 0.6) * o["turn"]
        return P

    def wave(t, k, P, d, o):
        P[f"{d}_up_ab"] = 2.2 + 0 * t
        P[f"{d}_up_fl"] = 0.3 + 0 * t
        P[f"{d}_fo_ab"] = 2.9 + 0.45 * np.sin(2 * np.pi * 1.8 * k * t)
        P[f"{d}_fo_fl"] = 0.3 + 0 * t
        P[f"{d}_fist"] = 0 * t
        P[f"{d}_roll"] = 1.4 + 0 * t
        P["mouth"] = 0.3 + 0 * t
        P["head_yaw"] *= 0.3
        return P

    def punch(t, k, P, d, o):
        e = _pulse(t, 0.8 / k, 0.35)
        other = "l" if d == "r" else "r"
        side = 1.0 if d == "l" else -1.0
        P[f"{d}_up_ab"] = 0.35 - 0.2 * e
        P[f"{d}_up_fl"] = 0.5 + 1.05 * e
        P[f"{d}_fo_ab"] = 0.1 + 0 * t
        P[f"{d}_fo_fl"] = 1.95 - 0.4 * e
        P[f"{other}_up_fl"] = 0.6 + 0 * t
        P[f"{other}_fo_fl"] = 2.2 + 0 * t
        P[f"{d}_fist"] = 1.0 + 0 * t
        P[f"{other}_fist"] = 1.0 + 0 * t
        P["lean"] = 0.15 + 0.1 * e
        P["twist"] = 0.3 * e * side
        P["head_pitch"] = -0.12 + 0 * t
        P["head_yaw"] *= 0.2
        P["l_thigh"], P["r_thigh"] = 0.15 + 0 * t, -0.1 + 0 * t
        return P

    def throw(t, k, P, d, o):
        period = 1.3 / k
        p = np.mod(t, period) / period
        wind = np.clip(p / 0.6, 0, 1)
        rel = np.clip((p - 0.6) / 0.2, 0, 1)
        side = 1.0 if d == "l" else -1.0
        P[f"{d}_up_ab"] = 1.6 - 0.6 * rel
        P[f"{d}_up_fl"] = -0.6 * wind + 2.0 * rel
        P[f"{d}_fo_ab"] = 2.4 - 1.2 * rel
        P[f"{d}_fo_fl"] = -0.9 * wind + 2.4 * rel
        P[f"{d}_fist"] = 0.6 - 0.5 * rel
        P["twist"] = side * (-0.4 * wind + 0.8 * rel)
        P["lean"] = -0.15 * wind + 0.35 * rel
        return P

    def handshake(t, k, P, d, o):
        P[f"{d}_up_ab"] = 0.2 + 0 * t
        P[f"{d}_up_fl"] = 0.7 + 0 * t
        P[f"{d}_fo_ab"] = 0.15 + 0 * t
        P[f"{d}_fo_fl"] = 1.35 + 0.15 * np.sin(2 * np.pi * 2.0 * k * t)
        P[f"{d}_roll"] = np.pi / 2 + 0 * t
        P[f"{d}_fist"] = 0.45 + 0 * t
        P["lean"] = 0.1 + 0 * t
        P["mouth"] = 0.25 + 0 * t
        P["head_yaw"] *= 0.3
        return P

    def hug(t, k, P, d, o):
        w = np.minimum(1.0, t * k / 1.5)
        for s in ("l", "r"):
            P[f"{s}_up_ab"] = 1.3 - 0.6 * w
            P[f"{s}_up_fl"] = 0.9 + 0.5 * w
            P[f"{s}_fo_ab"] = 1.1 - 1.0 * w
            P[f"{s}_fo_fl"] = 1.5 + 0 * t
            P[f"{s}_fist"] = 0.2 + 0 * t
        P["lean"] = 0.25 * w
        P["head_yaw"] = 0.45 * w * o["turn"]
        P["head_pitch"] = -0.1 * w
        return P

    def pet(t, k, P, d, o):
        P[f"{d}_up_ab"] = 0.2 + 0 * t
        P[f"{d}_up_fl"] = 1.0 + 0.1 * np.sin(2 * np.pi * 1.2 * k * t)
        P[f"{d}_fo_ab"] = 0.1 + 0 * t
        P[f"{d}_fo_fl"] = 0.6 + 0.25 * np.sin(2 * np.pi * 1.2 * k * t)
        P[f"{d}_fist"] = 0 * t
        P[f"{d}_roll"] = -np.pi / 2 + 0 * t
        P["lean"] = 0.35 + 0 * t
        P["head_pitch"] = -0.35 + 0 * t
        P["l_knee"], P["r_knee"] = 0.25 + 0 * t, 0.25 + 0 * t
        return P

    def point(t, k, P, d, o):
        side = 1.0 if d == "l" else -1.0
        P[f"{d}_up_ab"] = 1.1 * o["amp"] + 0 * t
        P[f"{d}_up_fl"] = 1.0 + 0 * t
        P[f"{d}_fo_ab"] = 1.1 * o["amp"] + 0 * t
        P[f"{d}_fo_fl"] = 1.05 + 0 * t
        P[f"{d}_fist"] = 1.0 + 0 * t
        P[f"{d}_point"] = 1.0 + 0 * t
        P["head_yaw"] = 0.35 * side + 0 * t
        P["yaw"] = 0.15 * side + 0 * t
        return P

    def gaze(t, k, P, d, o):
        P["head_yaw"] *= 0.2
        P["head_pitch"] = 0.04 * np.sin(2 * np.pi * 0.4 * t)
        P["yaw"] *= 0.5
        return P

    def no_response(t, k, P, d, o):
        P["yaw"] = o["turn"] * o["away"] + 0.05 * np.sin(0.3 * t)
        P["head_yaw"] = o["turn"] * 0.3 + P["head_yaw"]
        P["head_pitch"] = -0.15 + 0 * t
        return P

    def crash(t, k, P, d, o):
        P = _gait(P, t, 2.3 * k, 1.2)
        P["lean"] = 0.2 + 0 * t
        P["head_yaw"] = 0.7 * o["turn"] + 0 * t
        return P

    def avoid(t, k, P, d, o):
        P = _gait(P, t, 1.8 * k)
        P["yaw"] = 1.2 * o["turn"] + 0 * t
        P["head_yaw"] = -0.5 * o["turn"] + 0 * t
        return P

    def touch(t, k, P, d, o):
        e = _pulse(t, 1.5 / k, 0.7)
        P[f"{d}_up_fl"] = 0.3 + 1.1 * e
        P[f"{d}_fo_fl"] = 0.4 + 1.05 * e
        P[f"{d}_fist"] = 0.1 + 0 * t
        P[f"{d}_roll"] = -0.8 + 0 * t
        P["lean"] = 0.15 * e
        P["head_pitch"] = -0.1 + 0 * t
        return P

    def stop(t, k, P, d, o):
        for s in ("l", "r"):
            P[f"{s}_up_ab"] = 0.25 + 0 * t
            P[f"{s}_up_fl"] = 1.2 + 0.05 * np.sin(2 * np.pi * 0.5 * t)
            P[f"{s}_fo_ab"] = 0.2 + 0 * t
            P[f"{s}_fo_fl"] = 2.2 + 0 * t
            P[f"{s}_fist"] = 0 * t
            P[f"{s}_roll"] = 1.5 + 0 * t
        P["head_yaw"] *= 0.2
        P["lean"] = -0.08 + 0 * t
        return P

    def kick(t, k, P, d, o):
        e = _pulse(t, 1.0 / k, 0.5)
        P[f"{d}_thigh"] = 1.2 * e
        P[f"{d}_knee"] = 1.1 - 0.95 * e + 0.1
        for s in ("l", "r"):
            P[f"{s}_up_ab"] = 0.6 + 0 * t
            P[f"{s}_fist"] = 0.8 + 0 * t
        P["lean"] = -0.15 * e
        P["head_pitch"] = -0.2 + 0 * t
        return P

    table = dict(
        approach=approach, leave=leave, wave=wave, punch=punch, throw=throw, handshake=handshake,
        hug=hug, pet=pet, point=point, gaze=gaze, no_response=no_response, crash=crash,
        avoid=avoid, touch=touch, stop=stop, kick=kick,
    )  # fmt: skip
    return table[action]


# start distance (m), target distance, and approach speed (m/s) per action
_DISTANCE = {
    "approach": (4.0, 1.2, 0.9),
    "leave": (1.5, 6.0, 1.0),
    "wave": (2.2, 2.2, 0.0),
    "punch": (0.55, 0.55, 1.5),
    "throw": (2.5, 2.5, 0.0),
    "handshake": (0.6, 0.6, 1.0),
    "hug": (0.45, 0.45, 1.0),
    "pet": (0.55, 0.55, 1.0),
    "point": (2.2, 2.2, 0.0),
    "gaze": (2.5, 2.5, 0.0),
    "no_response": (3.0, 3.0, 0.0),
    "crash": (3.0, 0.3, 1.8),
    "avoid": (2.0, 2.0, 0.0),
    "touch": (0.6, 0.6, 1.0),
    "stop": (1.8, 1.8, 0.0),
    "kick": (0.7, 0.7, 1.5),
}
_WALKING = {"approach", "leave", "crash"}
_BLEND_FRAMES = 3


def _distance_track(action: str, start: float, n: int, k: float) -> np.ndarray:
    _, target, speed = _DISTANCE[action]
    d = np.empty(n)
    cur = start
    for i in range(n):
        if action in _WALKING:
            step = speed * k / FPS
            cur = max(target, cur - step) if target < cur else min(target, cur + step)
        elif speed > 0:
            cur = target + (cur - target) * np.exp(-speed * 2.5 / FPS)
        else:
            # stationary gestures keep their distance unless they start too close
            cur = cur + (max(cur, target * 0.8) - cur) * 0.3
        d[i] = cur
    return d


def _stage_labels(action: str, mean_distance: float, schema: TaskSchema) -> dict[str, int]:
    rule = LABEL_RULES[action]
    contact = rule.touches and mean_distance < CONTACT_DISTANCE
    return {
        "con_cur": CONTACT_CLASSES.index("contact" if contact else "no_contact"),
        "intent": INTENT_CLASSES.index(rule.intent),
        "attitude": ATTITUDE_CLASSES.index("negative" if rule.negative else "positive"),
        "act_cur": schema["act_cur"].classes.index(action),
    }


def window_labels(stage_index: np.ndarray, distance: np.ndarray, stages, schema: TaskSchema, window: int) -> list[dict[str, int]]:
    """Current labels from each window's majority stage; futures copied from the next window."""
    n = len(stage_index) // window
    current = []
    for w in range(n):
        idx = stage_index[w * window : (w + 1) * window]
        major = int(np.bincount(idx).argmax())
        dist = distance[w * window : (w + 1) * window][idx == major].mean()
        current.append(_stage_labels(stages[major].action, dist, schema))
    labels = []
    for w in range(n):
        nxt = current[min(w + 1, n - 1)]
        labels.append({**current[w], "con_fut": nxt["con_cur"], "act_fut": nxt["act_cur"]})
    return labels


def generate_scenario(script: ScenarioScript, seed: int, window: int = 10) -> GeneratedScenario:
    """Render ``script`` deterministically for ``seed``."""
    script.validate(window)
    schema = TaskSchema.for_profile(script.profile)
    rng = np.random.default_rng(seed)
    shape = BodyShape.sample(rng)
    dom = "l" if shape.left_handed else "r"

    poses = []
    distances = []
    stage_index = []
    prev_last = None
    dist = None
    lateral = rng.normal(0.0, 0.15)
    for si, st in enumerate(script.stages):
        k = rng.uniform(0.85, 1.15)
        opts = {"turn": rng.choice([-1.0, 1.0]), "away": rng.uniform(0.9, 1.4), "amp": rng.uniform(0.85, 1.15)}
        t = np.arange(st.frames) / FPS + rng.uniform(0, 0.3)
        P = _idle(t, {"phase": rng.uniform(0, 2 * np.pi)})
        P = _motion(st.action)(t, k, P, dom, opts)
        P = {f: np.asarray(P[f], dtype=float) * np.ones_like(t) for f in POSE_FIELDS}
        if prev_last is not None:
            wgt = np.clip(1.0 - (np.arange(st.frames) + 1) / (_BLEND_FRAMES + 1), 0.0, 1.0)
            for f in POSE_FIELDS:
                P[f] = wgt * prev_last[f] + (1 - wgt) * P[f]
        prev_last = {f: P[f][-1] for f in POSE_FIELDS}
        start = _DISTANCE[st.action][0] * rng.uniform(0.9, 1.1) if dist is None else dist
        track = _distance_track(st.action, start, st.frames, k)
        dist = track[-1]
        poses.append(P)
        distances.append(track)
        stage_index.append(np.full(st.frames, si))

    pose = {f: np.concatenate([p[f] for p in poses]) for f in POSE_FIELDS}
    distance = np.concatenate(distances)
    stage_index = np.concatenate(stage_index)
    Fn = len(distance)

    pts, facing = body_points(pose, shape)
    if any(s.action == "avoid" for s in script.stages):
        drift = np.cumsum(np.where(np.isin(stage_index, [i for i, s in enumerate(script.stages) if s.action == "avoid"]), 0.08, 0.0))
    else:
        drift = np.zeros(Fn)
    # camera frame: X right (= person's left when facing the robot), Y up, Z depth
    X = pts[..., 0] + lateral + drift[:, None] * np.sign(lateral + 1e-9)
    Y = pts[..., 1] - CAMERA_HEIGHT
    Z = np.maximum(distance[:, None] + CAMERA_SETBACK - pts[..., 2], 0.2)
    cx, cy = IMAGE_SIZE[0] / 2, IMAGE_SIZE[1] / 2
    shake = np.cumsum(rng.normal(0.0, 0.6, size=(Fn, 2)), axis=0) * 0.3
    u = cx + FOCAL * X / Z + shake[:, :1]
    v = cy - FOCAL * Y / Z + shake[:, 1:]
    clean_px = np.stack([u, v], -1)

    # confidences
    base = rng.beta(8, 2, size=NUM_KEYPOINTS)
    alpha = 0.5 * base + 0.5 * rng.beta(8, 2, size=(Fn, NUM_KEYPOINTS))
    vis = np.clip(facing * 1.4 + 0.35, 0.05, 1.0)
    alpha *= vis
    hands = np.r_[LEFT_HAND_START : LEFT_HAND_START + 21, RIGHT_HAND_START : RIGHT_HAND_START + 21]
    alpha[:, hands] *= 0.85
    inside = (u >= 0) & (u <= IMAGE_SIZE[0]) & (v >= 0) & (v <= IMAGE_SIZE[1])
    alpha = np.where(inside, alpha, alpha * 0.3)
    noise = np.array([script.stages[i].noise for i in stage_index])[:, None]
    degr = np.array([script.stages[i].degradation for i in stage_index])[:, None]
    alpha *= 1.0 - degr * rng.uniform(0.0, 1.0, size=alpha.shape)
    alpha = np.clip(alpha, 0.0, 1.0)

    # observation noise grows with (1 - alpha): jitter plus collapse toward the body centre
    height_px = clean_px[..., 1].max(1) - clean_px[..., 1].min(1)
    centre = clean_px.mean(1, keepdims=True)
    miss = (1.0 - alpha)[..., None]
    jitter = rng.normal(size=clean_px.shape) * (noise * height_px[:, None])[..., None]
    pull = np.minimum(1.0, 4.0 * noise)[..., None]
    obs_px = clean_px + miss * (jitter + pull * (centre - clean_px))
    obs_px += rng.normal(size=obs_px.shape) * 0.002 * height_px[:, None, None]

    # person box: clean extent with a little padding and detector jitter
    lo, hi = clean_px.min(1), clean_px.max(1)
    size = (hi - lo) * (1.08 + rng.normal(0.0, 0.01, size=(Fn, 2)))
    mid = (lo + hi) / 2 + rng.normal(0.0, 0.005, size=(Fn, 2)) * (hi - lo)
    bboxes = np.concatenate([mid - size / 2, size], 1)
    pixels = np.concatenate([obs_px, alpha[..., None]], -1)
    frames = normalize(pixels, bboxes)
    frames[..., :2] = np.clip(frames[..., :2], -0.5, 0.5)
    clean = normalize(np.concatenate([clean_px, alpha[..., None]], -1), bboxes)[..., :2]

    labels = window_labels(stage_index, distance, script.stages, schema, window)
    return GeneratedScenario(script, frames, clean, pixels, bboxes, stage_index, distance, labels, window)


# -- scenario grammars ----------------------------------------------------------------------------

_JPL_MAIN = ("wave", "punch", "throw", "handshake", "hug", "pet", "point")
_HARPER_MAIN = ("crash", "avoid", "touch", "stop", "punch", "kick")
_LEAD = {"jpl": ("approach", "gaze", "no_response"), "harper": ("approach",)}
_TAIL = {"jpl": ("leave", "gaze", "no_response"), "harper": ("approach", "avoid")}


def random_script(rng: np.random.Generator, name: str, profile: str = "jpl", noise=(0.02, 0.06), degradation=(0.0, 0.25)) -> ScenarioScript:
    """Pre-interaction, interaction and post-interaction stages drawn from a small grammar."""
    main = _JPL_MAIN if profile == "jpl" else _HARPER_MAIN
    lead, tail = _LEAD[profile], _TAIL[profile]

    def stage(action, lo, hi):
        return Stage(action, int(rng.integers(lo, hi + 1)), float(rng.uniform(*noise)), float(rng.uniform(*degradation)))

    stages = []
    if rng.random() < 0.85:
        a = lead[0] if rng.random() < 0.5 else lead[int(rng.integers(len(lead)))]
        stages.append(stage(a, 15, 35))
    if rng.random() < 0.9 or not stages:
        stages.append(stage(main[int(rng.integers(len(main)))], 20, 40))
    if rng.random() < 0.75:
        stages.append(stage(tail[int(rng.integers(len(tail)))], 15, 30))
    while sum(s.frames for s in stages) < 20:
        stages.append(stage(lead[0], 10, 20))
    return ScenarioScript(name, tuple(stages), profile)


def transition_script(rng: np.random.Generator, name: str, change_window: int, window: int = 10, total_windows: int = 10, profile: str = "jpl") -> ScenarioScript:
    """Two stages whose change falls exactly at the start of ``change_window``."""
    main = _JPL_MAIN if profile == "jpl" else _HARPER_MAIN
    pre = _LEAD[profile][int(rng.integers(len(_LEAD[profile])))]
    act = main[int(rng.integers(len(main)))]
    return ScenarioScript(
        name,
        (Stage(pre, change_window * window), Stage(act, (total_windows - change_window) * window)),
        profile,
    )


def generate_benchmark(
    n_scenarios: int,
    seed: int = 0,
    profile: str = "jpl",
    window: int = 10,
    noise=(0.02, 0.06),
    degradation=(0.0, 0.25),
) -> list[WindowSample]:
    """Window samples from ``n_scenarios`` random scripts, seeded end to end."""
    rng = np.random.default_rng(seed)
    out: list[WindowSample] = []
    for i in range(n_scenarios):
        script = random_script(rng, f"{profile}-{seed}-{i:04d}", profile, noise, degradation)
        out.extend(generate_scenario(script, int(rng.integers(2**31)), window).windows())
    return out

