"""COCO-WholeBody keypoint layout: 23 body/foot + 68 face + 2x21 hand points.

Index ranges: body 0-16, feet 17-22, face 23-90 (68-point iBUG order),
left hand 91-111, right hand 112-132.  "Left"/"right" are the person's own
sides.
"""

from __future__ import annotations

import numpy as np

NUM_KEYPOINTS = 133

BODY_NAMES = [
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
    "left_big_toe", "left_small_toe", "left_heel",
    "right_big_toe", "right_small_toe", "right_heel",
]  # fmt: skip

FACE_START = 23
LEFT_HAND_START = 91
RIGHT_HAND_START = 112
HAND_NAMES = ["wrist"] + [f"{finger}{j}" for finger in ("thumb", "index", "middle", "ring", "pinky") for j in range(1, 5)]

KEYPOINT_NAMES = (
    BODY_NAMES
    + [f"face_{i}" for i in range(68)]
    + [f"left_hand_{n}" for n in HAND_NAMES]
    + [f"right_hand_{n}" for n in HAND_NAMES]
)

BODY = np.arange(0, 23)
FACE = np.arange(FACE_START, FACE_START + 68)
LEFT_HAND = np.arange(LEFT_HAND_START, LEFT_HAND_START + 21)
RIGHT_HAND = np.arange(RIGHT_HAND_START, RIGHT_HAND_START + 21)

_BODY_FLIP = [(1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (11, 12), (13, 14), (15, 16), (17, 20), (18, 21), (19, 22)]

# 68-point face: jaw 0-16, brows 17-26, nose 27-35, eyes 36-47, mouth 48-67
_FACE_FLIP = (
    [(i, 16 - i) for i in range(8)]
    + [(17 + i, 26 - i) for i in range(5)]
    + [(31, 35), (32, 34)]
    + [(36, 45), (37, 44), (38, 43), (39, 42), (40, 47), (41, 46)]
    + [(48, 54), (49, 53), (50, 52), (55, 59), (56, 58)]
    + [(60, 64), (61, 63), (65, 67)]
)


def _flip_index() -> np.ndarray:
    perm = np.arange(NUM_KEYPOINTS)
    pairs = list(_BODY_FLIP)
    pairs += [(FACE_START + a, FACE_START + b) for a, b in _FACE_FLIP]
    pairs += [(LEFT_HAND_START + i, RIGHT_HAND_START + i) for i in range(21)]
    for a, b in pairs:
        perm[a], perm[b] = b, a
    return perm


FLIP_INDEX = _flip_index()
"""``FLIP_INDEX[n]`` is the mirror-image keypoint of ``n``; an involution."""


def _hand_edges(start: int) -> list[tuple[int, int]]:
    edges = []
    for f in range(5):
        base = start + 1 + 4 * f
        edges.append((start, base))
        edges += [(base + j, base + j + 1) for j in range(3)]
    return edges


def _face_edges() -> list[tuple[int, int]]:
    e = []
    chain = lambda a, b: [(i, i + 1) for i in range(a, b)]  # noqa: E731
    loop = lambda a, b: chain(a, b) + [(b, a)]  # noqa: E731
    e += chain(0, 16)  # jaw
    e += chain(17, 21) + chain(22, 26)  # brows
    e += chain(27, 30) + chain(31, 35) + [(30, 33)]  # nose bridge, nostrils
    e += loop(36, 41) + loop(42, 47)  # eyes
    e += loop(48, 59) + loop(60, 67)  # outer and inner lips
    # links joining the face parts into one component, mirror-symmetric
    e += [(0, 17), (16, 26), (19, 37), (24, 44), (21, 27), (22, 27), (39, 27), (42, 27)]
    e += [(33, 51), (48, 60), (54, 64), (8, 57)]
    return [(FACE_START + a, FACE_START + b) for a, b in e]


BODY_EDGES = [
    (15, 13), (13, 11), (16, 14), (14, 12), (11, 12), (5, 11), (6, 12), (5, 6),
    (5, 7), (6, 8), (7, 9), (8, 10), (1, 2), (0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (4, 6),
    (15, 17), (15, 18), (15, 19), (16, 20), (16, 21), (16, 22),
]  # fmt: skip

JUNCTION_EDGES = [
    (9, LEFT_HAND_START),  # body wrist - hand wrist
    (10, RIGHT_HAND_START),
    (0, FACE_START + 30),  # body nose - face nose tip
]

SKELETON_EDGES: list[tuple[int, int]] = (
    BODY_EDGES + JUNCTION_EDGES + _face_edges() + _hand_edges(LEFT_HAND_START) + _hand_edges(RIGHT_HAND_START)
)
"""Undirected skeleton edges over all 133 keypoints (no self-loops)."""


def part_of(index: int) -> str:
    if index < FACE_START:
        return "body"
    if index < LEFT_HAND_START:
        return "face"
    return "hand"
