"""Tabletop layouts for the three evaluation tasks.

All scenes share one camera rig: head-mounted viewpoint 45 cm above the
table plane, 25 cm behind the edge, looking down at the object zone.
Object extents per category are invented defaults (the source setups
give categories only); they live in CATEGORY_EXTENTS_CM so configs can
label and override them.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import Category, HandKind
from .scene import CameraPose, Scene, SceneObject

TABLE_CAMERA = CameraPose(position=(0.0, 45.0, -25.0), look_at=(0.0, 8.0, 45.0))

HAND_EXTENT_CM = (9.0, 8.0, 12.0)
HAND_START_CM = (22.0, 7.0, 16.0)

# invented default extents (w, h, d) in cm; only the category names come
# from the task definitions
CATEGORY_EXTENTS_CM: dict[str, tuple[float, float, float]] = {
    "bottle": (7.0, 25.0, 7.0),
    "potted plant": (15.0, 25.0, 15.0),
    "cup": (9.0, 11.0, 9.0),
    "bowl": (14.0, 8.0, 14.0),
    "carton": (10.0, 22.0, 8.0),
}

GRASPING_CATEGORIES = ("bottle", "potted plant", "cup", "bowl", "carton")

LINE_Z_CM = 40.0
LINE_SPACING_CM = 15.0
LINE_SLOTS_X_CM = (-30.0, -15.0, 0.0, 15.0, 30.0)


def _hand(position=HAND_START_CM) -> SceneObject:
    return SceneObject(
        "hand", Category("hand", HandKind.MY_RIGHT), position, HAND_EXTENT_CM
    )


def _object_at_slot(oid: str, label: str, x_cm: float, z_cm: float = LINE_Z_CM) -> SceneObject:
    extent = CATEGORY_EXTENTS_CM[label]
    return SceneObject(oid, Category(label), (x_cm, extent[1] / 2.0, z_cm), extent)


def layout_grasping(seed: int, shuffle_round: int = 0) -> Scene:
    """Five unique-category objects in a line parallel to the table edge,
    40 cm deep and 15 cm apart. shuffle_round selects the permutation in
    effect (positions reshuffle after the fifth trial)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 101, shuffle_round)))
    order = rng.permutation(len(GRASPING_CATEGORIES))
    objects = tuple(
        _object_at_slot(f"obj-{label.replace(' ', '_')}", label, LINE_SLOTS_X_CM[slot])
        for slot, label in zip(order, GRASPING_CATEGORIES)
    )
    return Scene(objects=objects, hand=_hand(), camera_pose=TABLE_CAMERA)


def grasping_target_order(seed: int) -> list[str]:
    """Ten targets: the five categories iterated twice, order seeded."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 102)))
    first = [GRASPING_CATEGORIES[i] for i in rng.permutation(5)]
    second = [GRASPING_CATEGORIES[i] for i in rng.permutation(5)]
    return first + second


MULTI_ROUND_BOTTLES = (4, 4, 2)  # bottles placed per round; 4 + 4 + 2 = 10 trials


def _multi_round_slots(seed: int) -> list[tuple[int, list[int]]]:
    """Per round: (plant slot, sorted bottle slots)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 201)))
    plant_slots = rng.choice(len(LINE_SLOTS_X_CM), size=3, replace=False)
    rounds = []
    for round_index, n_bottles in enumerate(MULTI_ROUND_BOTTLES):
        plant = int(plant_slots[round_index])
        available = [i for i in range(len(LINE_SLOTS_X_CM)) if i != plant]
        picks = rng.choice(len(available), size=n_bottles, replace=False)
        rounds.append((plant, sorted(available[i] for i in picks)))
    return rounds


def layout_multi(round_index: int, seed: int, grasped: int = 0) -> Scene:
    """Same-category scene: bottles plus one potted plant distractor.

    round_index in {0, 1, 2}; the plant moves to a different slot every
    round; `grasped` bottles (leftmost first) have been removed within
    the round.
    """
    if round_index not in (0, 1, 2):
        raise ValueError(f"round_index must be 0..2, got {round_index}")
    plant_slot, bottle_slots = _multi_round_slots(seed)[round_index]
    if not 0 <= grasped <= len(bottle_slots):
        raise ValueError(f"grasped must be 0..{len(bottle_slots)}")
    objects = [_object_at_slot("plant", "potted plant", LINE_SLOTS_X_CM[plant_slot])]
    for slot in bottle_slots[grasped:]:  # leftmost bottles are grasped first
        objects.append(
            _object_at_slot(f"bottle-{round_index}-{slot}", "bottle", LINE_SLOTS_X_CM[slot])
        )
    return Scene(objects=tuple(objects), hand=_hand(), camera_pose=TABLE_CAMERA)


class DetourTrialKind(str, Enum):
    BACK = "back"
    ABOVE = "above"


# obstacle templates: (extent, position); tall blocks horizontal movement,
# short leaves room to travel above it
_TALL_OBSTACLE = ((12.0, 50.0, 8.0), (4.0, 25.0, 30.0))
_SHORT_OBSTACLE = ((12.0, 14.0, 8.0), (4.0, 7.0, 30.0))
_DEPTH_TARGET_X = -15.0
_DEPTH_TARGET_Z = 45.0


def layout_depth(trial_kind: DetourTrialKind, seed: int, trial_index: int = 0) -> Scene:
    """Obstacle course: hand starts right of the obstacle, bottle target
    on the left; obstacle height picks the required maneuver."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 301, trial_index)))
    extent, pos = _TALL_OBSTACLE if trial_kind is DetourTrialKind.BACK else _SHORT_OBSTACLE
    dx, dz = rng.uniform(-2.0, 2.0, size=2)
    obstacle = SceneObject(
        "obstacle",
        Category("box"),
        (pos[0] + dx, pos[1], pos[2] + dz),
        extent,
        is_obstacle=True,
    )
    tx = _DEPTH_TARGET_X + rng.uniform(-2.0, 2.0)
    target = _object_at_slot("target", "bottle", tx, _DEPTH_TARGET_Z)
    return Scene(objects=(target, obstacle), hand=_hand(), camera_pose=TABLE_CAMERA)


def depth_trial_kinds(seed: int) -> list[DetourTrialKind]:
    """Ten-trial schedule: exactly five of each kind, order seeded."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 302)))
    kinds = [DetourTrialKind.BACK] * 5 + [DetourTrialKind.ABOVE] * 5
    order = rng.permutation(len(kinds))
    return [kinds[i] for i in order]
