"""Synthetic tabletop world and perception stream.

Stands in for the camera + detector + depth-estimator stack: projects a
3D scene through a pinhole camera, emits noisy per-frame detections and
metric depth maps, and reads/writes recorded streams.

Units: scene geometry in centimeters (table frame: x right along the
table edge, y up, z away from the participant); depth maps in meters;
image coordinates in pixels (y down).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np
import yaml

from . import _kernels
from .geometry import (
    CameraModel,
    Category,
    Detection,
    DepthMap,
    HandKind,
    PixelBox,
    overlap_fraction,
)

SCENE_SCHEMA_VERSION = 1
DEFAULT_BACKGROUND_M = 3.0


@dataclass(frozen=True)
class SceneObject:
    id: str
    category: Category
    position: tuple[float, float, float]  # AABB center, cm
    extent: tuple[float, float, float]  # (w, h, d), cm
    is_obstacle: bool = False

    def __post_init__(self):
        if any(e <= 0 for e in self.extent):
            raise ValueError(f"extent must be positive, got {self.extent}")

    @property
    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.position, dtype=np.float64)
        half = np.asarray(self.extent, dtype=np.float64) / 2.0
        return c - half, c + half


@dataclass(frozen=True)
class CameraPose:
    position: tuple[float, float, float]  # cm
    look_at: tuple[float, float, float]  # cm

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Right / down / forward unit vectors in the table frame."""
        pos = np.asarray(self.position, dtype=np.float64)
        fwd = np.asarray(self.look_at, dtype=np.float64) - pos
        norm = np.linalg.norm(fwd)
        if norm < 1e-9:
            raise ValueError("camera look_at coincides with position")
        fwd = fwd / norm
        world_up = np.array([0.0, 1.0, 0.0])
        right = np.cross(world_up, fwd)
        rn = np.linalg.norm(right)
        if rn < 1e-9:  # looking straight up/down
            right = np.array([1.0, 0.0, 0.0])
        else:
            right = right / rn
        down = np.cross(right, fwd)
        down = down / np.linalg.norm(down)
        return right, down, fwd

    def jittered(self, yaw_deg: float, pitch_deg: float) -> "CameraPose":
        """Small rotation of the view direction (camera shake)."""
        right, down, fwd = self.basis()
        yaw = math.radians(yaw_deg)
        pitch = math.radians(pitch_deg)
        new_fwd = fwd + right * math.tan(yaw) - down * math.tan(pitch)
        new_fwd = new_fwd / np.linalg.norm(new_fwd)
        dist = np.linalg.norm(
            np.asarray(self.look_at, dtype=np.float64) - np.asarray(self.position)
        )
        target = np.asarray(self.position, dtype=np.float64) + new_fwd * dist
        return CameraPose(self.position, tuple(target))


@dataclass(frozen=True)
class Scene:
    objects: tuple[SceneObject, ...]
    hand: SceneObject
    camera_pose: CameraPose

    def __post_init__(self):
        ids = [o.id for o in self.objects] + [self.hand.id]
        if len(set(ids)) != len(ids):
            raise ValueError("scene object ids must be unique")
        hk = self.hand.category.hand_kind
        if hk not in (HandKind.MY_LEFT, HandKind.MY_RIGHT):
            raise ValueError("scene hand must be a first-person hand")
        for o in self.objects:
            if o.category.hand_kind in (HandKind.MY_LEFT, HandKind.MY_RIGHT):
                raise ValueError("only the hand field may hold a first-person hand")

    def without_object(self, object_id: str) -> "Scene":
        return replace(
            self, objects=tuple(o for o in self.objects if o.id != object_id)
        )

    def with_hand_position(self, position: tuple[float, float, float]) -> "Scene":
        return replace(self, hand=replace(self.hand, position=position))


@dataclass(frozen=True)
class NoiseConfig:
    dropout_prob: float = 0.0
    jitter_sigma_px: float = 0.0
    occlusion_overlap_threshold: float = 0.3
    occlusion_drop_prob: float = 1.0
    camera_jitter_sigma_deg: float = 0.0
    seed: int = 0
    hand_dropout_prob: float = 0.0
    feature_noise_sigma: float = 0.02
    feature_dim: int = 16

    def __post_init__(self):
        for name in ("dropout_prob", "occlusion_overlap_threshold",
                     "occlusion_drop_prob", "hand_dropout_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {v}")
        if self.jitter_sigma_px < 0 or self.camera_jitter_sigma_deg < 0:
            raise ValueError("sigmas must be non-negative")


@dataclass(frozen=True)
class FrameBundle:
    frame_index: int
    detections: tuple[Detection, ...]
    depth: DepthMap | None = None
    wall_dt: float = 1.0 / 30.0


class OutOfView(Exception):
    """Point projects outside the horizontal FOV or behind the camera."""


def _project_raw(
    point: np.ndarray, right: np.ndarray, down: np.ndarray, fwd: np.ndarray,
    cam_pos: np.ndarray, cam: CameraModel,
) -> tuple[float, float] | None:
    rel = point - cam_pos
    z = float(rel @ fwd)
    if z <= 1e-9:
        return None
    x = float(rel @ right)
    y = float(rel @ down)
    f = cam.focal_px
    return (f * x / z + cam.width_px / 2.0, f * y / z + cam.height_px / 2.0)


def project(
    point: tuple[float, float, float], cam_pose: CameraPose, cam: CameraModel
) -> tuple[float, float] | None:
    """Pinhole projection of a table-frame point; None when out of view.

    Out of view means behind the camera plane or beyond half the
    horizontal FOV; vertical overflow still returns coordinates so box
    projections can be clipped by the caller.
    """
    right, down, fwd = cam_pose.basis()
    pos = np.asarray(cam_pose.position, dtype=np.float64)
    rel = np.asarray(point, dtype=np.float64) - pos
    z = float(rel @ fwd)
    if z <= 1e-9:
        return None
    x = float(rel @ right)
    if abs(math.degrees(math.atan2(x, z))) > cam.hfov_deg / 2.0 + 1e-9:
        return None
    return _project_raw(np.asarray(point, dtype=np.float64), right, down, fwd, pos, cam)


def pixel_ray(
    px: float, py: float, cam_pose: CameraPose, cam: CameraModel
) -> tuple[np.ndarray, np.ndarray]:
    """World-frame (origin, unit direction) of the ray through a pixel."""
    right, down, fwd = cam_pose.basis()
    f = cam.focal_px
    d = (
        right * ((px - cam.width_px / 2.0) / f)
        + down * ((py - cam.height_px / 2.0) / f)
        + fwd
    )
    d = d / np.linalg.norm(d)
    return np.asarray(cam_pose.position, dtype=np.float64), d


def project_object_box(
    obj: SceneObject, cam_pose: CameraPose, cam: CameraModel
) -> PixelBox | None:
    """Tight image box around the projected 8 corners, clipped to frame."""
    right, down, fwd = cam_pose.basis()
    pos = np.asarray(cam_pose.position, dtype=np.float64)
    lo, hi = obj.aabb
    xs, ys = [], []
    for ix in range(8):
        corner = np.array(
            [
                lo[0] if ix & 1 == 0 else hi[0],
                lo[1] if ix & 2 == 0 else hi[1],
                lo[2] if ix & 4 == 0 else hi[2],
            ]
        )
        p = _project_raw(corner, right, down, fwd, pos, cam)
        if p is None:
            return None
        xs.append(p[0])
        ys.append(p[1])
    x1 = max(min(xs), 0.0)
    y1 = max(min(ys), 0.0)
    x2 = min(max(xs), float(cam.width_px))
    y2 = min(max(ys), float(cam.height_px))
    if x2 - x1 < 1e-6 or y2 - y1 < 1e-6:
        return None
    return PixelBox.from_corners(x1, y1, x2, y2)


def _stable_feature(object_id: str, dim: int) -> np.ndarray:
    digest = hashlib.sha256(object_id.encode()).digest()
    seed = int.from_bytes(digest[:8], "little")
    vec = np.random.default_rng(seed).normal(size=dim)
    return vec / np.linalg.norm(vec)


def render_frame(
    scene: Scene,
    noise: NoiseConfig,
    rng: np.random.Generator,
    cam: CameraModel | None = None,
    frame_index: int = 0,
    wall_dt: float = 1.0 / 30.0,
) -> FrameBundle:
    """One frame of noisy detections for every in-view object and hand.

    Deterministic given (scene, noise, rng state). The hand is exempt
    from the object dropout knob; occlusion suppression applies to any
    object the hand box covers past the overlap threshold.
    """
    cam = cam or CameraModel()
    pose = scene.camera_pose
    if noise.camera_jitter_sigma_deg > 0:
        yaw, pitch = rng.normal(0.0, noise.camera_jitter_sigma_deg, size=2)
        pose = pose.jittered(yaw, pitch)

    hand_box = project_object_box(scene.hand, pose, cam)
    detections: list[Detection] = []

    def emit(obj: SceneObject, box: PixelBox):
        cx, cy = box.cx, box.cy
        if noise.jitter_sigma_px > 0:
            dx, dy = rng.normal(0.0, noise.jitter_sigma_px, size=2)
            cx, cy = cx + dx, cy + dy
        feat = _stable_feature(obj.id, noise.feature_dim)
        if noise.feature_noise_sigma > 0:
            feat = feat + rng.normal(0.0, noise.feature_noise_sigma, noise.feature_dim)
            feat = feat / np.linalg.norm(feat)
        detections.append(
            Detection(
                category=obj.category,
                box=PixelBox(cx, cy, box.w, box.h),
                confidence=0.9,
                frame_index=frame_index,
                feature=feat,
            )
        )

    if hand_box is not None and rng.random() >= noise.hand_dropout_prob:
        emit(scene.hand, hand_box)

    for obj in scene.objects:
        box = project_object_box(obj, pose, cam)
        if box is None:
            continue
        if hand_box is not None:
            covered = overlap_fraction(hand_box, box)
            if covered >= noise.occlusion_overlap_threshold:
                if rng.random() < noise.occlusion_drop_prob:
                    continue
        if rng.random() < noise.dropout_prob:
            continue
        emit(obj, box)

    return FrameBundle(
        frame_index=frame_index, detections=tuple(detections), wall_dt=wall_dt
    )


def render_depth(
    scene: Scene,
    cam: CameraModel | None = None,
    frame_index: int = 0,
    background_m: float = DEFAULT_BACKGROUND_M,
    include_hand: bool = True,
) -> DepthMap:
    """Metric depth map: per-pixel distance to the nearest object surface."""
    cam = cam or CameraModel()
    right, down, fwd = scene.camera_pose.basis()
    origin = np.asarray(scene.camera_pose.position, dtype=np.float64)
    f = cam.focal_px
    cols = (np.arange(cam.width_px) - cam.width_px / 2.0) / f
    rows = (np.arange(cam.height_px) - cam.height_px / 2.0) / f
    gx, gy = np.meshgrid(cols, rows)
    dirs = (
        gx[..., None] * right[None, None, :]
        + gy[..., None] * down[None, None, :]
        + fwd[None, None, :]
    )
    dirs = dirs / np.linalg.norm(dirs, axis=2, keepdims=True)
    dirs = dirs.reshape(-1, 3)

    bodies = list(scene.objects) + ([scene.hand] if include_hand else [])
    if bodies:
        lo = np.stack([b.aabb[0] for b in bodies])
        hi = np.stack([b.aabb[1] for b in bodies])
    else:
        lo = np.zeros((0, 3))
        hi = np.zeros((0, 3))

    dist_cm = _kernels.ray_depth(origin, dirs, lo, hi, background_m * 100.0)
    values = (dist_cm / 100.0).reshape(cam.height_px, cam.width_px)
    return DepthMap(
        width_px=cam.width_px,
        height_px=cam.height_px,
        mode="metric",
        values=values.astype(np.float32).astype(np.float64),
        frame_index=frame_index,
    )


# ---------------------------------------------------------------------------
# scene files


def _category_token(cat: Category) -> str:
    return f"{cat.label}:{cat.hand_kind.value}" if cat.hand_kind else cat.label


def _parse_category(token: str) -> Category:
    if ":" in token:
        label, kind = token.split(":", 1)
        return Category(label, HandKind(kind))
    return Category(token)


def _object_to_dict(obj: SceneObject) -> dict:
    d = {
        "id": obj.id,
        "category": _category_token(obj.category),
        "position": [float(v) for v in obj.position],
        "extent": [float(v) for v in obj.extent],
    }
    if obj.is_obstacle:
        d["is_obstacle"] = True
    return d


def _object_from_dict(d: dict) -> SceneObject:
    return SceneObject(
        id=d["id"],
        category=_parse_category(d["category"]),
        position=tuple(float(v) for v in d["position"]),
        extent=tuple(float(v) for v in d["extent"]),
        is_obstacle=bool(d.get("is_obstacle", False)),
    )


def save_scene(scene: Scene, path: str | Path) -> None:
    doc = {
        "schema_version": SCENE_SCHEMA_VERSION,
        "camera": {
            "position": [float(v) for v in scene.camera_pose.position],
            "look_at": [float(v) for v in scene.camera_pose.look_at],
        },
        "hand": _object_to_dict(scene.hand),
        "objects": [_object_to_dict(o) for o in scene.objects],
    }
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))


def load_scene(path: str | Path) -> Scene:
    doc = yaml.safe_load(Path(path).read_text())
    version = doc.get("schema_version")
    if version != SCENE_SCHEMA_VERSION:
        raise ValueError(f"unsupported scene schema_version {version}")
    return Scene(
        objects=tuple(_object_from_dict(o) for o in doc.get("objects", [])),
        hand=_object_from_dict(doc["hand"]),
        camera_pose=CameraPose(
            position=tuple(float(v) for v in doc["camera"]["position"]),
            look_at=tuple(float(v) for v in doc["camera"]["look_at"]),
        ),
    )


# ---------------------------------------------------------------------------
# replay streams (one FrameBundle per JSON line)


class ReplayError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _detection_to_dict(det: Detection) -> dict:
    d = {
        "category": _category_token(det.category),
        "cx": det.box.cx,
        "cy": det.box.cy,
        "w": det.box.w,
        "h": det.box.h,
        "confidence": det.confidence,
    }
    if det.feature is not None:
        d["feature"] = [float(v) for v in det.feature]
    return d


def _depth_to_dict(depth: DepthMap, sidecar: Path | None) -> dict:
    d = {
        "width_px": depth.width_px,
        "height_px": depth.height_px,
        "mode": depth.mode,
        "frame_index": depth.frame_index,
    }
    if sidecar is not None:
        depth.values.astype("<f4").tofile(sidecar)
        d["values_file"] = sidecar.name
    else:
        d["values"] = [float(v) for v in depth.values.reshape(-1)]
    return d


def save_replay(
    frames: list[FrameBundle], path: str | Path, depth_sidecar: bool = True
) -> None:
    """Write a stream; depth maps go to .f32 sidecars unless inline."""
    path = Path(path)
    with path.open("w") as fh:
        for bundle in frames:
            sidecar = None
            if bundle.depth is not None and depth_sidecar:
                sidecar = path.with_suffix(f".depth{bundle.frame_index:06d}.f32")
            record = {
                "frame_index": bundle.frame_index,
                "wall_dt": bundle.wall_dt,
                "detections": [_detection_to_dict(d) for d in bundle.detections],
                "depth": (
                    _depth_to_dict(bundle.depth, sidecar)
                    if bundle.depth is not None
                    else None
                ),
            }
            fh.write(json.dumps(record) + "\n")


def _depth_from_dict(d: dict, base_dir: Path, line: int) -> DepthMap:
    w, h = int(d["width_px"]), int(d["height_px"])
    if "values_file" in d:
        raw = np.fromfile(base_dir / d["values_file"], dtype="<f4")
        if raw.size != w * h:
            raise ReplayError(
                f"sidecar has {raw.size} values, expected {w * h}", line
            )
        values = raw.astype(np.float64).reshape(h, w)
    else:
        values = np.asarray(d["values"], dtype=np.float64).reshape(h, w)
    return DepthMap(w, h, d["mode"], values, int(d.get("frame_index", 0)))


def load_replay(path: str | Path) -> Iterator[FrameBundle]:
    """Yield validated frames in stored order; raises ReplayError."""
    path = Path(path)
    last_index: int | None = None
    with path.open() as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ReplayError(f"invalid JSON: {exc.msg}", line_no) from exc
            try:
                frame_index = int(record["frame_index"])
                detections = tuple(
                    Detection(
                        category=_parse_category(d["category"]),
                        box=PixelBox(d["cx"], d["cy"], d["w"], d["h"]),
                        confidence=float(d["confidence"]),
                        frame_index=frame_index,
                        feature=(
                            np.asarray(d["feature"], dtype=np.float64)
                            if d.get("feature") is not None
                            else None
                        ),
                    )
                    for d in record.get("detections", [])
                )
                depth = (
                    _depth_from_dict(record["depth"], path.parent, line_no)
                    if record.get("depth") is not None
                    else None
                )
            except ReplayError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise ReplayError(str(exc), line_no) from exc
            if last_index is not None and frame_index <= last_index:
                raise ReplayError(
                    f"frame_index {frame_index} not after {last_index}", line_no
                )
            last_index = frame_index
            yield FrameBundle(
                frame_index=frame_index,
                detections=detections,
                depth=depth,
                wall_dt=float(record.get("wall_dt", 1.0 / 30.0)),
            )
