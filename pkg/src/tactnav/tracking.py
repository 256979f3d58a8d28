"""Multi-object tracking: constant-velocity Kalman filter plus gated
category-partitioned assignment, in the SORT family.

State vector is (cx, cy, h, aspect, vcx, vcy, vh); aspect carries no
velocity. Process and measurement noise scale with box height. Appearance
features, when present, blend into the association cost as a cosine
distance; they are supplied by the perception layer, never computed here.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import Category, Detection, PixelBox, iou
from .scene import FrameBundle

# noise scale relative to box height
_STD_POS = 1.0 / 20.0
_STD_VEL = 1.0 / 160.0
_STD_ASPECT = 1e-2
_STD_ASPECT_MEAS = 1e-1

_TIE_TOL = 1e-12
_GATE_COST = 1e9
_UNMATCHED_COST = 1e3


class TrackStatus(str, Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    LOST = "lost"


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray  # (7,)
    covariance: np.ndarray  # (7, 7)

    def __post_init__(self):
        if self.mean.shape != (7,) or self.covariance.shape != (7, 7):
            raise ValueError("state must be 7-dimensional")
        if self.mean[2] <= 0:
            raise ValueError("height must be positive")
        eigvals = np.linalg.eigvalsh((self.covariance + self.covariance.T) / 2.0)
        if eigvals.min() < -1e-9:
            raise ValueError("covariance must be positive semi-definite")

    @property
    def box(self) -> PixelBox:
        cx, cy, h, aspect = self.mean[:4]
        return PixelBox(cx, cy, max(aspect * h, 1e-6), h)

    @staticmethod
    def from_box(box: PixelBox) -> "KalmanState":
        mean = np.array([box.cx, box.cy, box.h, box.w / box.h, 0.0, 0.0, 0.0])
        h = box.h
        std = np.array(
            [
                2 * _STD_POS * h,
                2 * _STD_POS * h,
                2 * _STD_POS * h,
                _STD_ASPECT,
                10 * _STD_VEL * h,
                10 * _STD_VEL * h,
                10 * _STD_VEL * h,
            ]
        )
        return KalmanState(mean, np.diag(std**2))


def kalman_predict(state: KalmanState, dt_frames: float = 1.0) -> KalmanState:
    """Advance by the constant-velocity model and grow covariance."""
    f = np.eye(7)
    f[0, 4] = f[1, 5] = f[2, 6] = dt_frames
    h = state.mean[2]
    q_std = np.array(
        [_STD_POS * h, _STD_POS * h, _STD_POS * h, _STD_ASPECT,
         _STD_VEL * h, _STD_VEL * h, _STD_VEL * h]
    )
    q = np.diag((q_std * dt_frames) ** 2)
    mean = f @ state.mean
    cov = f @ state.covariance @ f.T + q
    return KalmanState(mean, cov)


def _measurement_noise(h: float) -> np.ndarray:
    std = np.array([_STD_POS * h, _STD_POS * h, _STD_POS * h, _STD_ASPECT_MEAS])
    return np.diag(std**2)


def kalman_update(state: KalmanState, measurement: PixelBox) -> KalmanState:
    """Standard linear correction on (cx, cy, h, aspect)."""
    hm = np.zeros((4, 7))
    hm[:4, :4] = np.eye(4)
    z = np.array(
        [measurement.cx, measurement.cy, measurement.h, measurement.w / measurement.h]
    )
    r = _measurement_noise(state.mean[2])
    s = hm @ state.covariance @ hm.T + r
    k = state.covariance @ hm.T @ np.linalg.inv(s)
    innovation = z - hm @ state.mean
    mean = state.mean + k @ innovation
    cov = (np.eye(7) - k @ hm) @ state.covariance
    cov = (cov + cov.T) / 2.0
    return KalmanState(mean, cov)


@dataclass(frozen=True)
class TrackerConfig:
    n_init: int = 3
    max_age: int = 30
    gate_iou_min: float = 0.1
    feature_weight: float = 0.5  # applied only when both features exist
    feature_ema: float = 0.9

    def __post_init__(self):
        if self.n_init < 1 or self.max_age < 1:
            raise ValueError("n_init and max_age must be >= 1")
        for name in ("gate_iou_min", "feature_weight", "feature_ema"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1]")


@dataclass(frozen=True)
class Track:
    """Immutable snapshot of one tracked identity."""

    id: int
    category: Category
    kalman: KalmanState
    status: TrackStatus
    hits: int
    time_since_update: int
    last_feature: np.ndarray | None = None

    @property
    def box(self) -> PixelBox:
        return self.kalman.box


def _cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 1.0 - float(a @ b)


def _pair_cost(
    track_box: PixelBox,
    track_feature: np.ndarray | None,
    det: Detection,
    cfg: TrackerConfig,
) -> float | None:
    """Association cost, or None when the pair is gated out."""
    overlap = iou(track_box, det.box)
    if overlap < cfg.gate_iou_min:
        return None
    if track_feature is not None and det.feature is not None:
        lam = cfg.feature_weight
        return lam * _cosine_distance(track_feature, det.feature) + (1 - lam) * (
            1.0 - overlap
        )
    return 1.0 - overlap


def _solve_padded(cost: np.ndarray) -> float:
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def _min_cost_lexicographic(cost: np.ndarray, n_tracks: int, n_dets: int) -> list[int]:
    """Assignment per track (det index or -1), lexicographically preferring
    lower det indices for lower track positions among all minimum-cost
    solutions of the padded square problem."""
    size = n_tracks + n_dets
    total = _solve_padded(cost)
    assignment: list[int] = []
    remaining_rows = list(range(size))
    remaining_cols = list(range(size))
    work = cost
    fixed_cost = 0.0
    for track_pos in range(n_tracks):
        row_local = remaining_rows.index(track_pos)
        # preference: real detections by index, then the track's dummy column
        candidates = [c for c in remaining_cols if c < n_dets]
        candidates.append(n_dets + track_pos)
        chosen = None
        for col in candidates:
            col_local = remaining_cols.index(col)
            pair = work[row_local, col_local]
            if pair >= _GATE_COST:
                continue
            sub = np.delete(np.delete(work, row_local, axis=0), col_local, axis=1)
            rest = _solve_padded(sub) if sub.size else 0.0
            if abs(fixed_cost + pair + rest - total) <= _TIE_TOL * max(1.0, abs(total)):
                chosen = col
                fixed_cost += pair
                work = sub
                remaining_rows.pop(row_local)
                remaining_cols.pop(col_local)
                break
        if chosen is None:  # numerically impossible, but fail safe: leave unmatched
            chosen = n_dets + track_pos
            col_local = remaining_cols.index(chosen)
            fixed_cost += work[row_local, col_local]
            work = np.delete(np.delete(work, row_local, axis=0), col_local, axis=1)
            remaining_rows.pop(row_local)
            remaining_cols.pop(col_local)
        assignment.append(chosen if chosen < n_dets else -1)
    return assignment


def _associate_block(
    track_boxes: list[PixelBox],
    track_features: list[np.ndarray | None],
    dets: list[Detection],
    cfg: TrackerConfig,
) -> list[int]:
    """Per-track det index (or -1) within one category block."""
    nt, nd = len(track_boxes), len(dets)
    if nt == 0:
        return []
    if nd == 0:
        return [-1] * nt
    size = nt + nd
    cost = np.full((size, size), _GATE_COST)
    for i in range(nt):
        for j in range(nd):
            c = _pair_cost(track_boxes[i], track_features[i], dets[j], cfg)
            if c is not None:
                cost[i, j] = c
    for i in range(nt):
        cost[i, nd + i] = _UNMATCHED_COST
    for j in range(nd):
        cost[nt + j, j] = _UNMATCHED_COST
    cost[nt:, nd:] = 0.0
    return _min_cost_lexicographic(cost, nt, nd)


def associate(
    tracks: list[Track], detections: list[Detection], cfg: TrackerConfig
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Minimum-cost gated matching, partitioned by category.

    Returns (matches as (track_idx, det_idx) pairs, unmatched track
    indices, unmatched detection indices), all indices into the inputs.
    """
    matches: list[tuple[int, int]] = []
    matched_dets: set[int] = set()
    by_category: dict = {}
    for j, det in enumerate(detections):
        by_category.setdefault(det.category.key, []).append(j)
    for key in sorted(by_category, key=str):
        det_idx = by_category[key]
        trk_idx = [i for i, t in enumerate(tracks) if t.category.key == key]
        if not trk_idx:
            continue
        assignment = _associate_block(
            [tracks[i].box for i in trk_idx],
            [tracks[i].last_feature for i in trk_idx],
            [detections[j] for j in det_idx],
            cfg,
        )
        for local_t, local_d in enumerate(assignment):
            if local_d >= 0:
                matches.append((trk_idx[local_t], det_idx[local_d]))
                matched_dets.add(det_idx[local_d])
    matches.sort()
    matched_tracks = {i for i, _ in matches}
    unmatched_tracks = [i for i in range(len(tracks)) if i not in matched_tracks]
    unmatched_dets = [j for j in range(len(detections)) if j not in matched_dets]
    return matches, unmatched_tracks, unmatched_dets


class FrameOrderError(ValueError):
    pass


@dataclass
class _TrackRecord:
    id: int
    category: Category
    kalman: KalmanState
    hits: int = 1
    time_since_update: int = 0
    confirmed: bool = False
    last_feature: np.ndarray | None = None
    prev_measurement: np.ndarray | None = None  # (cx, cy, h) for velocity init

    def snapshot(self) -> Track:
        if self.confirmed:
            status = (
                TrackStatus.CONFIRMED
                if self.time_since_update == 0
                else TrackStatus.LOST
            )
        else:
            status = TrackStatus.TENTATIVE
        return Track(
            id=self.id,
            category=self.category,
            kalman=self.kalman,
            status=status,
            hits=self.hits,
            time_since_update=self.time_since_update,
            last_feature=self.last_feature,
        )


class Tracker:
    """Stateful per-stream tracker. Step once per frame, in frame order."""

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        self._tracks: list[_TrackRecord] = []
        self._next_id = 1
        self._last_frame: int | None = None

    def step(self, frame: FrameBundle) -> list[Track]:
        """Predict, associate, update; returns confirmed track snapshots."""
        if self._last_frame is not None and frame.frame_index <= self._last_frame:
            raise FrameOrderError(
                f"frame_index {frame.frame_index} not after {self._last_frame}"
            )
        dt = 1 if self._last_frame is None else frame.frame_index - self._last_frame
        self._last_frame = frame.frame_index

        for rec in self._tracks:
            rec.kalman = kalman_predict(rec.kalman, dt)

        detections = list(frame.detections)
        snapshots = [rec.snapshot() for rec in self._tracks]
        matches, unmatched_tracks, unmatched_dets = associate(
            snapshots, detections, self.cfg
        )

        for ti, dj in matches:
            self._apply_update(self._tracks[ti], detections[dj], dt)

        survivors: list[_TrackRecord] = []
        for idx, rec in enumerate(self._tracks):
            if idx in {t for t, _ in matches}:
                survivors.append(rec)
                continue
            if not rec.confirmed:
                continue  # tentative tracks die on their first miss
            rec.time_since_update += dt
            rec.prev_measurement = None
            if rec.time_since_update <= self.cfg.max_age:
                survivors.append(rec)
        self._tracks = survivors

        for dj in unmatched_dets:
            self._born(detections[dj])

        for rec in self._tracks:
            if not rec.confirmed and rec.hits >= self.cfg.n_init:
                rec.confirmed = True
        return [
            rec.snapshot()
            for rec in self._tracks
            if rec.snapshot().status is TrackStatus.CONFIRMED
        ]

    def _apply_update(self, rec: _TrackRecord, det: Detection, dt: int):
        z = np.array([det.box.cx, det.box.cy, det.box.h])
        if rec.hits == 1 and rec.prev_measurement is not None:
            # second consecutive hit: seed velocity by two-point differencing
            vel = (z - rec.prev_measurement) / dt
            mean = np.array(
                [det.box.cx, det.box.cy, det.box.h, det.box.w / det.box.h, *vel]
            )
            rec.kalman = KalmanState(mean, KalmanState.from_box(det.box).covariance)
        else:
            rec.kalman = kalman_update(rec.kalman, det.box)
        rec.hits += 1
        rec.time_since_update = 0
        rec.prev_measurement = z
        if det.feature is not None:
            alpha = self.cfg.feature_ema
            if rec.last_feature is None:
                rec.last_feature = det.feature
            else:
                blended = alpha * rec.last_feature + (1 - alpha) * det.feature
                rec.last_feature = blended / np.linalg.norm(blended)

    def _born(self, det: Detection):
        rec = _TrackRecord(
            id=self._next_id,
            category=det.category,
            kalman=KalmanState.from_box(det.box),
            last_feature=det.feature,
            prev_measurement=np.array([det.box.cx, det.box.cy, det.box.h]),
        )
        self._next_id += 1
        self._tracks.append(rec)

    @property
    def tracks(self) -> list[Track]:
        """Snapshots of every live track, regardless of status."""
        return [rec.snapshot() for rec in self._tracks]


def track_log_line(frame_index: int, track: Track) -> str:
    """One newline-delimited record for offline analysis."""
    import json

    box = track.box
    return json.dumps(
        {
            "frame_index": frame_index,
            "id": track.id,
            "category": track.category.label
            if track.category.hand_kind is None
            else f"{track.category.label}:{track.category.hand_kind.value}",
            "cx": box.cx,
            "cy": box.cy,
            "w": box.w,
            "h": box.h,
            "status": track.status.value,
        }
    )
