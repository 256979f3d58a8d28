"""Navigation logic: hand + target boxes (and optional depth) in,
vibration commands out.

Angle convention across the wrist: 0 deg = up, 90 = right, 180 = down,
270 = left; arbitrary angles blend the two adjacent motors linearly.
Two navigation modes: interpolated 2D blending, and axis-sequential
(horizontal alignment first, then vertical). Occlusion of the target by
the hand freezes its last box so guidance continues; depth maps divert
around obstacles by pulling the hand back or steering above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import DepthMap, PixelBox, iou, overlap_fraction
from .tracking import Track, TrackStatus

MOTOR_NAMES = ("up", "right", "down", "left")


class NoCandidateError(LookupError):
    pass


class TargetLostError(RuntimeError):
    pass


class HandLostError(RuntimeError):
    pass


class CoincidentCentersError(ValueError):
    pass


class DegenerateDepthError(RuntimeError):
    pass


@dataclass(frozen=True)
class CalibrationProfile:
    """Per-motor intensity gains (up, right, down, left)."""

    BASELINE = 0.50
    STEP = 0.05

    up: float = BASELINE
    right: float = BASELINE
    down: float = BASELINE
    left: float = BASELINE

    def __post_init__(self):
        for name in MOTOR_NAMES:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"gain {name}={v} outside [0,1]")

    def gain(self, index: int) -> float:
        return getattr(self, MOTOR_NAMES[index])

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.up, self.right, self.down, self.left)


def calibrate_adjust(
    cal: CalibrationProfile, motor: str, direction: str
) -> CalibrationProfile:
    """Step one motor's gain by +/-5%, clamped to [0, 1]."""
    if motor not in MOTOR_NAMES:
        raise ValueError(f"unknown motor {motor!r}")
    if direction not in ("+", "-"):
        raise ValueError(f"direction must be '+' or '-', got {direction!r}")
    delta = CalibrationProfile.STEP if direction == "+" else -CalibrationProfile.STEP
    value = getattr(cal, motor) + delta
    value = round(min(1.0, max(0.0, value)) * 100.0) / 100.0
    kwargs = {name: getattr(cal, name) for name in MOTOR_NAMES}
    kwargs[motor] = value
    return CalibrationProfile(**kwargs)


@dataclass(frozen=True)
class MotorQuad:
    up: float = 0.0
    right: float = 0.0
    down: float = 0.0
    left: float = 0.0

    def __post_init__(self):
        values = self.as_tuple()
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise ValueError(f"intensities must lie in [0,1], got {values}")
        active = [i for i, v in enumerate(values) if v > 0.0]
        if len(active) > 2:
            raise ValueError("at most two motors may run simultaneously")
        if len(active) == 2:
            a, b = active
            if not (b - a == 1 or (a == 0 and b == 3)):
                raise ValueError(f"active motors {a},{b} are not adjacent")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.up, self.right, self.down, self.left)

    def without_down(self) -> "MotorQuad":
        return MotorQuad(self.up, self.right, 0.0, self.left)

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.as_tuple())


ZERO_QUAD = MotorQuad()


@dataclass(frozen=True)
class Direction:
    quad: MotorQuad


@dataclass(frozen=True)
class GraspPulse:
    duration_ms: int = 500


@dataclass(frozen=True)
class MoveBackPulse:
    """Double burst: two bursts of burst_ms separated by gap_ms."""

    burst_ms: int = 200
    gap_ms: int = 100


@dataclass(frozen=True)
class Stop:
    pass


VibrationCommand = Direction | GraspPulse | MoveBackPulse | Stop


def direction_angle(
    hand_center: tuple[float, float], target_center: tuple[float, float]
) -> float:
    """Angle from hand to target in [0, 360); image y points down."""
    dx = target_center[0] - hand_center[0]
    dy = target_center[1] - hand_center[1]
    if dx == 0.0 and dy == 0.0:
        raise CoincidentCentersError("hand and target centers coincide")
    theta = math.degrees(math.atan2(dx, -dy))
    return theta % 360.0


def angle_to_intensities(theta: float, cal: CalibrationProfile) -> MotorQuad:
    """Blend the two motors adjacent to theta, weights summing to one."""
    theta = theta % 360.0
    sector = int(theta // 90.0)
    w2 = (theta - 90.0 * sector) / 90.0
    w1 = 1.0 - w2
    values = [0.0, 0.0, 0.0, 0.0]
    values[sector] = w1 * cal.gain(sector)
    values[(sector + 1) % 4] = w2 * cal.gain((sector + 1) % 4)
    return MotorQuad(*values)


def grasp_ready(hand: PixelBox, target: PixelBox, eps: float) -> bool:
    """Per-axis (Chebyshev) center alignment within eps pixels, inclusive."""
    return abs(hand.cx - target.cx) <= eps and abs(hand.cy - target.cy) <= eps


def select_target(
    tracks: list[Track], wanted_label: str, policy: str = "leftmost"
) -> int:
    """Pick the trial's target track id among confirmed candidates."""
    candidates = [
        t
        for t in tracks
        if t.status is TrackStatus.CONFIRMED and t.category.label == wanted_label
    ]
    if not candidates:
        raise NoCandidateError(f"no confirmed track of category {wanted_label!r}")
    if policy == "leftmost":
        chosen = min(candidates, key=lambda t: t.box.cx)
    elif policy == "rightmost":
        chosen = max(candidates, key=lambda t: t.box.cx)
    else:
        raise ValueError(f"unknown target policy {policy!r}")
    return chosen.id


class NavigationMode(str, Enum):
    INTERPOLATED_2D = "interpolated_2d"
    AXIS_SEQUENTIAL = "axis_sequential"


class Phase(str, Enum):
    AWAITING_DETECTION = "awaiting_detection"
    NAVIGATE_2D = "navigate_2d"
    NAVIGATE_HORIZONTAL = "navigate_horizontal"
    NAVIGATE_VERTICAL = "navigate_vertical"
    DETOUR_ABOVE = "detour_above"
    DETOUR_BACK = "detour_back"
    GRASP_SIGNALED = "grasp_signaled"
    DONE = "done"
    FAILED = "failed"

NAVIGATION_PHASES = frozenset(
    {
        Phase.NAVIGATE_2D,
        Phase.NAVIGATE_HORIZONTAL,
        Phase.NAVIGATE_VERTICAL,
        Phase.DETOUR_ABOVE,
        Phase.DETOUR_BACK,
    }
)


@dataclass(frozen=True)
class GuidanceConfig:
    align_eps_px: float = 25.0
    freeze_overlap_min: float = 0.3
    unfreeze_iou_min: float = 0.3
    lost_target_timeout: int = 60  # guidance steps
    lost_hand_timeout: int = 60
    depth_margin_m: float = 0.05
    above_max_top_row: float = 96.0  # 0.2 x 480-px frame height
    clearance_px: float = 30.0
    command_rate_hz: float = 10.0
    grasp_pulse_ms: int = 500
    back_burst_ms: int = 200
    back_gap_ms: int = 100
    back_repeat_hz: float = 1.0
    depth_stale_s: float = 1.0
    jump_guard_px: float | None = None  # optional lock guard, off by default

    def __post_init__(self):
        if self.command_rate_hz <= 0 or self.back_repeat_hz <= 0:
            raise ValueError("rates must be positive")
        for name in ("align_eps_px", "depth_margin_m", "clearance_px",
                     "above_max_top_row"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


class DetourKind(str, Enum):
    PROCEED = "proceed"
    ABOVE = "above"
    BACK = "back"


@dataclass(frozen=True)
class DetourPlan:
    kind: DetourKind
    clearance_row_px: float | None = None  # ABOVE only
    obstacle_near_depth_m: float | None = None  # BACK only


PROCEED_PLAN = DetourPlan(DetourKind.PROCEED)


def plan_depth_detour(
    depth: DepthMap, hand: PixelBox, target: PixelBox, cfg: GuidanceConfig
) -> DetourPlan:
    """Classify the hand-to-target corridor against the depth map.

    Obstacle pixels are those nearer than the target depth minus the
    margin. The corridor decides whether something blocks the path; the
    obstacle's true top row (walked upward column-wise from the corridor
    hits) decides between moving back (tall) and flying above (short).
    """
    target_depth = _target_depth(depth, target)
    samples = _corridor_samples(depth, hand, target)
    if samples.size == 0:
        raise DegenerateDepthError("no readable corridor samples")
    threshold = target_depth - cfg.depth_margin_m
    obstacle = samples[:, 2] < threshold
    if not np.any(obstacle):
        return PROCEED_PLAN
    hits = samples[obstacle]
    top_row = _obstacle_top_row(depth, hits, hand, threshold)
    if top_row < cfg.above_max_top_row:
        return DetourPlan(
            DetourKind.BACK, obstacle_near_depth_m=float(hits[:, 2].min())
        )
    return DetourPlan(DetourKind.ABOVE, clearance_row_px=top_row - cfg.clearance_px)


def _obstacle_top_row(
    depth: DepthMap, hits: np.ndarray, hand: PixelBox, threshold: float
) -> float:
    """Walk upward from each corridor hit while pixels stay obstacle-deep;
    the obstacle may extend above the corridor band."""
    top = float(depth.height_px)
    for col in np.unique(hits[:, 1]).astype(int):
        start = int(hits[hits[:, 1] == col][:, 0].min())
        row = start
        while row > 0:
            above = row - 1
            if hand.x1 <= col <= hand.x2 and hand.y1 <= above <= hand.y2:
                break
            value = float(depth.values[above, col])
            if not (math.isfinite(value) and value < threshold):
                break
            row = above
        top = min(top, float(row))
    return top


def _target_depth(depth: DepthMap, target: PixelBox) -> float:
    """Where the target begins: nearest depth in the central patch. With
    this definition the target's own pixels can never classify as
    obstacle, whatever its depth spread."""
    x1 = int(max(target.cx - target.w / 4.0, 0))
    x2 = int(min(target.cx + target.w / 4.0, depth.width_px - 1))
    y1 = int(max(target.cy - target.h / 4.0, 0))
    y2 = int(min(target.cy + target.h / 4.0, depth.height_px - 1))
    patch = depth.values[y1 : y2 + 1, x1 : x2 + 1]
    patch = patch[np.isfinite(patch)]
    if patch.size == 0:
        raise DegenerateDepthError("target depth unreadable")
    return float(patch.min())


def _corridor_samples(
    depth: DepthMap, hand: PixelBox, target: PixelBox, stride: int = 2
) -> np.ndarray:
    """(row, col, depth) samples along the center-to-center corridor, with
    the corridor as tall as the hand box; pixels inside the (slightly
    inflated) hand box are excluded so the hand never reads as obstacle."""
    hx, hy = hand.cx, hand.cy
    tx, ty = target.cx, target.cy
    length = math.hypot(tx - hx, ty - hy)
    n_steps = max(int(length / stride), 1)
    half_h = hand.h / 2.0
    hand_x1 = hand.x1 - 0.1 * hand.w
    hand_x2 = hand.x2 + 0.1 * hand.w
    hand_y1 = hand.y1 - 0.1 * hand.h
    hand_y2 = hand.y2 + 0.1 * hand.h
    out = []
    for i in range(n_steps + 1):
        t = i / n_steps
        x = hx + t * (tx - hx)
        y = hy + t * (ty - hy)
        if x < 0 or x >= depth.width_px:
            continue
        row_lo = max(int(y - half_h), 0)
        row_hi = min(int(y + half_h), depth.height_px - 1)
        col = int(x)
        for row in range(row_lo, row_hi + 1, stride):
            if hand_x1 <= x <= hand_x2 and hand_y1 <= row <= hand_y2:
                continue
            value = float(depth.values[row, col])
            if math.isfinite(value):
                out.append((row, col, value))
    return np.asarray(out, dtype=np.float64).reshape(-1, 3)


class TargetSource(str, Enum):
    LIVE = "live"
    FROZEN = "frozen"
    NONE = "none"


@dataclass
class FreezeState:
    frozen_box: PixelBox | None = None
    last_live_box: PixelBox | None = None
    last_effective_cx: float | None = None
    frames_without_target: int = 0


def effective_target_box(
    observed: PixelBox | None,
    hand: PixelBox,
    state: FreezeState,
    cfg: GuidanceConfig,
) -> tuple[PixelBox | None, TargetSource]:
    """Resolve the box guidance should steer to, live or frozen.

    A disappearing target freezes its last box when the hand was covering
    it; a reappearing detection only unfreezes when it overlaps the
    frozen box enough to be the same object.
    """
    if observed is not None and cfg.jump_guard_px is not None:
        if (
            state.last_effective_cx is not None
            and abs(observed.cx - state.last_effective_cx) > cfg.jump_guard_px
        ):
            observed = None  # lock guard: implausible jump, treat as absent
    if observed is not None:
        if state.frozen_box is None or iou(observed, state.frozen_box) >= cfg.unfreeze_iou_min:
            state.frozen_box = None
            state.last_live_box = observed
            state.frames_without_target = 0
            state.last_effective_cx = observed.cx
            return observed, TargetSource.LIVE
        # a detection that does not match the frozen box is not our target
    state.frames_without_target += 1
    if state.frozen_box is not None:
        state.last_effective_cx = state.frozen_box.cx
        return state.frozen_box, TargetSource.FROZEN
    if (
        state.last_live_box is not None
        and overlap_fraction(hand, state.last_live_box) >= cfg.freeze_overlap_min
    ):
        # the hand is covering where the target was last seen: occlusion
        state.frozen_box = state.last_live_box
        state.last_effective_cx = state.frozen_box.cx
        return state.frozen_box, TargetSource.FROZEN
    if state.frames_without_target > cfg.lost_target_timeout:
        raise TargetLostError(
            f"target unseen for {state.frames_without_target} guidance steps"
        )
    return None, TargetSource.NONE


@dataclass(frozen=True)
class GuidanceEvent:
    """One log record per guidance step."""

    time_s: float
    phase: Phase
    theta_deg: float | None
    quad: MotorQuad | None
    command: VibrationCommand | None
    target_source: TargetSource
    effective_box: PixelBox | None


@dataclass
class GuidanceState:
    mode: NavigationMode = NavigationMode.INTERPOLATED_2D
    phase: Phase = Phase.AWAITING_DETECTION
    target_lock: int | None = None
    freeze: FreezeState = field(default_factory=FreezeState)
    detour: DetourPlan | None = None
    frames_without_hand: int = 0
    grasp_emitted: bool = False
    nav_started_at: float | None = None
    failure_reason: str | None = None
    last_back_pulse_at: float | None = None


class GuidanceSession:
    """Step-at-a-time navigation engine for one trial.

    The caller holds the command cadence (command_rate_hz); every call
    may emit at most one command. State can be inspected between steps.
    """

    def __init__(
        self,
        cal: CalibrationProfile | None = None,
        cfg: GuidanceConfig | None = None,
        mode: NavigationMode = NavigationMode.INTERPOLATED_2D,
    ):
        self.cal = cal or CalibrationProfile()
        self.cfg = cfg or GuidanceConfig()
        self.state = GuidanceState(mode=mode)
        self._depth: DepthMap | None = None
        self._depth_at: float | None = None

    # -- helpers -----------------------------------------------------------

    def _fail(self, reason: str):
        self.state.phase = Phase.FAILED
        self.state.failure_reason = reason
        self.state.freeze.frozen_box = None

    def _nav_phase(self, hand: PixelBox, target: PixelBox) -> Phase:
        if self.state.mode is NavigationMode.INTERPOLATED_2D:
            return Phase.NAVIGATE_2D
        if abs(target.cx - hand.cx) > self.cfg.align_eps_px:
            return Phase.NAVIGATE_HORIZONTAL
        return Phase.NAVIGATE_VERTICAL

    def _direction_quad(self, hand: PixelBox, target: PixelBox) -> tuple[float, MotorQuad]:
        theta = direction_angle((hand.cx, hand.cy), (target.cx, target.cy))
        if self.state.mode is NavigationMode.AXIS_SEQUENTIAL:
            if abs(target.cx - hand.cx) > self.cfg.align_eps_px:
                theta = 90.0 if target.cx > hand.cx else 270.0
            else:
                theta = 0.0 if target.cy < hand.cy else 180.0
        return theta, angle_to_intensities(theta, self.cal)

    def _event(
        self,
        now: float,
        command: VibrationCommand | None = None,
        theta: float | None = None,
        quad: MotorQuad | None = None,
        source: TargetSource = TargetSource.NONE,
        box: PixelBox | None = None,
    ) -> GuidanceEvent:
        return GuidanceEvent(
            time_s=now,
            phase=self.state.phase,
            theta_deg=theta,
            quad=quad,
            command=command,
            target_source=source,
            effective_box=box,
        )

    # -- main step ---------------------------------------------------------

    def step(
        self,
        hand_box: PixelBox | None,
        target_obs: PixelBox | None,
        depth: DepthMap | None,
        now: float,
    ) -> GuidanceEvent:
        st = self.state
        cfg = self.cfg

        if st.phase in (Phase.GRASP_SIGNALED, Phase.DONE, Phase.FAILED):
            return self._event(now)

        if depth is not None:
            self._depth = depth
            self._depth_at = now
        elif self._depth_at is not None and now - self._depth_at > cfg.depth_stale_s:
            self._depth = None  # stale map discarded; plan survives until fresh

        if hand_box is None:
            st.frames_without_hand += 1
            if (
                st.phase in NAVIGATION_PHASES
                and st.frames_without_hand > cfg.lost_hand_timeout
            ):
                self._fail("hand_lost")
            return self._event(now)
        st.frames_without_hand = 0

        if st.phase is Phase.AWAITING_DETECTION:
            if target_obs is None:
                return self._event(now)
            st.phase = self._nav_phase(hand_box, target_obs)
            st.nav_started_at = now

        try:
            tbox, source = effective_target_box(target_obs, hand_box, st.freeze, cfg)
        except TargetLostError:
            self._fail("target_lost")
            return self._event(now)
        if tbox is None:
            return self._event(now, source=source)

        if depth is not None:  # re-plan on every fresh map
            try:
                st.detour = plan_depth_detour(depth, hand_box, tbox, cfg)
            except DegenerateDepthError:
                pass  # keep the previous plan

        if st.detour is not None and st.detour.kind is DetourKind.BACK:
            cleared = False
            if self._depth is not None:
                hand_depth = self._depth.at(hand_box.cx, hand_box.cy)
                cleared = hand_depth < (
                    st.detour.obstacle_near_depth_m - cfg.depth_margin_m
                )
            if not cleared:
                st.phase = Phase.DETOUR_BACK
                command = None
                period = 1.0 / cfg.back_repeat_hz
                if (
                    st.last_back_pulse_at is None
                    or now - st.last_back_pulse_at >= period - 1e-9
                ):
                    st.last_back_pulse_at = now
                    command = MoveBackPulse(cfg.back_burst_ms, cfg.back_gap_ms)
                return self._event(now, command=command, source=source, box=tbox)
            st.phase = self._nav_phase(hand_box, tbox)

        if grasp_ready(hand_box, tbox, cfg.align_eps_px) and not st.grasp_emitted:
            st.grasp_emitted = True
            st.phase = Phase.GRASP_SIGNALED
            st.freeze.frozen_box = None
            return self._event(
                now,
                command=GraspPulse(cfg.grasp_pulse_ms),
                source=source,
                box=tbox,
            )

        theta, quad = self._direction_quad(hand_box, tbox)
        st.phase = self._nav_phase(hand_box, tbox)
        if (
            st.detour is not None
            and st.detour.kind is DetourKind.ABOVE
            and hand_box.bottom_row >= st.detour.clearance_row_px
        ):
            st.phase = Phase.DETOUR_ABOVE
            quad = quad.without_down()
        command = Direction(quad) if not quad.is_zero else None
        return self._event(
            now, command=command, theta=theta, quad=quad, source=source, box=tbox
        )
