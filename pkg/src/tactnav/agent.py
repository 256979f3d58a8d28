"""Scripted hand agents: turn felt vibration commands into hand motion.

The agent experiences what a participant would: the latest command
persists until replaced (the bracelet vibrates continuously), direction
blends decode back into an angle, pulses trigger the corresponding
maneuver. Motion is commanded in image space and converted to table-frame
centimeters through the local projection Jacobian at the hand's position.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .geometry import CameraModel
from .guidance import Direction, GraspPulse, MotorQuad, MoveBackPulse, Stop, VibrationCommand
from .scene import CameraPose, Scene, project


@dataclass(frozen=True)
class AgentConfig:
    kind: str = "ideal"  # ideal | noisy | human_bridge
    speed_px_per_s: float = 150.0
    angular_noise_sigma_deg: float = 0.0
    reaction_latency_ms: float = 0.0
    overshoot_prob: float = 0.0
    overshoot_cm: float = 12.0
    back_speed_cm_s: float = 12.0
    back_duration_s: float = 1.0

    def __post_init__(self):
        if self.kind not in ("ideal", "noisy", "human_bridge"):
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if self.speed_px_per_s <= 0:
            raise ValueError("speed must be positive")
        if self.angular_noise_sigma_deg < 0 or self.reaction_latency_ms < 0:
            raise ValueError("noise and latency must be non-negative")
        if not 0.0 <= self.overshoot_prob <= 1.0:
            raise ValueError("overshoot_prob must be in [0,1]")

    @staticmethod
    def ideal() -> "AgentConfig":
        return AgentConfig()

    @staticmethod
    def noisy(sigma_deg: float = 8.0, latency_ms: float = 120.0) -> "AgentConfig":
        return AgentConfig(
            kind="noisy",
            angular_noise_sigma_deg=sigma_deg,
            reaction_latency_ms=latency_ms,
        )


def quad_to_angle(quad: MotorQuad) -> float | None:
    """Reconstruct the commanded angle from felt intensities; None when
    all motors are silent. Assumes symmetric per-motor perception."""
    values = quad.as_tuple()
    active = [i for i, v in enumerate(values) if v > 0]
    if not active:
        return None
    if len(active) == 1:
        return 90.0 * active[0]
    a, b = active
    if a == 0 and b == 3:  # wrap pair: left->up
        w_up, w_left = values[0], values[3]
        return (270.0 + 90.0 * (w_up / (w_up + w_left))) % 360.0
    w1, w2 = values[a], values[b]
    return 90.0 * a + 90.0 * (w2 / (w1 + w2))


class HandAgent:
    """Moves the scene hand per the latest felt command."""

    def __init__(self, cfg: AgentConfig, rng: np.random.Generator,
                 cam: CameraModel | None = None):
        self.cfg = cfg
        self.rng = rng
        self.cam = cam or CameraModel()
        self._pending: deque[tuple[float, VibrationCommand]] = deque()
        self._angle_deg: float | None = None
        self._back_until: float = -1.0
        self._steer_velocity: tuple[float, float] | None = None  # human bridge
        self.reach_requested = False

    # -- command intake ------------------------------------------------------

    def feel(self, command: VibrationCommand, now: float) -> None:
        self._pending.append((now + self.cfg.reaction_latency_ms / 1000.0, command))

    def set_steer_velocity(self, vx_px_s: float, vy_px_s: float) -> None:
        self._steer_velocity = (vx_px_s, vy_px_s)

    def _apply(self, command: VibrationCommand, now: float) -> None:
        if isinstance(command, Stop):
            self._angle_deg = None
        elif isinstance(command, Direction):
            angle = quad_to_angle(command.quad)
            if angle is not None and self.cfg.angular_noise_sigma_deg > 0:
                angle = (angle + self.rng.normal(0, self.cfg.angular_noise_sigma_deg)) % 360.0
            self._angle_deg = angle
        elif isinstance(command, MoveBackPulse):
            self._angle_deg = None  # stop lateral motion, pull back
            self._back_until = now + self.cfg.back_duration_s
        elif isinstance(command, GraspPulse):
            self._angle_deg = None
            self.reach_requested = True

    # -- per-frame motion ----------------------------------------------------

    def update(self, scene: Scene, now: float, dt: float) -> Scene:
        """Advance the hand one frame; returns the scene with the hand moved."""
        while self._pending and self._pending[0][0] <= now:
            _, command = self._pending.popleft()
            self._apply(command, now)

        position = np.asarray(scene.hand.position, dtype=np.float64)

        if now < self._back_until:
            position = position + np.array([0.0, 0.0, -self.cfg.back_speed_cm_s * dt])
            return scene.with_hand_position(tuple(position))

        velocity_px = None
        if self.cfg.kind == "human_bridge":
            if self._steer_velocity is not None:
                velocity_px = np.asarray(self._steer_velocity)
        elif self._angle_deg is not None:
            theta = math.radians(self._angle_deg)
            velocity_px = self.cfg.speed_px_per_s * np.array(
                [math.sin(theta), -math.cos(theta)]
            )
        if velocity_px is None or not np.any(velocity_px):
            return scene

        jac = self._image_jacobian(scene.camera_pose, position)
        try:
            velocity_cm = np.linalg.solve(jac, velocity_px)
        except np.linalg.LinAlgError:
            return scene
        position = position + np.array([velocity_cm[0], velocity_cm[1], 0.0]) * dt
        return scene.with_hand_position(tuple(position))

    def _image_jacobian(self, pose: CameraPose, position: np.ndarray) -> np.ndarray:
        """d(px,py)/d(x_cm,y_cm) at the hand, z held fixed."""
        eps = 0.5
        base = project(tuple(position), pose, self.cam)
        jac = np.zeros((2, 2))
        for axis in range(2):
            probe = position.copy()
            probe[axis] += eps
            moved = project(tuple(probe), pose, self.cam)
            if base is None or moved is None:
                return np.eye(2) * 7.0  # fallback scale px/cm
            jac[0, axis] = (moved[0] - base[0]) / eps
            jac[1, axis] = (moved[1] - base[1]) / eps
        return jac

    # -- grasp ----------------------------------------------------------------

    def attempt_reach(
        self, scene: Scene, target_id: str, camera_pos: tuple[float, float, float]
    ) -> bool:
        """Reach forward along the line of sight; True when the sweep of
        the hand meets the target's extent (overshoot may spoil it)."""
        position = np.asarray(scene.hand.position, dtype=np.float64)
        if self.cfg.overshoot_prob > 0 and self.rng.random() < self.cfg.overshoot_prob:
            position = position + np.array([self.cfg.overshoot_cm, 0.0, 0.0])
        target = next(o for o in scene.objects if o.id == target_id)
        lo, hi = target.aabb
        half_hand = np.asarray(scene.hand.extent) / 2.0
        lo = lo - half_hand
        hi = hi + half_hand
        direction = position - np.asarray(camera_pos, dtype=np.float64)
        norm = np.linalg.norm(direction)
        if norm < 1e-9:
            return False
        direction = direction / norm
        t_near, t_far = -math.inf, math.inf
        for axis in range(3):
            if direction[axis] == 0.0:
                if position[axis] < lo[axis] or position[axis] > hi[axis]:
                    return False
                continue
            t1 = (lo[axis] - position[axis]) / direction[axis]
            t2 = (hi[axis] - position[axis]) / direction[axis]
            if t1 > t2:
                t1, t2 = t2, t1
            t_near = max(t_near, t1)
            t_far = min(t_far, t2)
        return t_far >= t_near and t_far > 0.0
