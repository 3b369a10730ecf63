"""Avatar-side Cartesian impedance controller.

A spring-damper in the common hand frame pulls the arm toward the commanded
pose; a small state machine wraps it with the safety behaviors: hold the
current pose when commands stop arriving (watchdog), fade linearly toward the
first command after an interruption so the arm never jumps, and stop
immediately on excessive force, torque or joint speed, restartable through
the same fade.

Mode transitions: HOLD -> INIT_FADE -> TRACK, TRACK -> HOLD (watchdog),
any -> SAFETY_STOP, SAFETY_STOP -> INIT_FADE (restart request).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .geometry import Pose, matrix_to_quat, pose_error
from .kinematics import (
    KinematicChain,
    _body_jacobian_from_frames,
    fk_frames,
    project_to_nullspace,
)


class AvatarMode(IntEnum):
    HOLD = 0
    INIT_FADE = 1
    TRACK = 2
    SAFETY_STOP = 3


@dataclass
class ImpedanceGains:
    """Spring-damper and posture gains; damping defaults to 2 sqrt(stiffness)."""

    stiffness: np.ndarray = field(
        default_factory=lambda: np.array([600.0, 600.0, 600.0, 30.0, 30.0, 30.0]))
    damping: np.ndarray | None = None
    ns_stiffness: np.ndarray = field(default_factory=lambda: np.full(7, 4.0))
    ns_damping: np.ndarray = field(default_factory=lambda: np.full(7, 1.0))
    q_rest: np.ndarray | None = None
    lambda_nullspace: float = 1e-6

    def __post_init__(self):
        self.stiffness = np.asarray(self.stiffness, dtype=float).reshape(6)
        if np.any(self.stiffness < 0.0):
            raise ValueError("stiffness must be >= 0")
        if self.damping is None:
            self.damping = 2.0 * np.sqrt(self.stiffness)
        self.damping = np.asarray(self.damping, dtype=float).reshape(6)
        if np.any(self.damping < 0.0):
            raise ValueError("damping must be >= 0")
        self.ns_stiffness = np.asarray(self.ns_stiffness, dtype=float).reshape(7)
        self.ns_damping = np.asarray(self.ns_damping, dtype=float).reshape(7)
        if self.q_rest is not None:
            self.q_rest = np.asarray(self.q_rest, dtype=float).reshape(7)


@dataclass
class SafetyThresholds:
    force_n: float = 40.0
    torque_nm: float = 20.0
    joint_velocity: float = 2.6

    def violated(self, contact_wrench, qdot) -> bool:
        w = np.asarray(contact_wrench, dtype=float)
        return (np.any(np.abs(w[:3]) > self.force_n)
                or np.any(np.abs(w[3:]) > self.torque_nm)
                or np.any(np.abs(np.asarray(qdot, dtype=float)) > self.joint_velocity))


def impedance_torque(J: np.ndarray, delta_p, qdot, gains: ImpedanceGains) -> np.ndarray:
    """J^T (-S dp - D J qdot) with dp the body-frame error current - goal."""
    delta_p = np.asarray(delta_p, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    return J.T @ (-gains.stiffness * delta_p - gains.damping * (J @ qdot))


class AvatarArmController:
    """One avatar arm: impedance tracking wrapped in the safety state machine."""

    def __init__(self, chain: KinematicChain, gains: ImpedanceGains | None = None,
                 safety: SafetyThresholds | None = None,
                 sample_rate_hz: float = 1000.0,
                 watchdog_s: float = 0.1, fade_s: float = 3.0):
        self.chain = chain
        self.gains = gains or ImpedanceGains()
        if self.gains.q_rest is None:
            self.gains = replace(self.gains, q_rest=chain.mid_position())
        self.safety = safety or SafetyThresholds()
        self.dt = 1.0 / sample_rate_hz
        self.watchdog_ticks = int(round(watchdog_s * sample_rate_hz))
        self.fade_total_ticks = math.ceil(fade_s * sample_rate_hz)
        self.mode = AvatarMode.HOLD
        self.hold_pose = None
        self.fade_start_pose = None
        self.fade_ticks = 0
        self.latest_goal = None
        self.last_cmd_tick = None
        self.safety_stop_count = 0
        self.hold_count = 0
        self.effective_goal = None

    @property
    def fade_progress(self) -> float:
        return min(1.0, self.fade_ticks / self.fade_total_ticks)

    @property
    def brake_engaged(self) -> bool:
        return self.mode == AvatarMode.SAFETY_STOP

    def request_restart(self, current_pose: Pose):
        """Leave SAFETY_STOP, fading from the arm's current pose."""
        if self.mode != AvatarMode.SAFETY_STOP:
            return
        if self.latest_goal is None:
            self.latest_goal = current_pose  # nothing commanded yet: fade in place
        self._start_fade(current_pose)

    def _start_fade(self, from_pose: Pose):
        self.mode = AvatarMode.INIT_FADE
        self.fade_start_pose = from_pose
        self.fade_ticks = 0

    def tick(self, now_tick: int, cmd: Pose | None, q, qdot, contact_wrench,
             tau_co=None, frames=None) -> np.ndarray:
        """One 1 kHz update; returns the commanded joint torques.

        ``frames`` optionally carries precomputed (J, current hand Pose) so a
        caller that already ran FK does not pay for it twice.
        """
        q = np.asarray(q, dtype=float)
        qdot = np.asarray(qdot, dtype=float)
        if cmd is not None:
            self.latest_goal = cmd
            self.last_cmd_tick = now_tick

        if frames is None:
            R, p, origins, axes = fk_frames(self.chain, q)
            J = _body_jacobian_from_frames(R, p, origins, axes)
            current_pose = Pose(p, matrix_to_quat(R))
        else:
            J, current_pose = frames

        if self.mode == AvatarMode.SAFETY_STOP:
            self.effective_goal = None
            return np.zeros(7)
        if self.safety.violated(contact_wrench, qdot):
            self.mode = AvatarMode.SAFETY_STOP
            self.safety_stop_count += 1
            self.effective_goal = None
            return np.zeros(7)

        if self.mode == AvatarMode.HOLD:
            if self.hold_pose is None:
                self.hold_pose = current_pose
            if cmd is not None:
                self._start_fade(self.hold_pose)
        if self.mode == AvatarMode.INIT_FADE:
            self.fade_ticks += 1
            goal = self.fade_start_pose.interpolate(self.latest_goal, self.fade_progress)
            if self.fade_ticks >= self.fade_total_ticks:
                self.mode = AvatarMode.TRACK
        elif self.mode == AvatarMode.TRACK:
            if self.last_cmd_tick is None or now_tick - self.last_cmd_tick > self.watchdog_ticks:
                self.mode = AvatarMode.HOLD
                self.hold_pose = current_pose
                self.hold_count += 1
                goal = self.hold_pose
            else:
                goal = self.latest_goal
        if self.mode == AvatarMode.HOLD:
            goal = self.hold_pose

        self.effective_goal = goal
        delta_p = -pose_error(current_pose, goal)   # current minus goal, body frame
        tau = impedance_torque(J, delta_p, qdot, self.gains)
        tau += project_to_nullspace(
            J, self.gains.ns_stiffness * (self.gains.q_rest - q) - self.gains.ns_damping * qdot,
            self.gains.lambda_nullspace)
        if tau_co is not None:
            tau += np.asarray(tau_co, dtype=float)
        return tau
