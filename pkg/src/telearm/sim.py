"""Deterministic fixed-timestep plants, penalty contact and a message channel.

The plants are deliberately simple (diagonal constant inertia, viscous
damping, semi-implicit Euler at 1 ms): the controllers are the object under
test, not rigid-body dynamics. Joint limits are hard stops that zero the
outgoing velocity component. The channel delays messages by a configurable
per-direction latency plus seeded jitter, optionally dropping some; receivers
keep only the newest payload by send tick, so reordered stale messages never
overwrite fresh state.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, matrix_to_quat, pose_error, slerp
from .kinematics import KinematicChain, fk_frames


@dataclass
class ArmPlant:
    """7-joint double integrator with viscous damping and hard limit stops."""

    chain: KinematicChain
    q: np.ndarray
    qdot: np.ndarray = field(default_factory=lambda: np.zeros(7))
    inertia: np.ndarray = field(default_factory=lambda: np.full(7, 1.0))
    viscous: np.ndarray = field(default_factory=lambda: np.full(7, 1.0))

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(7).copy()
        self.qdot = np.asarray(self.qdot, dtype=float).reshape(7).copy()
        self.inertia = np.asarray(self.inertia, dtype=float).reshape(7)
        self.viscous = np.asarray(self.viscous, dtype=float).reshape(7)
        if np.any(self.inertia <= 0.0):
            raise ValueError("inertia must be positive")
        if np.any(self.viscous < 0.0):
            raise ValueError("viscous friction must be >= 0")

    def step(self, tau, tau_ext, dt: float):
        """Semi-implicit Euler: velocity first, then position, then hard stops."""
        tau = np.asarray(tau, dtype=float)
        tau_ext = np.asarray(tau_ext, dtype=float)
        self.qdot = self.qdot + dt * (tau + tau_ext - self.viscous * self.qdot) / self.inertia
        self.q = self.q + dt * self.qdot
        lo = self.chain.position_limits[:, 0]
        hi = self.chain.position_limits[:, 1]
        below = self.q < lo
        above = self.q > hi
        if np.any(below):
            self.q[below] = lo[below]
            self.qdot[below] = np.maximum(self.qdot[below], 0.0)
        if np.any(above):
            self.q[above] = hi[above]
            self.qdot[above] = np.minimum(self.qdot[above], 0.0)

    def brake(self):
        self.qdot[:] = 0.0

    def kinetic_energy(self) -> float:
        return float(0.5 * np.sum(self.inertia * self.qdot * self.qdot))


@dataclass
class ContactPlane:
    """One-sided penalty contact: k * depth minus damping along the normal.

    The force is clamped at zero so a separating or shallow contact never
    pulls (no adhesion). ``attachment`` names which frame of the arm touches:
    the hand frame or a probe point on the forearm.
    """

    point: np.ndarray
    normal: np.ndarray
    stiffness: float = 20000.0
    damping: float = 50.0
    attachment: str = "hand"

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float).reshape(3)
        self.normal = np.asarray(self.normal, dtype=float).reshape(3)
        n = np.linalg.norm(self.normal)
        if abs(n - 1.0) > 1e-9:
            self.normal = self.normal / n
        if self.stiffness <= 0.0:
            raise ValueError("stiffness must be positive")
        if self.attachment not in ("hand", "forearm"):
            raise ValueError("attachment must be 'hand' or 'forearm'")

    def force_world(self, position, velocity) -> np.ndarray:
        """Contact force on the attached point, world frame."""
        depth = float((self.point - np.asarray(position, dtype=float)) @ self.normal)
        if depth <= 0.0:
            return np.zeros(3)
        v_n = float(np.asarray(velocity, dtype=float) @ self.normal)  # positive = separating
        f = self.stiffness * depth - self.damping * v_n
        if f <= 0.0:
            return np.zeros(3)
        return f * self.normal


class Channel:
    """One-way delayed message pipe with jitter, drops and seeded determinism."""

    def __init__(self, delay_ticks: int = 0, jitter_ticks: int = 0,
                 drop_rate: float = 0.0, rng: np.random.Generator | None = None):
        if delay_ticks < 0 or jitter_ticks < 0:
            raise ValueError("delays must be >= 0")
        if not 0.0 <= drop_rate < 1.0:
            raise ValueError("drop rate must lie in [0, 1)")
        self.delay_ticks = delay_ticks
        self.jitter_ticks = jitter_ticks
        self.drop_rate = drop_rate
        self.rng = rng or np.random.default_rng(0)
        self._queue = []    # (delivery_tick, seq, send_tick, payload)
        self._seq = 0
        self.sent = 0
        self.dropped = 0

    def send(self, payload, send_tick: int):
        self.sent += 1
        if self.drop_rate > 0.0 and self.rng.random() < self.drop_rate:
            self.dropped += 1
            return
        delivery = send_tick + self.delay_ticks
        if self.jitter_ticks > 0:
            delivery += int(self.rng.integers(0, self.jitter_ticks + 1))
        heapq.heappush(self._queue, (delivery, self._seq, send_tick, payload))
        self._seq += 1

    def poll(self, now_tick: int):
        """All messages whose delivery tick has arrived, in delivery order."""
        out = []
        while self._queue and self._queue[0][0] <= now_tick:
            delivery, _, send_tick, payload = heapq.heappop(self._queue)
            out.append((delivery, send_tick, payload))
        return out


class LatestWins:
    """Receiver-side mailbox keeping only the newest payload by send tick."""

    def __init__(self):
        self.payload = None
        self.stamp = -1

    def offer(self, send_tick: int, payload) -> bool:
        if send_tick > self.stamp:
            self.stamp = send_tick
            self.payload = payload
            return True
        return False

    def drain(self, channel: Channel, now_tick: int) -> bool:
        fresh = False
        for _, send_tick, payload in channel.poll(now_tick):
            fresh |= self.offer(send_tick, payload)
        return fresh


class PoseScript:
    """Timed pose trajectory with linear/slerp interpolation, held at the ends."""

    def __init__(self, waypoints):
        if not waypoints:
            raise ValueError("script needs at least one waypoint")
        self.times = np.array([t for t, _ in waypoints], dtype=float)
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("waypoint times must strictly increase")
        self.poses = [p for _, p in waypoints]

    def sample(self, t: float) -> Pose:
        times = self.times
        if t <= times[0]:
            return self.poses[0]
        if t >= times[-1]:
            return self.poses[-1]
        i = int(np.searchsorted(times, t, side="right")) - 1
        s = (t - times[i]) / (times[i + 1] - times[i])
        return self.poses[i].interpolate(self.poses[i + 1], s)


class HumanHandModel:
    """Scripted spring-damper 'human' pulling the operator hand along a path.

    The wrench it exerts is what the operator-side FT sensor reads (the sensor
    sits between the human and the arm), optionally with seeded noise, and the
    same wrench drives the operator plant through the body Jacobian.
    """

    def __init__(self, script: PoseScript,
                 stiffness_trans: float = 300.0, stiffness_rot: float = 10.0,
                 damping_trans: float = 15.0, damping_rot: float = 0.8,
                 noise_sigma: float = 0.0, rng: np.random.Generator | None = None):
        self.script = script
        self.k = np.concatenate([np.full(3, stiffness_trans), np.full(3, stiffness_rot)])
        self.d = np.concatenate([np.full(3, damping_trans), np.full(3, damping_rot)])
        self.noise_sigma = noise_sigma
        self.rng = rng or np.random.default_rng(0)

    def wrench(self, t: float, hand_pose: Pose, hand_twist) -> np.ndarray:
        """Hand-frame wrench the human applies at time t."""
        target = self.script.sample(t)
        e = pose_error(hand_pose, target)
        return self.k * e - self.d * np.asarray(hand_twist, dtype=float)

    def sensor_reading(self, wrench) -> np.ndarray:
        if self.noise_sigma <= 0.0:
            return np.asarray(wrench, dtype=float)
        return np.asarray(wrench, dtype=float) + self.rng.normal(0.0, self.noise_sigma, size=6)


def plant_hand_state(plant: ArmPlant):
    """FK pose, body twist and frames of the plant's hand, in one pass."""
    from .kinematics import _body_jacobian_from_frames

    R, p, origins, axes = fk_frames(plant.chain, plant.q)
    J = _body_jacobian_from_frames(R, p, origins, axes)
    pose = Pose.unchecked(p, matrix_to_quat(R))
    twist = J @ plant.qdot
    return pose, twist, J, R, p
