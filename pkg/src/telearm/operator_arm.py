"""Operator-side 1 kHz torque controller.

Per tick the controller composes six torque terms: the assistive command
(sensor wrench mapped through the body Jacobian, scaled per joint by the
limit-proximity factor alpha), the force feedback from the remote arm (scaled
by the oscillation-observer gain beta), hyperbolic limit-avoidance torques
for the local joints, predictive limit-avoidance torques for the remote
joints, a null-space posture term and a Coriolis hook:

    tau = alpha * tau_cmd + beta * tau_f + tau_lo + tau_la + tau_no + tau_co

It also emits the current hand pose as the goal command for the remote arm.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose
from .kinematics import (
    IkParams,
    KinematicChain,
    _body_jacobian_from_frames,
    damped_pinv,
    fk_frames,
    project_to_nullspace,
    solve_ik,
)
from .sigproc import LowPassFilter


@dataclass
class OperatorGains:
    """Tunables of the operator controller.

    gamma_p/gamma_v and the null-space gains are empirically tuned values; the
    activation thresholds default to 10 degrees from a position limit and
    40 deg/s from a velocity limit.
    """

    gamma_p: float = 0.02            # N*m*rad, position barrier gain
    gamma_v: float = 0.05            # N*m*s, velocity barrier gain
    t_p: float = np.radians(10.0)    # rad, position activation threshold
    t_v: float = np.radians(40.0)    # rad/s, velocity activation threshold
    tau_max: float = 30.0            # N*m, barrier saturation
    ns_stiffness: np.ndarray = field(default_factory=lambda: np.full(7, 4.0))
    ns_damping: np.ndarray = field(default_factory=lambda: np.full(7, 1.0))
    q_rest: np.ndarray | None = None
    lambda_pinv: float = 0.05        # damping for (J_A^T)^+ in the predictive term
    lambda_nullspace: float = 1e-6   # small so the posture term stays wrench-free
    feedback_cutoff_hz: float = 15.0
    qdot_pred_cutoff_hz: float = 15.0
    stale_feedback_s: float = 0.1
    ik: IkParams = field(default_factory=lambda: IkParams(max_iters=10, restarts=0))

    def __post_init__(self):
        self.ns_stiffness = np.asarray(self.ns_stiffness, dtype=float).reshape(7)
        self.ns_damping = np.asarray(self.ns_damping, dtype=float).reshape(7)
        if self.q_rest is not None:
            self.q_rest = np.asarray(self.q_rest, dtype=float).reshape(7)
        if self.t_p <= 0 or self.t_v <= 0:
            raise ValueError("activation thresholds must be positive")
        if self.gamma_p < 0 or self.gamma_v < 0:
            raise ValueError("barrier gains must be >= 0")


@dataclass
class AvatarFeedback:
    """Feedback packet from the remote arm, as consumed by the operator side."""

    wrench: np.ndarray            # compensated FT wrench, hand frame
    ee_force: np.ndarray          # arm-estimated Cartesian end-effector force
    q: np.ndarray
    qdot: np.ndarray
    mode: int
    stamp: int                    # sender tick


@dataclass
class TorqueBreakdown:
    """All Eq-style torque parts of one tick, recomposable exactly."""

    tau_cmd: np.ndarray
    tau_f: np.ndarray
    tau_lo: np.ndarray
    tau_la: np.ndarray
    tau_no: np.ndarray
    tau_co: np.ndarray
    alpha: np.ndarray
    beta: float
    tau_total: np.ndarray

    def recompose(self) -> np.ndarray:
        return (self.alpha * self.tau_cmd + self.beta * self.tau_f
                + self.tau_lo + self.tau_la + self.tau_no + self.tau_co)


def tau_from_wrench(J: np.ndarray, wrench) -> np.ndarray:
    """Joint torques equivalent to a hand-frame wrench: J^T F."""
    return J.T @ np.asarray(wrench, dtype=float)


def limit_distances(q, chain: KinematicChain):
    """Per-joint distance to the nearer position limit and its escape sign.

    The sign is +1 when the nearer limit is the lower one (torque away from
    it is positive) and -1 otherwise.
    """
    q = np.asarray(q, dtype=float)
    d_lo = q - chain.position_limits[:, 0]
    d_hi = chain.position_limits[:, 1] - q
    sign = np.where(d_lo <= d_hi, 1.0, -1.0)
    return np.minimum(d_lo, d_hi), sign


def alpha_scale(d_p: float, d_v: float, g: OperatorGains) -> float:
    """Command scale in [0, 1]: 1 outside the thresholds, 0 from halfway in."""
    return max(0.0, min(1.0, 2.0 * min(d_p / g.t_p, d_v / g.t_v) - 1.0))


def alpha_vector(q, qdot, chain: KinematicChain, g: OperatorGains) -> np.ndarray:
    d_p, _ = limit_distances(q, chain)
    d_v = chain.velocity_limits - np.abs(np.asarray(qdot, dtype=float))
    ratio = np.minimum(np.maximum(d_p, 0.0) / g.t_p, np.maximum(d_v, 0.0) / g.t_v)
    return np.clip(2.0 * ratio - 1.0, 0.0, 1.0)


def limit_avoidance_torque(q, qdot, chain: KinematicChain, g: OperatorGains) -> np.ndarray:
    """Hyperbolic barrier torques against position and velocity limits.

    Magnitude gamma * (1/d - 1/t) inside the threshold, signed to push the
    joint back toward mid-range (position) or oppose the velocity (velocity),
    saturated at tau_max.
    """
    qdot = np.asarray(qdot, dtype=float)
    d_p, sign_p = limit_distances(q, chain)
    tau = np.zeros(7)
    eps = 1e-9
    active_p = d_p < g.t_p
    if np.any(active_p):
        mag = g.gamma_p * (1.0 / np.maximum(d_p[active_p], eps) - 1.0 / g.t_p)
        tau[active_p] += sign_p[active_p] * mag
    d_v = chain.velocity_limits - np.abs(qdot)
    active_v = d_v < g.t_v
    if np.any(active_v):
        mag = g.gamma_v * (1.0 / np.maximum(d_v[active_v], eps) - 1.0 / g.t_v)
        tau[active_v] += -np.sign(qdot[active_v]) * mag
    return np.clip(tau, -g.tau_max, g.tau_max)


def nullspace_torque(J, q, qdot, q_rest, g: OperatorGains) -> np.ndarray:
    """Posture torque projected into the Jacobian null space."""
    raw = g.ns_stiffness * (q_rest - np.asarray(q, dtype=float)) - g.ns_damping * np.asarray(qdot, dtype=float)
    return project_to_nullspace(J, raw, g.lambda_nullspace)


class PredictiveLimitAvoidance:
    """IK model of the remote arm rendering its joint limits without latency.

    Every tick the commanded hand pose is solved for a predicted remote
    configuration (seeded from the last received remote joints), barrier
    torques are evaluated on the prediction, and the result is pulled back
    into operator joint space via J_O^T (J_A^T)^+.
    """

    def __init__(self, avatar_chain: KinematicChain, gains: OperatorGains, sample_rate_hz: float):
        self.chain = avatar_chain
        self.gains = gains
        self.q_pred = None
        self.qdot_pred = np.zeros(7)
        self._qdot_filter = LowPassFilter(gains.qdot_pred_cutoff_hz, sample_rate_hz)
        self.stale = True
        self.ik_failed = False

    def predict(self, goal_pose: Pose, last_avatar_q, dt: float):
        """Update (q_pred, qdot_pred) for the commanded pose; never raises.

        The latest received remote joints seed the solve, which keeps the
        prediction on the branch the remote arm actually occupies.
        """
        if last_avatar_q is None:
            self.stale = True
            return self.q_pred
        self.stale = False
        res = solve_ik(self.chain, goal_pose, np.asarray(last_avatar_q, dtype=float), self.gains.ik)
        self.ik_failed = not res.success
        if res.success or self.q_pred is None:
            q_new = res.q
        else:
            q_new = self.q_pred  # keep the previous prediction, flag the failure
        if self.q_pred is None:
            raw_qdot = np.zeros(7)
        else:
            raw_qdot = (q_new - self.q_pred) / dt
        self.qdot_pred = self._qdot_filter.step(raw_qdot)
        self.q_pred = q_new
        return self.q_pred

    def torque(self, J_operator: np.ndarray, goal_pose: Pose, last_avatar_q, dt: float) -> np.ndarray:
        self.predict(goal_pose, last_avatar_q, dt)
        if self.q_pred is None:
            return np.zeros(7)
        tau_model = limit_avoidance_torque(self.q_pred, self.qdot_pred, self.chain, self.gains)
        if not np.any(tau_model):
            return np.zeros(7)
        R, p, origins, axes = fk_frames(self.chain, self.q_pred)
        J_avatar = _body_jacobian_from_frames(R, p, origins, axes)
        # (J_A^T)^+ tau via its damped normal equations, solved on the vector
        lam = self.gains.lambda_pinv
        A = J_avatar @ J_avatar.T
        A[np.diag_indices_from(A)] += lam * lam
        wrench = np.linalg.solve(A, J_avatar @ tau_model)
        return J_operator.T @ wrench


class OperatorArmController:
    """One operator arm: composes the torque command and emits goal poses."""

    def __init__(self, chain: KinematicChain, avatar_chain: KinematicChain,
                 gains: OperatorGains | None = None, sample_rate_hz: float = 1000.0):
        self.chain = chain
        self.gains = gains or OperatorGains()
        if self.gains.q_rest is None:
            self.gains = replace(self.gains, q_rest=chain.mid_position())
        self.sample_rate_hz = sample_rate_hz
        self.dt = 1.0 / sample_rate_hz
        self.predictor = PredictiveLimitAvoidance(avatar_chain, self.gains, sample_rate_hz)
        self._lp_panda = LowPassFilter(self.gains.feedback_cutoff_hz, sample_rate_hz)
        self._lp_sensor = LowPassFilter(self.gains.feedback_cutoff_hz, sample_rate_hz)
        self.stale_ticks = int(round(self.gains.stale_feedback_s * sample_rate_hz))
        self.last_breakdown = None

    def feedback_torque(self, J: np.ndarray, feedback: AvatarFeedback | None, now_tick: int) -> np.ndarray:
        """tau_sensor + tau_diff; zero when feedback is missing or stale.

        tau_sensor displays the remote FT wrench; tau_diff adds the force the
        FT sensor cannot see (remote arm estimate minus sensor estimate, e.g.
        lower-arm contacts), low-pass filtered, with no torque component.
        """
        if feedback is None or now_tick - feedback.stamp > self.stale_ticks:
            return np.zeros(7)
        f_panda = self._lp_panda.step(np.asarray(feedback.ee_force, dtype=float))
        f_sensor = self._lp_sensor.step(np.asarray(feedback.wrench[:3], dtype=float))
        tau_sensor = J.T @ feedback.wrench
        f_diff = f_panda - f_sensor
        tau_diff = J.T @ np.concatenate([f_diff, np.zeros(3)])
        return tau_sensor + tau_diff

    def tick(self, q, qdot, ft_wrench, feedback: AvatarFeedback | None, beta: float,
             now_tick: int, tau_co=None, frames=None):
        """One 1 kHz update. Returns (TorqueBreakdown, goal_hand_pose).

        ``ft_wrench`` is the operator's own compensated FT reading in the hand
        frame; ``feedback`` is the latest remote packet (or None); ``beta``
        comes from the oscillation observer. ``frames`` optionally carries the
        precomputed (J, hand Pose) of the current q so callers that already
        ran FK do not pay for it twice.
        """
        q = np.asarray(q, dtype=float)
        qdot = np.asarray(qdot, dtype=float)
        if frames is None:
            R, p, origins, axes = fk_frames(self.chain, q)
            J = _body_jacobian_from_frames(R, p, origins, axes)
            goal_pose = Pose(p, _quat_from_R(R))
        else:
            J, goal_pose = frames

        alpha = alpha_vector(q, qdot, self.chain, self.gains)
        tau_cmd = tau_from_wrench(J, ft_wrench)
        tau_f = self.feedback_torque(J, feedback, now_tick)
        tau_lo = limit_avoidance_torque(q, qdot, self.chain, self.gains)
        if feedback is not None:
            tau_la = self.predictor.torque(J, goal_pose, feedback.q, self.dt)
        else:
            tau_la = np.zeros(7)
        tau_no = nullspace_torque(J, q, qdot, self.gains.q_rest, self.gains)
        tau_co = np.zeros(7) if tau_co is None else np.asarray(tau_co, dtype=float)
        tau_total = alpha * tau_cmd + beta * tau_f + tau_lo + tau_la + tau_no + tau_co
        breakdown = TorqueBreakdown(tau_cmd, tau_f, tau_lo, tau_la, tau_no, tau_co,
                                    alpha, beta, tau_total)
        self.last_breakdown = breakdown
        return breakdown, goal_pose


def _quat_from_R(R):
    from .geometry import matrix_to_quat
    return matrix_to_quat(R)
