"""Serial 7-DoF chain kinematics: FK, body Jacobian, damped-least-squares IK.

Chains are described joint by joint as a unit rotation axis plus a fixed
parent-to-joint transform (see :class:`KinematicChain`); a Panda-like default
ships as ``data/panda_chain.json``. All Jacobians are body Jacobians relative
to the hand frame, matching the frame the controllers command wrenches in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import _fastkin
from .geometry import Pose, pose_error

N_JOINTS = 7

ROLES = ("position", "velocity", "torque")


@dataclass
class JointVector:
    """7-vector of joint-space values tagged with their physical role."""

    values: np.ndarray
    role: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.shape != (N_JOINTS,):
            raise ValueError(f"expected {N_JOINTS} joint values, got {self.values.shape}")
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")


def joint_values(q, role=None) -> np.ndarray:
    """Accept a JointVector (checking its role) or a bare 7-array."""
    if isinstance(q, JointVector):
        if role is not None and q.role != role:
            raise ValueError(f"expected a {role} JointVector, got {q.role}")
        return q.values
    arr = np.asarray(q, dtype=float).reshape(-1)
    if arr.shape != (N_JOINTS,):
        raise ValueError(f"expected {N_JOINTS} joint values, got {arr.shape}")
    return arr


@dataclass
class RevoluteJoint:
    axis: np.ndarray            # unit rotation axis in the joint's own frame
    origin: Pose                # fixed parent-to-joint transform

    def __post_init__(self):
        self.axis = np.asarray(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(self.axis)
        if abs(n - 1.0) > 1e-12:
            raise ValueError(f"joint axis must be a unit vector, norm={n}")


class KinematicChain:
    """Ordered 7-revolute-joint chain with limits, mount and tool transforms."""

    def __init__(self, joints, position_limits, velocity_limits,
                 mount_pose=None, tool_transform=None, name="chain"):
        if len(joints) != N_JOINTS:
            raise ValueError(f"chain must have exactly {N_JOINTS} joints, got {len(joints)}")
        self.joints = list(joints)
        self.position_limits = np.asarray(position_limits, dtype=float).reshape(N_JOINTS, 2)
        self.velocity_limits = np.asarray(velocity_limits, dtype=float).reshape(N_JOINTS)
        if np.any(self.position_limits[:, 0] >= self.position_limits[:, 1]):
            raise ValueError("each joint needs lo < hi position limits")
        if np.any(self.velocity_limits <= 0.0):
            raise ValueError("velocity limits must be positive")
        self.mount_pose = mount_pose if mount_pose is not None else Pose.identity()
        self.tool_transform = tool_transform if tool_transform is not None else Pose.identity()
        self.name = name
        self._precompute()

    def _precompute(self):
        # fixed transforms and Rodrigues terms, fused so each joint transform is
        # M_i(q) = cos(q_i) B0_i + sin(q_i) B1_i + (1 - cos(q_i)) B2_i
        self._orig_R = np.stack([j.origin.rotation_matrix() for j in self.joints])
        self._orig_p = np.stack([j.origin.translation for j in self.joints])
        self._axes = np.stack([j.axis for j in self.joints])
        K = np.zeros((N_JOINTS, 3, 3))
        a = self._axes
        K[:, 0, 1] = -a[:, 2]
        K[:, 0, 2] = a[:, 1]
        K[:, 1, 0] = a[:, 2]
        K[:, 1, 2] = -a[:, 0]
        K[:, 2, 0] = -a[:, 1]
        K[:, 2, 1] = a[:, 0]
        aat = a[:, :, None] * a[:, None, :]
        self._B0 = np.ascontiguousarray(self._orig_R)
        self._B1 = np.ascontiguousarray(self._orig_R @ K)
        self._B2 = np.ascontiguousarray(self._orig_R @ aat)
        self._orig_p = np.ascontiguousarray(self._orig_p)
        self._axes = np.ascontiguousarray(self._axes)
        self._mount_R = np.ascontiguousarray(self.mount_pose.rotation_matrix())
        self._mount_p = np.ascontiguousarray(self.mount_pose.translation)
        self._tool_R = np.ascontiguousarray(self.tool_transform.rotation_matrix())
        self._tool_p = np.ascontiguousarray(self.tool_transform.translation)
        # argument pack for the compiled kernels
        self._pose_args = (self._B0, self._B1, self._B2, self._orig_p,
                           self._mount_R, self._mount_p, self._tool_R, self._tool_p)
        self._frame_args = (self._B0, self._B1, self._B2, self._orig_p, self._axes,
                            self._mount_R, self._mount_p, self._tool_R, self._tool_p)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": 1,
            "name": self.name,
            "joints": [
                {
                    "axis": j.axis.tolist(),
                    "origin_translation": j.origin.translation.tolist(),
                    "origin_rotation_quaternion": j.origin.rotation.tolist(),
                    "limits": self.position_limits[i].tolist(),
                    "velocity_limit": float(self.velocity_limits[i]),
                }
                for i, j in enumerate(self.joints)
            ],
            "mount_translation": self.mount_pose.translation.tolist(),
            "mount_rotation_quaternion": self.mount_pose.rotation.tolist(),
            "tool_translation": self.tool_transform.translation.tolist(),
            "tool_rotation_quaternion": self.tool_transform.rotation.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "KinematicChain":
        if d.get("format") != 1:
            raise ValueError(f"unsupported chain format {d.get('format')!r}")
        joints = []
        limits = []
        vel = []
        for jd in d["joints"]:
            joints.append(RevoluteJoint(
                axis=jd["axis"],
                origin=Pose(jd["origin_translation"], jd["origin_rotation_quaternion"]),
            ))
            limits.append(jd["limits"])
            vel.append(jd["velocity_limit"])
        return KinematicChain(
            joints, limits, vel,
            mount_pose=Pose(d.get("mount_translation", (0, 0, 0)),
                            d.get("mount_rotation_quaternion", (0, 0, 0, 1))),
            tool_transform=Pose(d.get("tool_translation", (0, 0, 0)),
                                d.get("tool_rotation_quaternion", (0, 0, 0, 1))),
            name=d.get("name", "chain"),
        )

    @staticmethod
    def load(path) -> "KinematicChain":
        with open(path) as f:
            return KinematicChain.from_dict(json.load(f))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    # -- helpers -----------------------------------------------------------

    def mid_position(self) -> np.ndarray:
        return self.position_limits.mean(axis=1)

    def clamp(self, q) -> np.ndarray:
        return np.clip(q, self.position_limits[:, 0], self.position_limits[:, 1])

    def with_mount(self, mount_pose: Pose) -> "KinematicChain":
        return KinematicChain(self.joints, self.position_limits, self.velocity_limits,
                              mount_pose=mount_pose, tool_transform=self.tool_transform,
                              name=self.name)

    def random_config(self, rng, margin=0.0) -> np.ndarray:
        lo = self.position_limits[:, 0] + margin
        hi = self.position_limits[:, 1] - margin
        return rng.uniform(lo, hi)


def default_chain(name="panda") -> KinematicChain:
    """Load one of the chain descriptions shipped with the package."""
    data = resources.files("telearm").joinpath(f"data/{name}_chain.json").read_text()
    return KinematicChain.from_dict(json.loads(data))


# -- forward kinematics ------------------------------------------------------

def _joint_transforms(chain: KinematicChain, q: np.ndarray) -> np.ndarray:
    """Per-joint rotation blocks origin_R_i @ Rodrigues(axis_i, q_i), batched."""
    c = np.cos(q)
    s = np.sin(q)
    return (c[:, None, None] * chain._B0
            + s[:, None, None] * chain._B1
            + (1.0 - c)[:, None, None] * chain._B2)


def fk_pose(chain: KinematicChain, q):
    """Hand frame only: returns (R_hand 3x3, p_hand 3). The hot-loop path."""
    return _fastkin.fk_pose_k(*chain._pose_args, np.ascontiguousarray(q, dtype=float))


def fk_frames(chain: KinematicChain, q):
    """FK returning the hand frame plus per-joint world origins and axes.

    Returns (R_hand 3x3, p_hand 3, origins 7x3, axes 7x3). This is the shared
    path behind forward_kinematics and body_jacobian.
    """
    return _fastkin.fk_frames_k(*chain._frame_args, np.ascontiguousarray(q, dtype=float))


def link_frame(chain: KinematicChain, q, joint_index: int, offset: Pose | None = None):
    """World pose of the frame rigidly attached after joint ``joint_index``."""
    qv = joint_values(q, "position")
    M = _joint_transforms(chain, qv)
    R = chain._mount_R
    p = chain._mount_p
    for i in range(joint_index + 1):
        p = p + R @ chain._orig_p[i]
        R = R @ M[i]
    if offset is not None:
        p = p + R @ offset.translation
        R = R @ offset.rotation_matrix()
    return R, p


def point_jacobian(chain: KinematicChain, q, joint_index: int, point_world) -> np.ndarray:
    """3x7 world-frame linear Jacobian of a point carried by link ``joint_index``.

    Columns for joints beyond the carrying link are zero.
    """
    qv = joint_values(q, "position")
    _, _, origins, axes = fk_frames(chain, qv)
    J = np.zeros((3, N_JOINTS))
    for i in range(joint_index + 1):
        J[:, i] = np.cross(axes[i], point_world - origins[i])
    return J


def forward_kinematics(chain: KinematicChain, q) -> Pose:
    """Pose of the common hand frame in world for the given joint positions."""
    qv = joint_values(q, "position")
    R, p, _, _ = fk_frames(chain, qv)
    return Pose.from_matrix(np.block([[R, p[:, None]], [np.zeros((1, 3)), np.ones((1, 1))]]))


_body_jacobian_from_frames = _fastkin.body_jacobian_k


def body_jacobian(chain: KinematicChain, q) -> np.ndarray:
    """6x7 body Jacobian: joint velocities to hand-frame twist [v; w]."""
    qv = joint_values(q, "position")
    R, p, origins, axes = fk_frames(chain, qv)
    return _body_jacobian_from_frames(R, p, origins, axes)


def fk_and_jacobian(chain: KinematicChain, q):
    """Hand pose (as rotation matrix + translation) and body Jacobian in one pass."""
    qv = joint_values(q, "position")
    R, p, origins, axes = fk_frames(chain, qv)
    return R, p, _body_jacobian_from_frames(R, p, origins, axes)


# -- pseudoinverse and null space --------------------------------------------

def damped_pinv(M, lam: float) -> np.ndarray:
    """Damped pseudoinverse M^T (M M^T + lam^2 I)^-1, form chosen by shape.

    For lam = 0 on full-rank input this is the Moore-Penrose pseudoinverse;
    lam = 0 on rank-deficient input raises numpy.linalg.LinAlgError.
    """
    if lam < 0.0:
        raise ValueError("damping must be >= 0")
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("matrix input expected")
    rows, cols = M.shape
    l2 = lam * lam
    if rows <= cols:
        A = M @ M.T + l2 * np.eye(rows)
        if lam == 0.0 and np.linalg.matrix_rank(A) < rows:
            raise np.linalg.LinAlgError("rank-deficient matrix with zero damping")
        return M.T @ np.linalg.inv(A)
    A = M.T @ M + l2 * np.eye(cols)
    if lam == 0.0 and np.linalg.matrix_rank(A) < cols:
        raise np.linalg.LinAlgError("rank-deficient matrix with zero damping")
    return np.linalg.inv(A) @ M.T


def nullspace_projector(J, lam: float = 0.05) -> np.ndarray:
    """N = I - J^T (J^T)^+ such that J N x ~ 0; lam damps the pseudoinverse."""
    J = np.asarray(J, dtype=float)
    return np.eye(J.shape[1]) - J.T @ damped_pinv(J.T, lam)


def project_to_nullspace(J: np.ndarray, v: np.ndarray, lam: float) -> np.ndarray:
    """N v without forming N: v - J^T (J J^T + lam^2 I)^-1 J v."""
    A = J @ J.T
    A[np.diag_indices_from(A)] += lam * lam
    return v - J.T @ np.linalg.solve(A, J @ v)


# -- inverse kinematics -------------------------------------------------------

@dataclass
class IkParams:
    """Damped-least-squares IK settings.

    The solver clamps to joint limits every iteration and doubles the damping
    whenever a step increases the residual (rejecting that step). When the
    initial guess stalls, up to ``restarts`` further attempts are made from
    deterministic pseudo-random in-limit configurations.
    """

    max_iters: int = 100
    tol_translation: float = 1e-4      # m
    tol_rotation: float = 1e-3         # rad
    damping: float = 0.05
    damping_max: float = 1e6
    restarts: int = 20
    step_cap_translation: float = 0.2  # m, error clamp per iteration
    step_cap_rotation: float = 0.5     # rad


@dataclass
class IkResult:
    q: np.ndarray
    success: bool
    iterations: int
    translation_error: float
    rotation_error: float

    @property
    def residual(self) -> float:
        return self.translation_error + self.rotation_error


def _dls_attempt(chain, target_R, target_p, q_start, params, max_iters):
    q, ok, iters, err_t, err_r = _fastkin.dls_attempt_k(
        *chain._frame_args,
        chain.position_limits[:, 0], chain.position_limits[:, 1],
        np.ascontiguousarray(target_R), np.ascontiguousarray(target_p),
        np.ascontiguousarray(q_start, dtype=float),
        max_iters, params.tol_translation, params.tol_rotation,
        params.damping, params.damping_max,
        params.step_cap_translation, params.step_cap_rotation,
    )
    return IkResult(q, bool(ok), int(iters), float(err_t), float(err_r))


_RESTART_FRACTIONS = None


def _restart_configs(chain: KinematicChain, n: int) -> np.ndarray:
    """Deterministic pseudo-random in-limit restart configurations."""
    global _RESTART_FRACTIONS
    if _RESTART_FRACTIONS is None or _RESTART_FRACTIONS.shape[0] < n:
        _RESTART_FRACTIONS = np.random.default_rng(7919).uniform(0.05, 0.95, size=(max(n, 32), N_JOINTS))
    lo = chain.position_limits[:, 0]
    span = chain.position_limits[:, 1] - lo
    return lo + _RESTART_FRACTIONS[:n] * span


def solve_ik(chain: KinematicChain, target: Pose, q_init, params: IkParams | None = None) -> IkResult:
    """Damped-least-squares IK from q_init toward the target hand pose.

    Returns an IkResult; ``success`` is False when the tolerances were not met
    within ``max_iters`` on the initial attempt nor on any restart (the result
    then reports the best attempt's residuals). The returned configuration
    always respects the position limits. Restart configurations are
    deterministic, so repeated calls with the same arguments agree.
    """
    if params is None:
        params = IkParams()
    target_R = target.rotation_matrix()
    target_p = target.translation
    best = _dls_attempt(chain, target_R, target_p, joint_values(q_init, "position"),
                        params, params.max_iters)
    if best.success or params.restarts <= 0:
        return best
    total_iters = best.iterations
    # screen restart seeds by their pose error so the promising ones go first
    seeds = _restart_configs(chain, params.restarts)
    scores = []
    scratch = np.empty(6)
    for q_seed in seeds:
        R, p = fk_pose(chain, q_seed)
        err_t, err_r = _fastkin.pose_err_k(R, p, target_R, target_p, scratch)
        scores.append(err_t + 0.3 * err_r)
    order = np.argsort(scores)
    restart_iters = max(params.max_iters // 2, 20)
    for k in order:
        res = _dls_attempt(chain, target_R, target_p, seeds[k], params, restart_iters)
        total_iters += res.iterations
        if res.success:
            return replace(res, iterations=total_iters)
        if res.residual < best.residual:
            best = res
    return replace(best, iterations=total_iters)


def pose_error_to(chain: KinematicChain, q, target: Pose) -> np.ndarray:
    """Convenience: body-frame 6-vector error from FK(q) toward target."""
    return pose_error(forward_kinematics(chain, q), target)
