"""Rigid-body math shared by the whole stack: quaternions, poses, wrenches.

Conventions used everywhere in this package:

* quaternions are ``[x, y, z, w]`` arrays (scalar last),
* 6-vectors (twists, wrenches, pose errors) are ordered ``[linear; angular]``,
* translations are meters, rotations radians, forces N, torques N*m.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_TOL = 1e-9


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    return q / n


def quat_mul(a, b):
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array([
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ])


def quat_conj(q):
    return np.array([-q[0], -q[1], -q[2], q[3]])


def _cross3(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def quat_rotate(q, v):
    """Rotate vector v by unit quaternion q (q * v * q^-1)."""
    u = np.asarray(q[:3])
    w = q[3]
    t = 2.0 * _cross3(u, v)
    return np.asarray(v, dtype=float) + w * t + _cross3(u, t)


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return np.array([0.0, 0.0, 0.0, 1.0])
    half = 0.5 * angle
    s = np.sin(half) / n
    return np.array([axis[0] * s, axis[1] * s, axis[2] * s, np.cos(half)])


def quat_to_matrix(q):
    x, y, z, w = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array([
        [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
        [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
        [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
    ])


def matrix_to_quat(R):
    """Rotation matrix to unit quaternion (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        w = 0.25 * s
        x = (R[2, 1] - R[1, 2]) / s
        y = (R[0, 2] - R[2, 0]) / s
        z = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        w = (R[2, 1] - R[1, 2]) / s
        x = 0.25 * s
        y = (R[0, 1] + R[1, 0]) / s
        z = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        w = (R[0, 2] - R[2, 0]) / s
        x = (R[0, 1] + R[1, 0]) / s
        y = 0.25 * s
        z = (R[1, 2] + R[2, 1]) / s
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        w = (R[1, 0] - R[0, 1]) / s
        x = (R[0, 2] + R[2, 0]) / s
        y = (R[1, 2] + R[2, 1]) / s
        z = 0.25 * s
    return quat_normalize(np.array([x, y, z, w]))


def rotation_log(R):
    """Axis-angle vector of a rotation matrix (matrix logarithm)."""
    R = np.asarray(R, dtype=float)
    cos_angle = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    angle = np.arccos(cos_angle)
    if angle < 1e-10:
        # first-order: log(R) ~ skew part
        return 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle > np.pi - 1e-6:
        # near pi the skew part degenerates; recover axis from the diagonal
        d = np.diag(R)
        axis = np.sqrt(np.maximum((d + 1.0) / 2.0, 0.0))
        k = int(np.argmax(axis))
        if axis[k] == 0.0:
            return np.zeros(3)
        if k == 0:
            axis[1] = R[0, 1] / (2.0 * axis[0])
            axis[2] = R[0, 2] / (2.0 * axis[0])
        elif k == 1:
            axis[0] = R[0, 1] / (2.0 * axis[1])
            axis[2] = R[1, 2] / (2.0 * axis[1])
        else:
            axis[0] = R[0, 2] / (2.0 * axis[2])
            axis[1] = R[1, 2] / (2.0 * axis[2])
        axis /= np.linalg.norm(axis)
        # fix the sign using the off-diagonal skew part when it is not fully degenerate
        skew = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        if np.dot(skew, axis) < 0.0:
            axis = -axis
        return axis * angle
    factor = angle / (2.0 * np.sin(angle))
    return factor * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])


def slerp(qa, qb, s):
    """Spherical-linear interpolation between two unit quaternions, s in [0, 1]."""
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    dot = float(np.dot(qa, qb))
    if dot < 0.0:
        qb = -qb
        dot = -dot
    if dot > 1.0 - 1e-10:
        return quat_normalize(qa + s * (qb - qa))
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    sin_theta = np.sin(theta)
    return (np.sin((1.0 - s) * theta) * qa + np.sin(s * theta) * qb) / sin_theta


@dataclass
class Pose:
    """Rigid transform: translation (m) plus unit-quaternion rotation."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(4)
        n = np.linalg.norm(self.rotation)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {n} too far from 1")
        if abs(n - 1.0) > QUAT_NORM_TOL:
            self.rotation = self.rotation / n

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def unchecked(translation: np.ndarray, rotation: np.ndarray) -> "Pose":
        """Construct without validation; for hot paths with known-good inputs."""
        p = object.__new__(Pose)
        p.translation = translation
        p.rotation = rotation
        return p

    @staticmethod
    def from_axis_angle(axis, angle, translation=(0.0, 0.0, 0.0)) -> "Pose":
        return Pose(np.asarray(translation, dtype=float), quat_from_axis_angle(axis, angle))

    @staticmethod
    def from_matrix(T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return Pose(T[:3, 3].copy(), matrix_to_quat(T[:3, :3]))

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = quat_to_matrix(self.rotation)
        T[:3, 3] = self.translation
        return T

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            self.translation + quat_rotate(self.rotation, other.translation),
            quat_normalize(quat_mul(self.rotation, other.rotation)),
        )

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        qi = quat_conj(self.rotation)
        return Pose(-quat_rotate(qi, self.translation), qi)

    def transform_point(self, p) -> np.ndarray:
        return self.translation + quat_rotate(self.rotation, p)

    def interpolate(self, other: "Pose", s: float) -> "Pose":
        """Linear in translation, slerp in rotation."""
        s = float(s)
        return Pose(
            (1.0 - s) * self.translation + s * other.translation,
            slerp(self.rotation, other.rotation, s),
        )

    def almost_equal(self, other: "Pose", tol_t=1e-9, tol_r=1e-9) -> bool:
        dt = np.linalg.norm(self.translation - other.translation)
        dr = np.linalg.norm(rotation_log(self.rotation_matrix().T @ other.rotation_matrix()))
        return dt <= tol_t and dr <= tol_r


def pose_error(current: Pose, target: Pose) -> np.ndarray:
    """6-vector error from current toward target, expressed in the current frame.

    Translation part is R_c^T (p_t - p_c); rotation part is the axis-angle of
    R_c^T R_t (log map). A body twist equal to this error (scaled) moves the
    current frame toward the target.
    """
    Rc = current.rotation_matrix()
    e_t = Rc.T @ (target.translation - current.translation)
    e_r = rotation_log(Rc.T @ target.rotation_matrix())
    return np.concatenate([e_t, e_r])


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def transform_wrench(T: Pose, w) -> np.ndarray:
    """Express a wrench given in frame B in frame A, where T is the pose of B in A.

    Forces rotate; torques pick up the moment of the rotated force about A's
    origin (f_A = R f_B, t_A = R t_B + p x R f_B).
    """
    w = np.asarray(w, dtype=float)
    f = quat_rotate(T.rotation, w[:3])
    t = quat_rotate(T.rotation, w[3:]) + _cross3(T.translation, f)
    return np.concatenate([f, t])
