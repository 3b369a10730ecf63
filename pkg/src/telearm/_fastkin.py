"""Numba-compiled kernels behind the kinematics hot paths.

The public API lives in :mod:`telearm.kinematics`; these kernels operate on
the raw arrays a KinematicChain precomputes (fused per-joint Rodrigues blocks
B0/B1/B2, joint origin translations, mount and tool frames). First import
compiles the kernels; results are cached on disk afterwards.
"""

import numpy as np
from numba import njit

PI = np.pi


@njit(cache=True)
def _mat3_mul(A, B, out):
    for i in range(3):
        a0 = A[i, 0]
        a1 = A[i, 1]
        a2 = A[i, 2]
        out[i, 0] = a0 * B[0, 0] + a1 * B[1, 0] + a2 * B[2, 0]
        out[i, 1] = a0 * B[0, 1] + a1 * B[1, 1] + a2 * B[2, 1]
        out[i, 2] = a0 * B[0, 2] + a1 * B[1, 2] + a2 * B[2, 2]


@njit(cache=True)
def _mat3_vec(A, v, out):
    for i in range(3):
        out[i] = A[i, 0] * v[0] + A[i, 1] * v[1] + A[i, 2] * v[2]


@njit(cache=True)
def fk_pose_k(B0, B1, B2, op, mR, mp, tR, tp, q):
    R = mR.copy()
    Rn = np.empty((3, 3))
    M = np.empty((3, 3))
    p = mp.copy()
    tmp = np.empty(3)
    for k in range(7):
        c = np.cos(q[k])
        s = np.sin(q[k])
        d = 1.0 - c
        for i in range(3):
            for j in range(3):
                M[i, j] = c * B0[k, i, j] + s * B1[k, i, j] + d * B2[k, i, j]
        _mat3_vec(R, op[k], tmp)
        for i in range(3):
            p[i] += tmp[i]
        _mat3_mul(R, M, Rn)
        for i in range(3):
            for j in range(3):
                R[i, j] = Rn[i, j]
    _mat3_vec(R, tp, tmp)
    for i in range(3):
        p[i] += tmp[i]
    _mat3_mul(R, tR, Rn)
    return Rn, p


@njit(cache=True)
def fk_frames_k(B0, B1, B2, op, axl, mR, mp, tR, tp, q):
    R = mR.copy()
    Rn = np.empty((3, 3))
    M = np.empty((3, 3))
    p = mp.copy()
    tmp = np.empty(3)
    origins = np.empty((7, 3))
    axes = np.empty((7, 3))
    for k in range(7):
        c = np.cos(q[k])
        s = np.sin(q[k])
        d = 1.0 - c
        for i in range(3):
            for j in range(3):
                M[i, j] = c * B0[k, i, j] + s * B1[k, i, j] + d * B2[k, i, j]
        _mat3_vec(R, op[k], tmp)
        for i in range(3):
            p[i] += tmp[i]
            origins[k, i] = p[i]
        _mat3_mul(R, M, Rn)
        for i in range(3):
            for j in range(3):
                R[i, j] = Rn[i, j]
        # the joint axis is invariant under its own rotation
        _mat3_vec(R, axl[k], tmp)
        for i in range(3):
            axes[k, i] = tmp[i]
    _mat3_vec(R, tp, tmp)
    for i in range(3):
        p[i] += tmp[i]
    _mat3_mul(R, tR, Rn)
    return Rn, p, origins, axes


@njit(cache=True)
def body_jacobian_k(R, p, origins, axes):
    J = np.empty((6, 7))
    for k in range(7):
        dx = p[0] - origins[k, 0]
        dy = p[1] - origins[k, 1]
        dz = p[2] - origins[k, 2]
        ax = axes[k, 0]
        ay = axes[k, 1]
        az = axes[k, 2]
        lx = ay * dz - az * dy
        ly = az * dx - ax * dz
        lz = ax * dy - ay * dx
        # rotate both parts into the hand frame (R^T v)
        J[0, k] = R[0, 0] * lx + R[1, 0] * ly + R[2, 0] * lz
        J[1, k] = R[0, 1] * lx + R[1, 1] * ly + R[2, 1] * lz
        J[2, k] = R[0, 2] * lx + R[1, 2] * ly + R[2, 2] * lz
        J[3, k] = R[0, 0] * ax + R[1, 0] * ay + R[2, 0] * az
        J[4, k] = R[0, 1] * ax + R[1, 1] * ay + R[2, 1] * az
        J[5, k] = R[0, 2] * ax + R[1, 2] * ay + R[2, 2] * az
    return J


@njit(cache=True)
def pose_err_k(R, p, tR, tp, e):
    """Body-frame 6-vector error (written into e); returns (err_t, err_r)."""
    dx = tp[0] - p[0]
    dy = tp[1] - p[1]
    dz = tp[2] - p[2]
    e[0] = R[0, 0] * dx + R[1, 0] * dy + R[2, 0] * dz
    e[1] = R[0, 1] * dx + R[1, 1] * dy + R[2, 1] * dz
    e[2] = R[0, 2] * dx + R[1, 2] * dy + R[2, 2] * dz
    M = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            M[i, j] = R[0, i] * tR[0, j] + R[1, i] * tR[1, j] + R[2, i] * tR[2, j]
    tr = M[0, 0] + M[1, 1] + M[2, 2]
    ca = 0.5 * (tr - 1.0)
    if ca > 1.0:
        ca = 1.0
    elif ca < -1.0:
        ca = -1.0
    angle = np.arccos(ca)
    if angle > PI - 1e-6:
        # near half-turn: recover the axis from the diagonal
        vx = np.sqrt(max((M[0, 0] + 1.0) / 2.0, 0.0))
        vy = np.sqrt(max((M[1, 1] + 1.0) / 2.0, 0.0))
        vz = np.sqrt(max((M[2, 2] + 1.0) / 2.0, 0.0))
        if vx >= vy and vx >= vz and vx > 0.0:
            vy = M[0, 1] / (2.0 * vx)
            vz = M[0, 2] / (2.0 * vx)
        elif vy >= vz and vy > 0.0:
            vx = M[0, 1] / (2.0 * vy)
            vz = M[1, 2] / (2.0 * vy)
        elif vz > 0.0:
            vx = M[0, 2] / (2.0 * vz)
            vy = M[1, 2] / (2.0 * vz)
        n = np.sqrt(vx * vx + vy * vy + vz * vz)
        if n > 0.0:
            vx /= n
            vy /= n
            vz /= n
        sx = M[2, 1] - M[1, 2]
        sy = M[0, 2] - M[2, 0]
        sz = M[1, 0] - M[0, 1]
        if sx * vx + sy * vy + sz * vz < 0.0:
            vx = -vx
            vy = -vy
            vz = -vz
        e[3] = vx * angle
        e[4] = vy * angle
        e[5] = vz * angle
    else:
        if angle < 1e-10:
            factor = 0.5
        else:
            factor = 0.5 * angle / np.sin(angle)
        e[3] = factor * (M[2, 1] - M[1, 2])
        e[4] = factor * (M[0, 2] - M[2, 0])
        e[5] = factor * (M[1, 0] - M[0, 1])
    err_t = np.sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2])
    err_r = np.sqrt(e[3] * e[3] + e[4] * e[4] + e[5] * e[5])
    return err_t, err_r


@njit(cache=True)
def dls_attempt_k(B0, B1, B2, op, axl, mR, mp, tR, tp, lo, hi,
                  tgtR, tgtp, q_start, max_iters, tol_t, tol_r,
                  lam0, lam_max, cap_t, cap_r):
    q = np.empty(7)
    for i in range(7):
        v = q_start[i]
        q[i] = lo[i] if v < lo[i] else (hi[i] if v > hi[i] else v)
    e = np.empty(6)
    e2 = np.empty(6)
    qn = np.empty(7)
    R, p = fk_pose_k(B0, B1, B2, op, mR, mp, tR, tp, q)
    err_t, err_r = pose_err_k(R, p, tgtR, tgtp, e)
    lam = lam0
    iters = 0
    stalled = 0
    while iters < max_iters:
        if err_t <= tol_t and err_r <= tol_r:
            return q, 1, iters, err_t, err_r
        iters += 1
        Rf, pf, origins, axes = fk_frames_k(B0, B1, B2, op, axl, mR, mp, tR, tp, q)
        J = body_jacobian_k(Rf, pf, origins, axes)
        st = cap_t / err_t if err_t > cap_t else 1.0
        sr = cap_r / err_r if err_r > cap_r else 1.0
        b = np.empty(6)
        for i in range(3):
            b[i] = e[i] * st
        for i in range(3, 6):
            b[i] = e[i] * sr
        A = J @ J.T
        ll = lam * lam
        for i in range(6):
            A[i, i] += ll
        y = np.linalg.solve(A, b)
        dq = J.T @ y
        # backtracking: limit clamping can spoil the full step, shorter ones often work
        improved = False
        scale = 1.0
        for _bt in range(3):
            for i in range(7):
                v = q[i] + scale * dq[i]
                qn[i] = lo[i] if v < lo[i] else (hi[i] if v > hi[i] else v)
            R2, p2 = fk_pose_k(B0, B1, B2, op, mR, mp, tR, tp, qn)
            t2, r2 = pose_err_k(R2, p2, tgtR, tgtp, e2)
            if t2 + r2 <= err_t + err_r:
                for i in range(7):
                    q[i] = qn[i]
                for i in range(6):
                    e[i] = e2[i]
                err_t = t2
                err_r = r2
                improved = True
                break
            scale *= 0.5
        if improved:
            lam = lam * 0.5
            if lam < 1e-4:
                lam = 1e-4
            stalled = 0
        else:
            lam = lam * 2.0
            if lam > lam_max:
                lam = lam_max
            stalled += 1
            if stalled >= 8:
                break  # no progress even with heavy damping; let a restart try
    ok = 1 if (err_t <= tol_t and err_r <= tol_r) else 0
    return q, ok, iters, err_t, err_r
