import numpy as np
import pytest

from telearm.geometry import Pose, pose_error
from telearm.kinematics import (
    IkParams,
    body_jacobian,
    damped_pinv,
    default_chain,
    forward_kinematics,
    solve_ik,
)
from telearm.operator_arm import (
    AvatarFeedback,
    OperatorArmController,
    OperatorGains,
    PredictiveLimitAvoidance,
    alpha_scale,
    alpha_vector,
    limit_avoidance_torque,
    limit_distances,
    nullspace_torque,
    tau_from_wrench,
)

CHAIN = default_chain()
Q_MID = CHAIN.mid_position()


def fresh_feedback(stamp=0, q=None, wrench=None, ee_force=None):
    return AvatarFeedback(
        wrench=np.zeros(6) if wrench is None else np.asarray(wrench, dtype=float),
        ee_force=np.zeros(3) if ee_force is None else np.asarray(ee_force, dtype=float),
        q=Q_MID.copy() if q is None else q,
        qdot=np.zeros(7),
        mode=2,
        stamp=stamp,
    )


# -- tau_from_wrench ---------------------------------------------------------------

def test_tau_from_wrench_zero():
    J = body_jacobian(CHAIN, Q_MID)
    np.testing.assert_allclose(tau_from_wrench(J, np.zeros(6)), np.zeros(7))


def test_tau_from_wrench_planar_lever():
    from telearm.kinematics import KinematicChain, RevoluteJoint

    joints = [RevoluteJoint([0, 0, 1], Pose.identity()) for _ in range(7)]
    chain = KinematicChain(joints, [[-3, 3]] * 7, [2] * 7,
                           tool_transform=Pose([1.0, 0, 0], [0, 0, 0, 1]))
    J = body_jacobian(chain, np.zeros(7))
    tau = tau_from_wrench(J, [0.0, 1.0, 0.0, 0.0, 0.0, 0.0])  # 1 N tangential
    assert abs(tau[0] - 1.0) < 1e-12


def test_tau_from_wrench_matches_matmul_oracle():
    rng = np.random.default_rng(30)
    for _ in range(20):
        J = rng.normal(size=(6, 7))
        F = rng.normal(size=6)
        expected = np.array([sum(J[r, c] * F[r] for r in range(6)) for c in range(7)])
        np.testing.assert_allclose(tau_from_wrench(J, F), expected, atol=1e-12)


# -- alpha ---------------------------------------------------------------------------

def test_alpha_boundary_values():
    g = OperatorGains()
    assert alpha_scale(g.t_p, g.t_v, g) == 1.0
    assert alpha_scale(2 * g.t_p, 5 * g.t_v, g) == 1.0
    assert alpha_scale(g.t_p / 2.0, 5 * g.t_v, g) == 0.0   # exactly zero halfway in
    assert alpha_scale(0.75 * g.t_p, 5 * g.t_v, g) == pytest.approx(0.5)
    assert alpha_scale(0.0, 5 * g.t_v, g) == 0.0


def test_alpha_velocity_branch():
    g = OperatorGains()
    assert alpha_scale(5 * g.t_p, g.t_v / 2.0, g) == 0.0
    assert alpha_scale(5 * g.t_p, 0.75 * g.t_v, g) == pytest.approx(0.5)


def test_alpha_vector_uses_both_distances():
    g = OperatorGains()
    q = Q_MID.copy()
    qdot = np.zeros(7)
    np.testing.assert_allclose(alpha_vector(q, qdot, CHAIN, g), np.ones(7))
    # anywhere at or past halfway toward the limit the scale clamps to exact zero
    q[3] = CHAIN.position_limits[3, 1] - g.t_p / 2.0 + 1e-9
    alpha = alpha_vector(q, qdot, CHAIN, g)
    assert alpha[3] == 0.0 and np.all(alpha[[0, 1, 2, 4, 5, 6]] == 1.0)
    qdot[5] = CHAIN.velocity_limits[5] - g.t_v / 2.0 + 1e-9
    alpha = alpha_vector(q, qdot, CHAIN, g)
    assert alpha[5] == 0.0


# -- limit avoidance -----------------------------------------------------------------

def test_limit_torque_zero_mid_range():
    g = OperatorGains()
    tau = limit_avoidance_torque(Q_MID, np.zeros(7), CHAIN, g)
    np.testing.assert_allclose(tau, np.zeros(7))


def test_limit_torque_halfway_magnitude():
    # at d_p = t_p/2 the magnitude is gamma_p * (2/t_p - 1/t_p) = gamma_p / t_p
    g = OperatorGains()
    q = Q_MID.copy()
    q[2] = CHAIN.position_limits[2, 1] - g.t_p / 2.0
    tau = limit_avoidance_torque(q, np.zeros(7), CHAIN, g)
    assert tau[2] == pytest.approx(-g.gamma_p / g.t_p)  # pushes down from upper limit
    q[2] = CHAIN.position_limits[2, 0] + g.t_p / 2.0
    tau = limit_avoidance_torque(q, np.zeros(7), CHAIN, g)
    assert tau[2] == pytest.approx(g.gamma_p / g.t_p)


def test_limit_torque_hyperbolic_growth_saturates():
    g = OperatorGains()
    q = Q_MID.copy()
    mags = []
    for d in (1e-2, 1e-3, 1e-4, 1e-7):
        q[1] = CHAIN.position_limits[1, 0] + d
        tau = limit_avoidance_torque(q, np.zeros(7), CHAIN, g)
        mags.append(tau[1])
    assert mags[0] < mags[1] < mags[2] <= g.tau_max
    assert mags[3] == g.tau_max


def test_limit_torque_velocity_opposes_motion():
    g = OperatorGains()
    qdot = np.zeros(7)
    qdot[4] = CHAIN.velocity_limits[4] - g.t_v / 2.0
    tau = limit_avoidance_torque(Q_MID, qdot, CHAIN, g)
    assert tau[4] == pytest.approx(-g.gamma_v / g.t_v)
    tau = limit_avoidance_torque(Q_MID, -qdot, CHAIN, g)
    assert tau[4] == pytest.approx(g.gamma_v / g.t_v)


def test_limit_distances_signs():
    d, sign = limit_distances(CHAIN.position_limits[:, 0] + 0.01, CHAIN)
    np.testing.assert_allclose(d, np.full(7, 0.01), atol=1e-12)
    np.testing.assert_allclose(sign, np.ones(7))


# -- null space -----------------------------------------------------------------------

def test_nullspace_torque_zero_at_rest():
    g = OperatorGains(q_rest=Q_MID)
    J = body_jacobian(CHAIN, Q_MID)
    np.testing.assert_allclose(nullspace_torque(J, Q_MID, np.zeros(7), Q_MID, g),
                               np.zeros(7), atol=1e-12)


def test_nullspace_transparency():
    # the hand-frame wrench equivalent of tau_no stays below 1e-4 N whenever
    # the Jacobian is comfortably full-rank (the exact pinv amplifies by
    # 1/sigma_min, so nearly-singular folds are excluded)
    g = OperatorGains()
    rng = np.random.default_rng(31)
    checked = 0
    while checked < 20:
        q = CHAIN.random_config(rng, margin=0.3)
        J = body_jacobian(CHAIN, q)
        if np.linalg.svd(J, compute_uv=False)[-1] < 0.05:
            continue
        checked += 1
        tau_no = nullspace_torque(J, q, rng.normal(size=7) * 0.1, Q_MID, g)
        wrench = damped_pinv(J.T, 0.0) @ tau_no
        assert np.linalg.norm(wrench) < 1e-4


def test_nullspace_descent_direction():
    g = OperatorGains()
    rng = np.random.default_rng(32)
    from telearm.kinematics import nullspace_projector

    for _ in range(20):
        q = CHAIN.random_config(rng, margin=0.3)
        if np.allclose(q, Q_MID):
            continue
        J = body_jacobian(CHAIN, q)
        tau_no = nullspace_torque(J, q, np.zeros(7), Q_MID, g)
        target_dir = nullspace_projector(J, g.lambda_nullspace) @ (Q_MID - q)
        if np.linalg.norm(target_dir) > 1e-9:
            assert np.dot(tau_no, target_dir) > 0.0


# -- feedback torque ---------------------------------------------------------------------

def make_controller(**gkw):
    gains = OperatorGains(**gkw)
    return OperatorArmController(CHAIN, CHAIN, gains)


def test_feedback_zero_when_estimates_match_and_no_wrench():
    ctrl = make_controller()
    J = body_jacobian(CHAIN, Q_MID)
    fb = fresh_feedback(stamp=0, ee_force=[1.0, 2.0, 3.0])
    fb.wrench = np.array([1.0, 2.0, 3.0, 0.0, 0.0, 0.0])
    tau = ctrl.feedback_torque(J, fb, now_tick=0)
    # f_panda == f_sensor so tau_diff = 0; tau_sensor remains
    np.testing.assert_allclose(tau, J.T @ fb.wrench, atol=1e-12)


def test_feedback_pure_sensor_wrench():
    ctrl = make_controller()
    J = body_jacobian(CHAIN, Q_MID)
    fb = fresh_feedback(wrench=[0, 0, 5.0, 0, 0, 0], ee_force=[0, 0, 5.0])
    np.testing.assert_allclose(ctrl.feedback_torque(J, fb, 0), J.T @ fb.wrench, atol=1e-12)


def test_feedback_lower_arm_contact_produces_torque():
    # contact below the FT sensor: sensor sees nothing, arm estimate does
    ctrl = make_controller()
    J = body_jacobian(CHAIN, Q_MID)
    fb = fresh_feedback(wrench=np.zeros(6), ee_force=[0.0, 0.0, 8.0])
    tau = ctrl.feedback_torque(J, fb, 0)
    assert np.linalg.norm(tau) > 0.0
    np.testing.assert_allclose(tau, J.T @ np.array([0, 0, 8.0, 0, 0, 0]), atol=1e-12)


def test_feedback_stale_returns_zero():
    ctrl = make_controller()
    J = body_jacobian(CHAIN, Q_MID)
    fb = fresh_feedback(stamp=0, wrench=[0, 0, 5.0, 0, 0, 0], ee_force=[0, 0, 5.0])
    assert np.linalg.norm(ctrl.feedback_torque(J, fb, now_tick=200)) == 0.0
    assert np.linalg.norm(ctrl.feedback_torque(J, None, now_tick=0)) == 0.0


# -- full tick -------------------------------------------------------------------------------

def test_tick_quiescent_only_posture_terms():
    ctrl = make_controller(q_rest=Q_MID)
    bd, goal = ctrl.tick(Q_MID, np.zeros(7), np.zeros(6), None, 1.0, 0)
    np.testing.assert_allclose(bd.tau_cmd, np.zeros(7))
    np.testing.assert_allclose(bd.tau_f, np.zeros(7))
    np.testing.assert_allclose(bd.tau_lo, np.zeros(7))
    np.testing.assert_allclose(bd.tau_la, np.zeros(7))
    np.testing.assert_array_equal(bd.tau_total, bd.tau_no + bd.tau_co)
    expect = forward_kinematics(CHAIN, Q_MID)
    np.testing.assert_allclose(goal.translation, expect.translation, atol=1e-12)


def test_tick_equation_audit_exact():
    rng = np.random.default_rng(33)
    ctrl = make_controller()
    for tick in range(20):
        q = CHAIN.random_config(rng, margin=0.2)
        qdot = rng.normal(size=7) * 0.3
        wrench = rng.normal(size=6)
        fb = fresh_feedback(stamp=tick, wrench=rng.normal(size=6), ee_force=rng.normal(size=3))
        bd, _ = ctrl.tick(q, qdot, wrench, fb, 0.7, tick)
        np.testing.assert_array_equal(bd.tau_total, bd.recompose())


def test_tick_force_reflection_cancels():
    # operator pushes 5 N in +z, avatar reports the opposite contact wrench:
    # with alpha = beta = 1 the net hand wrench of cmd+feedback is ~0
    ctrl = make_controller(q_rest=Q_MID)
    J = body_jacobian(CHAIN, Q_MID)
    push = np.array([0, 0, 5.0, 0, 0, 0])
    fb = fresh_feedback(wrench=-push, ee_force=-push[:3])
    bd, _ = ctrl.tick(Q_MID, np.zeros(7), push, fb, 1.0, 0)
    np.testing.assert_allclose(bd.alpha, np.ones(7))
    net = damped_pinv(J.T, 0.0) @ (bd.alpha * bd.tau_cmd + bd.beta * bd.tau_f)
    assert np.linalg.norm(net) < 1e-9


def test_tick_beta_zero_gates_feedback_only():
    fb_wrench = np.array([1.0, -2.0, 4.0, 0.1, 0.0, -0.2])
    results = []
    for beta in (1.0, 0.0):
        ctrl = make_controller(q_rest=Q_MID)
        fb = fresh_feedback(wrench=fb_wrench, ee_force=fb_wrench[:3])
        bd, _ = ctrl.tick(Q_MID, np.zeros(7), np.zeros(6), fb, beta, 0)
        results.append(bd)
    on, off = results
    assert np.linalg.norm(on.tau_f) > 0.0
    np.testing.assert_array_equal(on.tau_f, off.tau_f)      # the term itself is unchanged
    np.testing.assert_array_equal(off.tau_total - off.tau_no - off.tau_lo - off.tau_la,
                                  np.zeros(7))              # but contributes nothing at beta=0
    np.testing.assert_array_equal(on.tau_lo, off.tau_lo)
    np.testing.assert_array_equal(on.tau_la, off.tau_la)


def test_tick_missing_feedback_degrades_gracefully():
    ctrl = make_controller()
    bd, _ = ctrl.tick(Q_MID, np.zeros(7), np.array([0, 0, 3.0, 0, 0, 0]), None, 1.0, 0)
    np.testing.assert_allclose(bd.tau_f, np.zeros(7))
    np.testing.assert_allclose(bd.tau_la, np.zeros(7))
    assert np.linalg.norm(bd.tau_cmd) > 0.0


# -- predictive limit avoidance ------------------------------------------------------------

def test_predictive_zero_mid_range():
    gains = OperatorGains()
    pred = PredictiveLimitAvoidance(CHAIN, gains, 1000.0)
    goal = forward_kinematics(CHAIN, Q_MID)
    J = body_jacobian(CHAIN, Q_MID)
    tau = pred.torque(J, goal, Q_MID, 0.001)
    np.testing.assert_allclose(tau, np.zeros(7))
    assert not pred.ik_failed


def barrier_potential(q, chain, g):
    d_p, _ = limit_distances(q, chain)
    u = 0.0
    for d in d_p:
        if d < g.t_p:
            d = max(d, 1e-9)
            u += g.gamma_p * (np.log(g.t_p / d) - (g.t_p - d) / g.t_p)
    return u


def test_predictive_wrench_matches_barrier_gradient():
    # drive avatar joint 3 to within t_p/2 of its limit; the predictive wrench
    # must match the finite-difference gradient of the barrier potential
    gains = OperatorGains(ik=IkParams(max_iters=300, tol_translation=1e-9,
                                      tol_rotation=1e-8, restarts=0))
    q_near = Q_MID.copy()
    q_near[3] = CHAIN.position_limits[3, 1] - gains.t_p / 2.0
    goal = forward_kinematics(CHAIN, q_near)

    pred = PredictiveLimitAvoidance(CHAIN, gains, 1000.0)
    pred.predict(goal, q_near, 0.001)
    assert not pred.ik_failed
    from telearm.kinematics import fk_frames, _body_jacobian_from_frames

    R, p, origins, axes = fk_frames(CHAIN, pred.q_pred)
    J_av = _body_jacobian_from_frames(R, p, origins, axes)
    tau_model = limit_avoidance_torque(pred.q_pred, np.zeros(7), CHAIN, gains)
    wrench = damped_pinv(J_av.T, 1e-6) @ tau_model

    # finite differences of U over body-frame pose perturbations
    h = 1e-5
    grad = np.zeros(6)
    base_pose = Pose(p, forward_kinematics(CHAIN, pred.q_pred).rotation)
    for k in range(6):
        gplus = np.zeros(6)
        gplus[k] = h
        for sgn, store in ((1.0, 1), (-1.0, -1)):
            delta = sgn * gplus
            from telearm.geometry import quat_from_axis_angle, quat_mul, quat_rotate

            t_new = base_pose.translation + quat_rotate(base_pose.rotation, delta[:3])
            axis_angle = delta[3:]
            ang = np.linalg.norm(axis_angle)
            dq = quat_from_axis_angle(axis_angle if ang > 0 else [0, 0, 1], ang)
            pose_new = Pose(t_new, quat_mul(base_pose.rotation, dq))
            res = solve_ik(CHAIN, pose_new, pred.q_pred, gains.ik)
            assert res.success
            if store == 1:
                u_plus = barrier_potential(res.q, CHAIN, gains)
            else:
                u_minus = barrier_potential(res.q, CHAIN, gains)
        grad[k] = (u_plus - u_minus) / (2 * h)
    expected = -grad
    cos = np.dot(wrench, expected) / (np.linalg.norm(wrench) * np.linalg.norm(expected))
    assert cos > 0.95
    assert np.linalg.norm(wrench) == pytest.approx(np.linalg.norm(expected), rel=0.3)


def test_predictive_reuses_prediction_on_ik_failure():
    gains = OperatorGains(ik=IkParams(max_iters=5, restarts=0))
    pred = PredictiveLimitAvoidance(CHAIN, gains, 1000.0)
    goal = forward_kinematics(CHAIN, Q_MID)
    pred.predict(goal, Q_MID, 0.001)
    q_first = pred.q_pred.copy()
    unreachable = Pose([2.0, 0.0, 0.3], [0, 0, 0, 1])
    pred.predict(unreachable, Q_MID, 0.001)
    assert pred.ik_failed
    np.testing.assert_allclose(pred.q_pred, q_first)
