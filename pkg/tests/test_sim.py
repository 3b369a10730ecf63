import numpy as np
import pytest

from telearm.geometry import Pose
from telearm.kinematics import default_chain
from telearm.sim import ArmPlant, Channel, ContactPlane, HumanHandModel, LatestWins, PoseScript

CHAIN = default_chain()
Q_MID = CHAIN.mid_position()
DT = 0.001


# -- plant -----------------------------------------------------------------------

def test_plant_rest_stays_at_rest():
    plant = ArmPlant(CHAIN, Q_MID.copy())
    q0 = plant.q.copy()
    for _ in range(100):
        plant.step(np.zeros(7), np.zeros(7), DT)
    np.testing.assert_allclose(plant.q, q0)
    np.testing.assert_allclose(plant.qdot, np.zeros(7))


def test_plant_velocity_matches_analytic_solution():
    # constant torque tau on one joint: v(t) = (tau/b)(1 - exp(-b t / I));
    # runs 2 s so the joint stays well inside its position limits
    plant = ArmPlant(CHAIN, Q_MID.copy(), inertia=np.full(7, 2.0), viscous=np.full(7, 0.5))
    tau = np.zeros(7)
    tau[0] = 0.3
    b, inertia = 0.5, 2.0
    t = 0.0
    for _ in range(2000):
        plant.step(tau, np.zeros(7), DT)
        t += DT
    assert plant.q[0] < CHAIN.position_limits[0, 1] - 0.5
    v_analytic = (0.3 / b) * (1.0 - np.exp(-b * t / inertia))
    assert abs(plant.qdot[0] - v_analytic) <= 1e-3 * abs(v_analytic)


def test_plant_free_decay_energy_non_increasing():
    plant = ArmPlant(CHAIN, Q_MID.copy(), viscous=np.full(7, 0.8))
    plant.qdot = np.linspace(-1.0, 1.0, 7)
    prev = plant.kinetic_energy()
    for _ in range(5000):
        plant.step(np.zeros(7), np.zeros(7), DT)
        e = plant.kinetic_energy()
        assert e <= prev + 1e-12
        prev = e


def test_plant_hard_limit_clamps_and_zeroes_outgoing_velocity():
    plant = ArmPlant(CHAIN, Q_MID.copy())
    tau = np.zeros(7)
    tau[1] = 50.0
    for _ in range(5000):
        plant.step(tau, np.zeros(7), DT)
    assert plant.q[1] == CHAIN.position_limits[1, 1]
    assert plant.qdot[1] <= 0.0


def test_plant_brake_zeroes_velocity():
    plant = ArmPlant(CHAIN, Q_MID.copy())
    plant.qdot[:] = 1.0
    plant.brake()
    np.testing.assert_allclose(plant.qdot, np.zeros(7))


# -- contact ----------------------------------------------------------------------

def test_contact_above_plane_no_force():
    plane = ContactPlane(point=[0, 0, 0.5], normal=[0, 0, 1])
    np.testing.assert_allclose(plane.force_world([0, 0, 0.6], np.zeros(3)), np.zeros(3))


def test_contact_static_penetration_hooke():
    plane = ContactPlane(point=[0, 0, 0.5], normal=[0, 0, 1], stiffness=20000.0)
    f = plane.force_world([0, 0, 0.499], np.zeros(3))  # 1 mm deep
    np.testing.assert_allclose(f, [0, 0, 20.0], atol=1e-9)


def test_contact_never_attractive():
    plane = ContactPlane(point=[0, 0, 0.5], normal=[0, 0, 1], stiffness=20000.0, damping=100.0)
    rng = np.random.default_rng(50)
    for _ in range(500):
        pos = [0, 0, 0.5 + rng.uniform(-0.01, 0.01)]
        vel = rng.normal(size=3)
        f = plane.force_world(pos, vel)
        assert f @ plane.normal >= 0.0


def test_contact_damping_opposes_penetration_rate():
    plane = ContactPlane(point=[0, 0, 0.5], normal=[0, 0, 1], stiffness=20000.0, damping=100.0)
    f_in = plane.force_world([0, 0, 0.499], [0, 0, -0.1])   # still approaching
    f_out = plane.force_world([0, 0, 0.499], [0, 0, 0.1])   # separating
    assert f_in[2] > 20.0 > f_out[2]


def test_contact_rings_near_target_frequency():
    # a mass pressed into the plane rings at sqrt(k/m): with k = 20 kN/m and
    # m = 8 kg that lands on ~8 Hz, i.e. bin 4 of a 512 window at 1 kHz
    k, m, bias = 20000.0, 8.0, 40.0
    plane = ContactPlane(point=[0, 0, 0.0], normal=[0, 0, 1], stiffness=k, damping=2.0)
    x, v = -0.004, 0.0   # start 4 mm deep, bias force holds contact closed
    forces = []
    for _ in range(2048):
        f = plane.force_world([0, 0, x], [0, 0, v])[2]
        v += DT * ((f - bias) / m - 0.2 * v)
        x += DT * v
        forces.append(f)
    tail = np.asarray(forces[-512:])
    assert np.all(tail > 0.0)   # stayed in contact
    spec = np.abs(np.fft.rfft((tail - tail.mean()) * np.hanning(512)))
    peak_bin = int(np.argmax(spec[1:])) + 1
    f_model = np.sqrt(k / m) / (2 * np.pi)
    assert abs(peak_bin * 1000.0 / 512 - f_model) < 2.0


# -- channel -----------------------------------------------------------------------

def test_channel_zero_delay_same_tick_fifo():
    ch = Channel(delay_ticks=0)
    ch.send("a", 5)
    ch.send("b", 5)
    out = ch.poll(5)
    assert [p for _, _, p in out] == ["a", "b"]
    assert ch.poll(5) == []


def test_channel_fixed_delay_exact():
    ch = Channel(delay_ticks=30)
    for t in range(10):
        ch.send(t, t)
    for now in range(40):
        got = ch.poll(now)
        for delivery, send_tick, payload in got:
            assert delivery == send_tick + 30 == now
    assert ch.poll(100) == []


def test_channel_causality_with_jitter():
    ch = Channel(delay_ticks=10, jitter_ticks=5, rng=np.random.default_rng(1))
    for t in range(200):
        ch.send(t, t)
    delivered = ch.poll(10_000)
    for delivery, send_tick, _ in delivered:
        assert delivery >= send_tick + 10
        assert delivery <= send_tick + 15
    assert len(delivered) == 200


def test_channel_drop_rate_deterministic():
    def run():
        ch = Channel(delay_ticks=1, drop_rate=0.3, rng=np.random.default_rng(7))
        for t in range(1000):
            ch.send(t, t)
        return ch.dropped, [p for _, _, p in ch.poll(10_000)]

    d1, got1 = run()
    d2, got2 = run()
    assert d1 == d2 and got1 == got2
    assert 200 < d1 < 400


def test_latest_wins_ignores_stale_reordered_messages():
    # adversarial schedule: jitter reorders messages; the receiver must end up
    # with the newest send tick no matter the delivery order
    ch = Channel(delay_ticks=5, jitter_ticks=20, rng=np.random.default_rng(3))
    box = LatestWins()
    n = 300
    for t in range(n):
        ch.send(t, t)
        box.drain(ch, t)
    box.drain(ch, n + 100)
    assert box.stamp == n - 1 and box.payload == n - 1
    # explicit stale offer is rejected
    assert not box.offer(5, "stale")
    assert box.payload == n - 1


# -- pose script and human model ------------------------------------------------------

def test_pose_script_interpolates_and_holds():
    a = Pose([0, 0, 0], [0, 0, 0, 1])
    b = Pose([1.0, 0, 0], [0, 0, 0, 1])
    script = PoseScript([(0.0, a), (2.0, b)])
    np.testing.assert_allclose(script.sample(-1.0).translation, a.translation)
    np.testing.assert_allclose(script.sample(1.0).translation, [0.5, 0, 0])
    np.testing.assert_allclose(script.sample(5.0).translation, b.translation)
    with pytest.raises(ValueError):
        PoseScript([(0.0, a), (0.0, b)])


def test_human_model_zero_wrench_on_script():
    pose = Pose([0.3, 0, 0.5], [0, 0, 0, 1])
    model = HumanHandModel(PoseScript([(0.0, pose)]))
    np.testing.assert_allclose(model.wrench(0.0, pose, np.zeros(6)), np.zeros(6), atol=1e-12)


def test_human_model_one_cm_offset_pulls_three_newtons():
    target = Pose([0.3, 0, 0.5], [0, 0, 0, 1])
    model = HumanHandModel(PoseScript([(0.0, target)]), stiffness_trans=300.0)
    hand = Pose([0.3, 0, 0.49], [0, 0, 0, 1])
    w = model.wrench(0.0, hand, np.zeros(6))
    np.testing.assert_allclose(w, [0, 0, 3.0, 0, 0, 0], atol=1e-9)


def test_human_model_noise_deterministic_with_seed():
    target = Pose([0, 0, 0], [0, 0, 0, 1])
    w = np.arange(6.0)
    m1 = HumanHandModel(PoseScript([(0.0, target)]), noise_sigma=0.1,
                        rng=np.random.default_rng(11))
    m2 = HumanHandModel(PoseScript([(0.0, target)]), noise_sigma=0.1,
                        rng=np.random.default_rng(11))
    np.testing.assert_array_equal(m1.sensor_reading(w), m2.sensor_reading(w))
