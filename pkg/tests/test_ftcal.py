import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from telearm.ftcal import (
    GRAVITY,
    CalibrationSample,
    DegenerateData,
    FtCalibration,
    TooFewSamples,
    calibrate,
    compensate,
    predicted_wrench,
    read_samples_jsonl,
)
from telearm.geometry import Pose, transform_wrench


def synth_samples(calib, n_poses, noise_sigma, rng, readings_per_pose=100):
    """Forward-model oracle: simulate the calibration protocol on a known sensor."""
    samples = []
    for _ in range(n_poses):
        R = Rotation.random(random_state=rng)
        g_sensor = R.inv().apply([0.0, 0.0, -GRAVITY])
        clean = predicted_wrench(calib, g_sensor)
        readings = clean[None, :] + rng.normal(0.0, noise_sigma, size=(readings_per_pose, 6))
        samples.append(CalibrationSample(g_sensor, readings.mean(axis=0)))
    return samples


def test_zero_mass_identical_samples_recovers_bias():
    truth = FtCalibration(force_bias=[1.0, -2.0, 0.5], torque_bias=[0.1, 0.2, -0.3], mass=0.0)
    rng = np.random.default_rng(0)
    samples = synth_samples(truth, 25, 0.0, rng)
    fit = calibrate(samples)
    np.testing.assert_allclose(fit.force_bias, truth.force_bias, atol=1e-9)
    np.testing.assert_allclose(fit.torque_bias, truth.torque_bias, atol=1e-9)
    assert fit.mass < 1e-9
    np.testing.assert_allclose(fit.com, np.zeros(3))


def test_recovery_at_protocol_noise():
    # 20 poses, mean of 100 readings each, sigma = 0.05 N
    truth = FtCalibration(force_bias=[0.8, -1.3, 2.1], torque_bias=[0.05, -0.12, 0.07],
                          mass=0.8, com=[0.01, -0.02, 0.05])
    rng = np.random.default_rng(1)
    samples = synth_samples(truth, 20, 0.05, rng)
    fit = calibrate(samples)
    assert abs(fit.mass - truth.mass) <= 0.01 * truth.mass
    assert np.linalg.norm(fit.com - truth.com) <= 1e-3
    assert np.linalg.norm(fit.force_bias - truth.force_bias) <= 0.05
    assert np.linalg.norm(fit.torque_bias - truth.torque_bias) <= 0.005


def test_recovery_error_decreases_with_noise():
    truth = FtCalibration(force_bias=[0.5, 0.5, -0.5], torque_bias=[0.02, 0.0, -0.04],
                          mass=1.2, com=[0.0, 0.015, 0.04])
    errs = []
    for sigma in (0.1, 0.01, 0.001):
        rng = np.random.default_rng(7)
        fit = calibrate(synth_samples(truth, 30, sigma, rng))
        errs.append(abs(fit.mass - truth.mass)
                    + np.linalg.norm(fit.com - truth.com)
                    + np.linalg.norm(fit.force_bias - truth.force_bias))
    assert errs[0] > errs[1] > errs[2]


def test_too_few_samples():
    truth = FtCalibration(mass=0.5, com=[0.01, 0.0, 0.02])
    rng = np.random.default_rng(2)
    with pytest.raises(TooFewSamples):
        calibrate(synth_samples(truth, 19, 0.0, rng))


def test_degenerate_gravity_directions():
    truth = FtCalibration(mass=0.5, com=[0.01, 0.0, 0.02])
    samples = []
    rng = np.random.default_rng(3)
    for _ in range(25):
        ang = rng.uniform(0, 2 * np.pi)
        g = GRAVITY * np.array([np.cos(ang), np.sin(ang), 0.0])  # all in the xy plane
        samples.append(CalibrationSample(g, predicted_wrench(truth, g)))
    with pytest.raises(DegenerateData):
        calibrate(samples)


def test_sample_gravity_magnitude_validated():
    with pytest.raises(ValueError):
        CalibrationSample([0.0, 0.0, -5.0], np.zeros(6))


def test_residual_reported():
    truth = FtCalibration(mass=0.6, com=[0.0, 0.01, 0.03])
    rng = np.random.default_rng(4)
    fit = calibrate(synth_samples(truth, 25, 0.5, rng, readings_per_pose=1))
    assert fit.residual_rms_force > 0.1  # noisy fit leaves visible residual
    fit_clean = calibrate(synth_samples(truth, 25, 0.0, rng))
    assert fit_clean.residual_rms_force < 1e-9


# -- compensation ----------------------------------------------------------------

def test_compensate_exact_model_gives_zero():
    calib = FtCalibration(force_bias=[1.0, 0.0, -1.0], torque_bias=[0.1, 0.0, 0.0],
                          mass=0.7, com=[0.02, 0.0, 0.05])
    rng = np.random.default_rng(5)
    for _ in range(20):
        R = Rotation.random(random_state=rng)
        q = R.as_quat()
        g_sensor = R.inv().apply([0.0, 0.0, -GRAVITY])
        raw = predicted_wrench(calib, g_sensor)
        np.testing.assert_allclose(compensate(raw, q, calib), np.zeros(6), atol=1e-12)


def test_compensate_identity_zero_mass_is_bias_subtraction():
    calib = FtCalibration(force_bias=[0.5, -0.5, 1.0], torque_bias=[0.0, 0.1, 0.0], mass=0.0)
    raw = np.array([1.0, 2.0, 3.0, 0.1, 0.2, 0.3])
    out = compensate(raw, [0, 0, 0, 1], calib)
    np.testing.assert_allclose(out, raw - np.concatenate([calib.force_bias, calib.torque_bias]),
                               atol=1e-12)


def test_compensate_recovers_external_wrench_through_hand_transform():
    calib = FtCalibration(force_bias=[1.0, 2.0, 3.0], torque_bias=[0.1, -0.2, 0.3],
                          mass=0.9, com=[0.01, 0.02, -0.03])
    rng = np.random.default_rng(6)
    hand_from_sensor = Pose(rng.normal(size=3) * 0.1,
                            Rotation.random(random_state=rng).as_quat())
    for _ in range(20):
        R = Rotation.random(random_state=rng)
        q = R.as_quat()
        g_sensor = R.inv().apply([0.0, 0.0, -GRAVITY])
        w_ext = rng.normal(size=6)
        raw = predicted_wrench(calib, g_sensor) + w_ext
        out = compensate(raw, q, calib, hand_from_sensor)
        np.testing.assert_allclose(out, transform_wrench(hand_from_sensor, w_ext), atol=1e-9)


def test_calibration_json_round_trip(tmp_path):
    calib = FtCalibration(force_bias=[1, 2, 3], torque_bias=[0.1, 0.2, 0.3],
                          mass=0.8, com=[0.01, -0.02, 0.05],
                          residual_rms_force=0.03, residual_rms_torque=0.004)
    path = tmp_path / "calib.json"
    calib.save(path)
    loaded = FtCalibration.load(path)
    np.testing.assert_allclose(loaded.force_bias, calib.force_bias)
    np.testing.assert_allclose(loaded.com, calib.com)
    assert loaded.mass == calib.mass
    assert loaded.residual_rms_force == calib.residual_rms_force


def test_read_samples_jsonl(tmp_path):
    path = tmp_path / "samples.jsonl"
    path.write_text(
        '{"gravity": [0, 0, -9.81], "wrench": [1, 2, 3, 0.1, 0.2, 0.3]}\n'
        '\n'
        '{"gravity": [9.81, 0, 0], "wrench": [0, 0, 0, 0, 0, 0]}\n'
    )
    samples = read_samples_jsonl(path)
    assert len(samples) == 2
    np.testing.assert_allclose(samples[0].mean_wrench, [1, 2, 3, 0.1, 0.2, 0.3])
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"gravity": [0, 0, -1.0], "wrench": [0,0,0,0,0,0]}\n')
    with pytest.raises(ValueError, match="bad.jsonl:1"):
        read_samples_jsonl(bad)
