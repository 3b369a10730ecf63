"""Force/torque sensor calibration and online wrench compensation.

The calibration model treats everything rigidly attached to the sensor as a
point mass: with gravity g expressed in the sensor frame, the static reading
is

    force  = force_bias  + mass * g
    torque = torque_bias + (mass * com) x g

Substituting r = mass * com makes the fit linear in all ten parameters, so a
plain least-squares solve over >= 20 static samples recovers bias, mass and
center of mass at once. Compensation subtracts the model prediction from a
raw reading and re-expresses the remainder in the common hand frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Pose, quat_conj, quat_rotate, skew, transform_wrench

GRAVITY = 9.81


class TooFewSamples(ValueError):
    pass


class DegenerateData(ValueError):
    """Gravity directions do not span 3D, the fit is under-determined."""


@dataclass
class CalibrationSample:
    """One static pose: gravity in the sensor frame + mean of raw readings."""

    gravity_in_sensor: np.ndarray
    mean_wrench: np.ndarray

    def __post_init__(self):
        self.gravity_in_sensor = np.asarray(self.gravity_in_sensor, dtype=float).reshape(3)
        self.mean_wrench = np.asarray(self.mean_wrench, dtype=float).reshape(6)
        g = np.linalg.norm(self.gravity_in_sensor)
        if abs(g - GRAVITY) > 0.2:
            raise ValueError(f"|gravity| = {g:.3f} m/s^2, expected {GRAVITY} +- 0.2")


@dataclass
class FtCalibration:
    force_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mass: float = 0.0
    com: np.ndarray = field(default_factory=lambda: np.zeros(3))
    residual_rms_force: float = 0.0
    residual_rms_torque: float = 0.0

    def __post_init__(self):
        self.force_bias = np.asarray(self.force_bias, dtype=float).reshape(3)
        self.torque_bias = np.asarray(self.torque_bias, dtype=float).reshape(3)
        self.com = np.asarray(self.com, dtype=float).reshape(3)
        if self.mass < 0.0:
            raise ValueError("mass must be >= 0")

    def to_dict(self) -> dict:
        return {
            "format": 1,
            "force_bias_n": self.force_bias.tolist(),
            "torque_bias_nm": self.torque_bias.tolist(),
            "mass_kg": self.mass,
            "com_m": self.com.tolist(),
            "residual_rms_force_n": self.residual_rms_force,
            "residual_rms_torque_nm": self.residual_rms_torque,
        }

    @staticmethod
    def from_dict(d: dict) -> "FtCalibration":
        if d.get("format") != 1:
            raise ValueError(f"unsupported calibration format {d.get('format')!r}")
        return FtCalibration(
            force_bias=d["force_bias_n"],
            torque_bias=d["torque_bias_nm"],
            mass=d["mass_kg"],
            com=d["com_m"],
            residual_rms_force=d.get("residual_rms_force_n", 0.0),
            residual_rms_torque=d.get("residual_rms_torque_nm", 0.0),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @staticmethod
    def load(path) -> "FtCalibration":
        with open(path) as f:
            return FtCalibration.from_dict(json.load(f))


def predicted_wrench(calib: FtCalibration, gravity_in_sensor) -> np.ndarray:
    """Model reading at a static pose: bias plus the gravity load of the mass."""
    from .geometry import _cross3

    g = np.asarray(gravity_in_sensor, dtype=float)
    r = calib.mass * calib.com
    return np.concatenate([calib.force_bias + calib.mass * g,
                           calib.torque_bias + _cross3(r, g)])


def calibrate(samples, min_samples: int = 20) -> FtCalibration:
    """Least-squares fit of bias, mass and center of mass from static samples.

    Raises TooFewSamples below ``min_samples`` and DegenerateData when the
    gravity directions are coplanar (the torque rows then cannot pin down the
    center of mass).
    """
    samples = list(samples)
    if len(samples) < min_samples:
        raise TooFewSamples(f"need >= {min_samples} samples, got {len(samples)}")
    G = np.stack([s.gravity_in_sensor for s in samples])
    sv = np.linalg.svd(G, compute_uv=False)
    if sv[-1] < 1e-3 * sv[0]:
        raise DegenerateData("gravity directions span less than 3 dimensions")

    n = len(samples)
    # unknowns: [force_bias(3), mass(1), torque_bias(3), r(3)] with r = mass*com
    A = np.zeros((6 * n, 10))
    b = np.zeros(6 * n)
    for i, s in enumerate(samples):
        g = s.gravity_in_sensor
        rf = slice(6 * i, 6 * i + 3)
        rt = slice(6 * i + 3, 6 * i + 6)
        A[rf, 0:3] = np.eye(3)
        A[rf, 3] = g
        A[rt, 4:7] = np.eye(3)
        A[rt, 7:10] = -skew(g)       # r x g = -g x r
        b[rf] = s.mean_wrench[:3]
        b[rt] = s.mean_wrench[3:]
    theta, *_ = np.linalg.lstsq(A, b, rcond=None)
    mass = float(max(theta[3], 0.0))
    r = theta[7:10]
    com = r / mass if mass >= 1e-6 else np.zeros(3)
    calib = FtCalibration(force_bias=theta[0:3], torque_bias=theta[4:7], mass=mass, com=com)
    resid = (A @ theta - b).reshape(n, 6)
    calib.residual_rms_force = float(np.sqrt(np.mean(resid[:, :3] ** 2)))
    calib.residual_rms_torque = float(np.sqrt(np.mean(resid[:, 3:] ** 2)))
    return calib


def compensate(raw, sensor_orientation, calib: FtCalibration,
               hand_from_sensor: Pose | None = None) -> np.ndarray:
    """Bias/gravity-compensated external wrench, expressed in the hand frame.

    ``sensor_orientation`` is the sensor frame's rotation in the world (unit
    quaternion); gravity is world -z. ``hand_from_sensor`` maps sensor-frame
    coordinates into the hand frame (identity when the sensor sits at the
    hand frame).
    """
    raw = np.asarray(raw, dtype=float).reshape(6)
    g_sensor = quat_rotate(quat_conj(np.asarray(sensor_orientation, dtype=float)),
                           np.array([0.0, 0.0, -GRAVITY]))
    w = raw - predicted_wrench(calib, g_sensor)
    if hand_from_sensor is None:
        return w
    return transform_wrench(hand_from_sensor, w)


def read_samples_jsonl(path) -> list[CalibrationSample]:
    """Sample file: one JSON object per line with keys 'gravity' and 'wrench'."""
    samples = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                samples.append(CalibrationSample(d["gravity"], d["wrench"]))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad sample: {exc}") from exc
    return samples
