"""Glove-to-hand finger mapping and per-finger haptic brake feedback.

The glove reports 20 joint angles (four per finger); the robotic hands have 9
or 5 actuated joints, so a mapping file selects which glove joints drive which
hand joints and rescales their ranges. Brake feedback switches per finger on
an actuator-current threshold with hysteresis so it does not chatter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

GLOVE_DOF = 20


@dataclass
class MapPair:
    source: int                 # glove joint index in [0, 20)
    target: int                 # hand joint index
    source_range: tuple         # (lo, hi)
    target_range: tuple         # (lo, hi)

    def __post_init__(self):
        if not 0 <= self.source < GLOVE_DOF:
            raise ValueError(f"source index {self.source} outside [0, {GLOVE_DOF})")
        if self.source_range[1] <= self.source_range[0]:
            raise ValueError("source range must have hi > lo")
        if self.target_range[1] <= self.target_range[0]:
            raise ValueError("target range must have hi > lo")


@dataclass
class FingerMapping:
    pairs: list
    hand_dof: int
    finger_of_actuator: list = field(default_factory=list)  # groups actuators per finger

    def __post_init__(self):
        if self.hand_dof not in (5, 9):
            raise ValueError("hand_dof must be 5 or 9")
        targets = [p.target for p in self.pairs]
        if len(set(targets)) != len(targets):
            raise ValueError("target indices must be unique")
        if any(not 0 <= t < self.hand_dof for t in targets):
            raise ValueError("target index outside hand range")
        if not self.finger_of_actuator:
            self.finger_of_actuator = [min(i, 4) for i in range(self.hand_dof)]

    @staticmethod
    def from_dict(d: dict) -> "FingerMapping":
        pairs = [MapPair(p["source"], p["target"],
                         tuple(p["source_range"]), tuple(p["target_range"]))
                 for p in d["pairs"]]
        return FingerMapping(pairs, d["hand_dof"], d.get("finger_of_actuator", []))

    @staticmethod
    def load(path) -> "FingerMapping":
        with open(path) as f:
            return FingerMapping.from_dict(json.load(f))

    @staticmethod
    def preset(name: str) -> "FingerMapping":
        """Shipped mappings: 'svh9' (9-DoF right hand) or 'sih5' (5-DoF left)."""
        data = resources.files("telearm").joinpath(f"data/hand_{name}.json").read_text()
        return FingerMapping.from_dict(json.loads(data))


def map_fingers(glove_values, mapping: FingerMapping) -> np.ndarray:
    """Affine per-pair mapping of glove joints onto hand joints, clamped."""
    glove = np.asarray(glove_values, dtype=float)
    if glove.shape != (GLOVE_DOF,):
        raise ValueError(f"expected {GLOVE_DOF} glove values")
    if not np.all(np.isfinite(glove)):
        raise ValueError("glove values must be finite")
    out = np.zeros(mapping.hand_dof)
    for p in mapping.pairs:
        s_lo, s_hi = p.source_range
        t_lo, t_hi = p.target_range
        y = t_lo + (glove[p.source] - s_lo) * (t_hi - t_lo) / (s_hi - s_lo)
        out[p.target] = min(max(y, t_lo), t_hi)
    return out


@dataclass
class HapticThresholds:
    """Per-finger current thresholds (A) with a relative hysteresis band."""

    thresholds: np.ndarray
    hysteresis: float = 0.1

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=float).reshape(-1)
        if np.any(self.thresholds <= 0.0):
            raise ValueError("thresholds must be positive")
        if not 0.0 <= self.hysteresis < 1.0:
            raise ValueError("hysteresis fraction must lie in [0, 1)")


def haptic_brakes(currents, thresholds: HapticThresholds, prev_states,
                  mapping: FingerMapping | None = None) -> np.ndarray:
    """Per-finger brake booleans from actuator currents.

    A brake switches on above the finger's threshold and off below
    threshold * (1 - hysteresis); inside the band it holds its previous state.
    With a mapping, each finger considers the max current of its actuators;
    without one, currents are already per finger.
    """
    currents = np.asarray(currents, dtype=float)
    if np.any(currents < 0.0):
        raise ValueError("currents must be >= 0")
    n_fingers = thresholds.thresholds.shape[0]
    if mapping is not None:
        per_finger = np.zeros(n_fingers)
        for act, fin in enumerate(mapping.finger_of_actuator):
            per_finger[fin] = max(per_finger[fin], currents[act])
    else:
        per_finger = currents
    prev = np.asarray(prev_states, dtype=bool)
    on = per_finger > thresholds.thresholds
    off = per_finger < thresholds.thresholds * (1.0 - thresholds.hysteresis)
    return np.where(on, True, np.where(off, False, prev))


class SimHand:
    """First-order joint servo standing in for a real hand in the simulator.

    Joint positions chase the command at a limited rate; the actuator current
    is proportional to the remaining tracking error, which is what the brake
    threshold logic consumes.
    """

    def __init__(self, n_dof: int, rate: float = 8.0, current_gain: float = 2.0):
        self.positions = np.zeros(n_dof)
        self.rate = rate
        self.current_gain = current_gain

    def step(self, command, dt: float) -> np.ndarray:
        command = np.asarray(command, dtype=float)
        err = command - self.positions
        self.positions = self.positions + np.clip(err * self.rate * dt, -self.rate * dt, self.rate * dt)
        return self.current_gain * np.abs(command - self.positions)
