"""Streaming signal tools for the feedback loop.

A first-order low-pass smooths force estimates; a Hanning-windowed single-bin
DFT over a sliding sample window tracks the energy near one frequency; the
oscillation observer turns the per-axis bin amplitudes into the rate-limited
force-feedback gain beta in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LowPassFilter:
    """First-order exponential low-pass; the first sample seeds the state.

    The smoothing factor is dt / (dt + 1 / (2 pi f_c)), the discrete
    equivalent of an RC filter with cutoff f_c.
    """

    def __init__(self, cutoff_hz: float, sample_rate_hz: float):
        if not 0.0 < cutoff_hz < sample_rate_hz / 2.0:
            raise ValueError("cutoff must lie in (0, sample_rate/2)")
        self.cutoff_hz = cutoff_hz
        self.sample_rate_hz = sample_rate_hz
        dt = 1.0 / sample_rate_hz
        self.alpha = dt / (dt + 1.0 / (2.0 * np.pi * cutoff_hz))
        self.state = None

    def step(self, x):
        if self.state is None:
            self.state = np.array(x, dtype=float) if np.ndim(x) else float(x)
        else:
            self.state = self.state + self.alpha * (x - self.state)
        return self.state

    def reset(self):
        self.state = None


class SlidingBin:
    """Single DFT bin over the most recent N samples with a Hanning window.

    The window is the periodic variant w[k] = 0.5 (1 - cos(2 pi k / N)), whose
    transform is exactly zero at every integer bin offset >= 2; in particular
    a constant (DC) input leaks nothing into the observed bin. The amplitude
    is recomputed from the ring each call, which is exact by construction and
    cheap at N = 512.
    """

    def __init__(self, size: int = 512, bin_index: int = 4):
        if size <= 0 or size & (size - 1):
            raise ValueError("window size must be a power of two")
        if not 0 <= bin_index < size // 2:
            raise ValueError("bin index must lie in [0, size/2)")
        self.size = size
        self.bin_index = bin_index
        k = np.arange(size)
        window = 0.5 * (1.0 - np.cos(2.0 * np.pi * k / size))
        self._coeff = window * np.exp(-2j * np.pi * k * bin_index / size)
        self._buf = np.zeros(size)
        self._head = 0
        self._count = 0

    def push(self, x: float):
        self._buf[self._head] = x
        self._head = (self._head + 1) % self.size
        if self._count < self.size:
            self._count += 1

    def amplitude(self) -> float:
        """|sum_k w[k] x[k] e^{-2 pi i k b / N}| over the last N samples, oldest first.

        Returns 0 until the window has filled once.
        """
        if self._count < self.size:
            return 0.0
        h = self._head
        n = self.size
        acc = np.dot(self._coeff[: n - h], self._buf[h:]) + np.dot(self._coeff[n - h:], self._buf[:h])
        return float(abs(acc))

    def reset(self):
        self._buf[:] = 0.0
        self._head = 0
        self._count = 0


@dataclass
class ObserverConfig:
    """Oscillation observer settings (see the scenario file key ``observer``)."""

    dft_size: int = 512
    dft_bin: int = 4
    v_min: float = 163.0
    v_max: float = 500.0
    beta_down_seconds: float = 0.8
    beta_up_seconds: float = 1.7

    def __post_init__(self):
        if self.v_min >= self.v_max:
            raise ValueError("v_min must be below v_max")
        if self.beta_down_seconds <= 0 or self.beta_up_seconds <= 0:
            raise ValueError("beta rate times must be positive")

    @staticmethod
    def from_dict(d: dict) -> "ObserverConfig":
        known = {f for f in ObserverConfig.__dataclass_fields__}
        return ObserverConfig(**{k: v for k, v in d.items() if k in known})


class OscillationObserver:
    """Computes the force-feedback gain beta from per-axis bin amplitudes.

    Each Cartesian force axis feeds its own sliding bin; the Euclidean norm of
    the three amplitudes is clamped between v_min and v_max, normalized to
    [0, 1] and inverted (beta target = 1 - v). Beta follows the target with
    its change rate limited so full feedback removal takes beta_down_seconds
    and full restoration beta_up_seconds.
    """

    def __init__(self, config: ObserverConfig | None = None):
        self.config = config or ObserverConfig()
        c = self.config
        self.bins = [SlidingBin(c.dft_size, c.dft_bin) for _ in range(3)]
        self.beta = 1.0
        self.amplitudes = np.zeros(3)
        self.v_raw = 0.0

    def step(self, forces_xyz, dt: float) -> float:
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        c = self.config
        for i in range(3):
            self.bins[i].push(float(forces_xyz[i]))
            self.amplitudes[i] = self.bins[i].amplitude()
        self.v_raw = float(np.sqrt(np.dot(self.amplitudes, self.amplitudes)))
        v = (self.v_raw - c.v_min) / (c.v_max - c.v_min)
        v = min(max(v, 0.0), 1.0)
        target = 1.0 - v
        down = dt / c.beta_down_seconds
        up = dt / c.beta_up_seconds
        self.beta = min(max(target, self.beta - down), self.beta + up)
        self.beta = min(max(self.beta, 0.0), 1.0)
        return self.beta

    def reset(self):
        for b in self.bins:
            b.reset()
        self.beta = 1.0
        self.amplitudes[:] = 0.0
        self.v_raw = 0.0
