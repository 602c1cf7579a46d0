"""Excitation signals, quantization and zero-order-hold resampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigError, DomainError, UpsampleRequested

# absolute slack when checking t against the sweep window
_T_EPS = 1e-12


@dataclass(frozen=True)
class ChirpSpec:
    """Linear sine sweep: amplitude in Nm, frequencies in Hz, duration in s."""

    amplitude: float
    start_frequency: float = 0.1
    end_frequency: float = 60.0
    duration: float = 120.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ConfigError(f"chirp amplitude must be > 0, got {self.amplitude}")
        if not 0 <= self.start_frequency <= self.end_frequency:
            raise ConfigError("chirp needs 0 <= start_frequency <= end_frequency")
        if not self.duration > 0:
            raise ConfigError("chirp duration must be > 0")

    def with_amplitude(self, amplitude: float) -> "ChirpSpec":
        return ChirpSpec(amplitude, self.start_frequency, self.end_frequency, self.duration)


@dataclass
class TimeSeries:
    dt: float
    samples: np.ndarray = field(repr=False)
    start_time: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("TimeSeries dt must be > 0")
        self.samples = np.asarray(self.samples, dtype=float)

    def __len__(self):
        return len(self.samples)

    @property
    def rate(self) -> float:
        return 1.0 / self.dt

    @property
    def times(self) -> np.ndarray:
        return self.start_time + self.dt * np.arange(len(self.samples))


def _check_window(t, spec: ChirpSpec):
    t = np.asarray(t, dtype=float)
    if np.any(t < -_T_EPS) or np.any(t > spec.duration + _T_EPS):
        raise DomainError(f"t outside the sweep window [0, {spec.duration}]")
    return t


def chirp_phase(t, spec: ChirpSpec):
    """Phase argument of the sweep in radians."""
    t = _check_window(t, spec)
    rate = (spec.end_frequency - spec.start_frequency) / (2.0 * spec.duration)
    return 2.0 * math.pi * (spec.start_frequency * t + rate * t * t)


def chirp(t, spec: ChirpSpec):
    """Torque reference of the linear sweep at time ``t`` (scalar or array)."""
    out = spec.amplitude * np.sin(chirp_phase(t, spec))
    return float(out) if np.ndim(out) == 0 else out


def instantaneous_frequency(t, spec: ChirpSpec):
    t = _check_window(t, spec)
    # written as a convex blend so both endpoints are exact
    s = t / spec.duration
    out = (1.0 - s) * spec.start_frequency + s * spec.end_frequency
    return float(out) if np.ndim(out) == 0 else out


@njit(cache=True)
def quantize_scalar(value, resolution):
    """Scalar kernel of :func:`quantize` for compiled loops."""
    if resolution == 0.0:
        return value
    q = value / resolution
    n = math.floor(abs(q) + 0.5)
    return n * resolution if q >= 0.0 else -n * resolution


def quantize(value, resolution: float):
    """Round to the nearest multiple of ``resolution``, ties away from zero.

    A resolution of 0 passes the value through unchanged.
    """
    if resolution == 0:
        return value
    if resolution < 0:
        raise DomainError("resolution must be >= 0")
    q = np.asarray(value, dtype=float) / resolution
    # np.round is half-to-even; this is half-away-from-zero
    n = np.sign(q) * np.floor(np.abs(q) + 0.5)
    out = n * resolution
    return float(out) if np.ndim(out) == 0 else out


def hold_indices(n_source: int, source_dt: float, target_dt: float) -> np.ndarray:
    """Index of the most recent source sample at each target instant."""
    n_target = int(math.floor((n_source - 1) * source_dt / target_dt + 1e-9)) + 1
    k = np.arange(n_target)
    # tiny bias keeps exact rational alignments from flooring one sample low
    idx = np.floor(k * (target_dt / source_dt) + 1e-9).astype(np.int64)
    return np.minimum(idx, n_source - 1)


def sample_hold(series: TimeSeries, target_rate: float) -> TimeSeries:
    """Zero-order-hold decimation to ``target_rate`` (no anti-alias filtering)."""
    if not target_rate > 0:
        raise ConfigError("target_rate must be > 0")
    if target_rate > series.rate * (1 + 1e-12):
        raise UpsampleRequested(
            f"target rate {target_rate} Hz exceeds source rate {series.rate} Hz"
        )
    target_dt = 1.0 / target_rate
    if len(series) == 0:
        return TimeSeries(target_dt, np.empty(0), series.start_time)
    idx = hold_indices(len(series), series.dt, target_dt)
    return TimeSeries(target_dt, series.samples[idx].copy(), series.start_time)
