"""Frequency-response estimation and bandwidth extraction."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import signal as sps

from .errors import EmptyBode, FitFailed, InsufficientData, ZeroInputPower
from .signals import TimeSeries

MIN_SEGMENTS = 4
DEFAULT_DC_BINS = 3
# S_xx below this fraction of its whole-spectrum peak counts as no excitation
_POWER_FLOOR = 1e-12


class BandwidthMethod(str, enum.Enum):
    PHASE_RECOVERY = "phase_recovery"
    CLASSIC = "classic_minus3db_fallback"
    FULL_BAND = "full_band"


@dataclass
class BodePlot:
    frequencies: np.ndarray
    magnitude: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.magnitude = np.asarray(self.magnitude, dtype=float)
        self.phase = np.asarray(self.phase, dtype=float)
        n = len(self.frequencies)
        if len(self.magnitude) != n or len(self.phase) != n:
            raise ValueError("frequencies, magnitude and phase must have equal length")
        if n > 1 and np.any(np.diff(self.frequencies) <= 0):
            raise ValueError("frequencies must be strictly increasing")

    def __len__(self):
        return len(self.frequencies)

    @classmethod
    def from_complex(cls, frequencies, response) -> "BodePlot":
        response = np.asarray(response, dtype=complex)
        with np.errstate(divide="ignore"):
            mag = 20.0 * np.log10(np.abs(response))
        phase = np.degrees(np.unwrap(np.angle(response)))
        return cls(frequencies, mag, phase)

    def offset(self, magnitude_db: float = 0.0, phase_deg: float = 0.0) -> "BodePlot":
        return BodePlot(self.frequencies, self.magnitude + magnitude_db, self.phase + phase_deg)


@dataclass(frozen=True)
class BandwidthResult:
    bandwidth: float
    crossover: Optional[float]
    dc_gain: float
    method: BandwidthMethod

    def as_dict(self) -> dict:
        return {
            "bandwidth_hz": self.bandwidth,
            "crossover_hz": self.crossover,
            "dc_gain_db": self.dc_gain,
            "method": self.method.value,
        }


def estimate_frf(input: TimeSeries, output: TimeSeries, segment_length: Optional[int] = None,
                 overlap: float = 0.5, min_frequency: float = 0.0,
                 max_frequency: Optional[float] = None) -> BodePlot:
    """H1 estimate (cross spectrum over input auto spectrum), Hann-tapered Welch averaging.

    Bins outside ``[min_frequency, max_frequency]`` are dropped, so pass the
    sweep limits of the excitation.  ``segment_length`` defaults to a quarter
    of the record.
    """
    x = np.asarray(input.samples, dtype=float)
    y = np.asarray(output.samples, dtype=float)
    if len(x) != len(y) or not np.isclose(input.dt, output.dt, rtol=1e-12, atol=0):
        raise ValueError("input and output need equal dt and length")
    n = len(x)
    if segment_length is None:
        segment_length = n // 4
    if not 0 <= overlap < 1:
        raise ValueError("overlap must be in [0, 1)")
    if segment_length < 2 or segment_length > n:
        raise InsufficientData(f"segment_length {segment_length} invalid for {n} samples")
    noverlap = int(overlap * segment_length)
    n_segments = (n - noverlap) // (segment_length - noverlap)
    if n_segments < MIN_SEGMENTS:
        raise InsufficientData(f"only {n_segments} segments; need {MIN_SEGMENTS}")

    fs = 1.0 / input.dt
    kw = dict(fs=fs, window="hann", nperseg=segment_length, noverlap=noverlap,
              detrend="constant")
    f, sxx = sps.welch(x, **kw)
    _, sxy = sps.csd(x, y, **kw)

    hi = f[-1] if max_frequency is None else max_frequency
    keep = (f >= min_frequency) & (f <= hi) & (f > 0)
    peak = np.max(sxx[f > 0]) if np.any(f > 0) else 0.0
    f, sxx, sxy = f[keep], sxx[keep], sxy[keep]
    if len(f) == 0:
        raise InsufficientData("no frequency bins inside the excited band")
    if not np.all(np.isfinite(sxx)) or np.any(sxx <= _POWER_FLOOR * peak):
        raise ZeroInputPower("input auto-spectrum vanishes inside the retained band")
    return BodePlot.from_complex(f, sxy / sxx)


def dc_gain(bode: BodePlot, n_bins: int = DEFAULT_DC_BINS) -> float:
    if not 1 <= n_bins <= len(bode):
        raise ValueError(f"n_bins must be in [1, {len(bode)}]")
    return float(np.mean(bode.magnitude[:n_bins]))


def _in_band(bode: BodePlot, dc: float) -> np.ndarray:
    return bode.magnitude >= dc - 3.0


def classic_bandwidth(bode: BodePlot, n_dc_bins: int = DEFAULT_DC_BINS) -> float:
    """Last frequency before the magnitude first falls 3 dB under the DC gain."""
    if len(bode) == 0:
        raise EmptyBode("empty Bode plot")
    inband = _in_band(bode, dc_gain(bode, min(n_dc_bins, len(bode))))
    out = np.flatnonzero(~inband)
    if len(out) == 0:
        return float(bode.frequencies[-1])
    return float(bode.frequencies[max(out[0] - 1, 0)])


def bandwidth(bode: BodePlot, n_dc_bins: int = DEFAULT_DC_BINS) -> BandwidthResult:
    """Bandwidth that tolerates a temporary magnitude dip if the phase recovers.

    The phase is split at its global minimum.  The crossover is the first
    frequency after the minimum where the phase climbs above the highest phase
    seen up to the minimum; the bandwidth is then the highest in-band frequency
    not above the crossover.  Without such a recovery the classic first -3 dB
    crossing is returned, or the top of the grid when the magnitude never
    leaves the band.
    """
    if len(bode) == 0:
        raise EmptyBode("empty Bode plot")
    freqs, phase = bode.frequencies, bode.phase
    dc = dc_gain(bode, min(n_dc_bins, len(bode)))
    inband = _in_band(bode, dc)

    i_min = int(np.argmin(phase))
    phase_1_max = np.max(phase[: i_min + 1])
    after = np.flatnonzero(phase[i_min:] > phase_1_max)
    if len(after):
        crossover = float(freqs[i_min + after[0]])
        candidates = freqs[inband & (freqs <= crossover)]
        if len(candidates):
            return BandwidthResult(float(candidates.max()), crossover, dc,
                                   BandwidthMethod.PHASE_RECOVERY)

    if np.all(inband):
        return BandwidthResult(float(freqs[-1]), None, dc, BandwidthMethod.FULL_BAND)
    return BandwidthResult(classic_bandwidth(bode, n_dc_bins), None, dc,
                           BandwidthMethod.CLASSIC)


def estimate_time_constant(step_response: TimeSeries, final_value: float,
                           start_value: float = 0.0):
    """Dominant first-order time constant of a step response.

    Fits ``log(final - y)`` against time over the 10-90 % part of the rise.
    Returns ``(tau, rms_residual)`` with the residual in log units.
    """
    y = np.asarray(step_response.samples, dtype=float)
    t = step_response.times
    span = final_value - start_value
    if span == 0:
        raise FitFailed("final_value equals start_value")
    frac = (y - start_value) / span
    if not np.any(frac >= 1.0 - np.exp(-1.0)):
        raise FitFailed("response never reaches 63% of the final value")
    mask = (frac >= 0.1) & (frac <= 0.9)
    if np.count_nonzero(mask) < 3:
        raise FitFailed("too few samples inside the 10-90% rise")
    z = np.log(1.0 - frac[mask])
    slope, intercept = np.polyfit(t[mask], z, 1)
    if not slope < 0:
        raise FitFailed("response does not converge toward final_value")
    resid = z - (slope * t[mask] + intercept)
    return -1.0 / slope, float(np.sqrt(np.mean(resid**2)))
