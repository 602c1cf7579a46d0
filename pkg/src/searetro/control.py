"""Discrete feedforward + feedback torque controller and its timing rules."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

from numba import njit

from .errors import ConfigError, DomainError
from .plant import SpringParams
from .signals import quantize_scalar

DEFAULT_CONTROL_RATE = 603.0
SLOWEST_TIME_CONSTANT = 0.04178
# sampling must exceed this multiple of the inverse slowest time constant
RATE_FACTOR = 20.0


class FeedbackSource(str, enum.Enum):
    NONE = "none"
    SEA_DEFLECTION = "sea_deflection"
    RIGID_SENSOR = "rigid_sensor"


@dataclass(frozen=True)
class ControllerGains:
    feedforward_gain: float = 1.0
    feedback_gain: float = 1.0
    # reserved; the loop is proportional-only
    derivative_gain: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.feedforward_gain) and math.isfinite(self.feedback_gain)):
            raise ConfigError("controller gains must be finite")
        if self.feedback_gain < 0:
            raise ConfigError("feedback_gain must be >= 0")
        if self.derivative_gain != 0:
            raise ConfigError("derivative_gain is reserved and must be 0")


@dataclass(frozen=True)
class LoopConfig:
    control_rate: float = DEFAULT_CONTROL_RATE
    feedback_source: FeedbackSource = FeedbackSource.NONE

    def __post_init__(self):
        if not self.control_rate > 0:
            raise ConfigError("control_rate must be > 0")
        object.__setattr__(self, "feedback_source", FeedbackSource(self.feedback_source))


@njit(cache=True)
def control_law(reference, measured, cff, kfb):
    return cff * reference + kfb * (reference - measured)


def control_step(reference_torque: float, measured_torque: Optional[float],
                 gains: ControllerGains) -> float:
    """Command torque ``C_ff*r + C_fb*(r - y)``.

    ``measured_torque=None`` means no feedback path and yields ``C_ff*r``.
    """
    if measured_torque is None:
        return float(gains.feedforward_gain * reference_torque)
    return float(control_law(reference_torque, measured_torque,
                             gains.feedforward_gain, gains.feedback_gain))


def min_control_rate(slowest_time_constant: float) -> float:
    if not slowest_time_constant > 0:
        raise DomainError("time constant must be > 0")
    return RATE_FACTOR / slowest_time_constant


def check_control_rate(rate: float, slowest_time_constant: float = SLOWEST_TIME_CONSTANT):
    needed = min_control_rate(slowest_time_constant)
    if rate < needed:
        raise ConfigError(
            f"control rate {rate:g} Hz below the {needed:.1f} Hz minimum "
            f"for a {slowest_time_constant:g} s time constant"
        )


@njit(cache=True)
def encoder_torque(deflection, stiffness, angle_resolution):
    return stiffness * quantize_scalar(deflection, angle_resolution)


def deflection_to_torque(deflection: float, spring: SpringParams,
                         angle_resolution: float) -> float:
    """Torque inferred from an encoder reading of the spring deflection."""
    if angle_resolution < 0:
        raise DomainError("angle_resolution must be >= 0")
    return float(encoder_torque(deflection, spring.stiffness, angle_resolution))


def predicted_frequency_ratio(feedback_gain: float) -> float:
    """Closed-loop over open-loop natural frequency under proportional feedback."""
    if feedback_gain < -1:
        raise DomainError("feedback_gain must be >= -1")
    return math.sqrt(feedback_gain + 1.0)
