"""Fixed-load actuator rig: motor -> geartrain with backlash -> series spring -> ground.

All rigid-body state is expressed on the output side of the gear-train.  The
rotor inertia is reflected as ``J * N**2`` and rotor-side friction is scaled by
``N`` (torques) and ``N**2`` (viscous) before entering the equation of motion.

The inner per-step arithmetic lives in small ``numba`` kernels so that the
public scalar functions and the long chirp simulations in
:mod:`searetro.experiments` execute exactly the same code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from numba import njit

from .errors import ConfigError, DomainError, NumericalDivergence, SpringOverload

DEG = math.pi / 180.0

# defaults for the RMD X8 V2 gear motor (measured values where available)
RMD_X8_BACKLASH = 0.3336 * DEG
RMD_X8_ADVERTISED_BACKLASH = 0.0833 * DEG
SE_STIFFNESS = 2155.4
SENSOR_STIFFNESS = 16400.0
SENSOR_TORQUE_LIMIT = 82.0
ENCODER_RESOLUTION = 1.109e-5

DEFAULT_DT = 2e-5
# integrator step must resolve the stiffest mode by this factor
DT_MARGIN = 20.0


@dataclass(frozen=True)
class MotorParams:
    """Motor, driver and gear-train description.

    ``torque_constant``, ``rotor_inertia`` and the friction terms are rotor-side
    quantities. ``stall_torque``, ``no_load_speed`` and ``backlash_total`` are
    given at the output.  ``no_load_speed=None`` derives it from the supply
    voltage and torque constant (back-EMF limit referred through the gears).
    """

    torque_constant: float = 1.393
    rotor_inertia: float = 0.00026
    gear_ratio: float = 9.0
    electrical_time_constant: float = 0.42e-4
    stall_torque: float = 9.0
    no_load_speed: Optional[float] = None
    # sets the 603 Hz unity-feedforward loop's stability limit near Kp = 1.4
    viscous_damping: float = 0.028
    coulomb_friction: float = 0.02
    static_friction: float = 0.044
    stiction_velocity_threshold: float = 1e-3
    backlash_total: float = RMD_X8_BACKLASH
    current_limit: float = 6.0
    supply_voltage: float = 12.0

    def __post_init__(self):
        for name in (
            "torque_constant", "rotor_inertia", "electrical_time_constant",
            "stall_torque", "viscous_damping", "coulomb_friction",
            "static_friction", "stiction_velocity_threshold", "backlash_total",
            "current_limit", "supply_voltage",
        ):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be finite and >= 0, got {value}")
        if not self.gear_ratio >= 1:
            raise ConfigError("gear_ratio must be >= 1")
        if self.static_friction < self.coulomb_friction:
            raise ConfigError("static_friction must be >= coulomb_friction")
        if self.no_load_speed is not None and not self.no_load_speed > 0:
            raise ConfigError("no_load_speed must be > 0")

    @property
    def output_no_load_speed(self) -> float:
        if self.no_load_speed is not None:
            return self.no_load_speed
        return self.supply_voltage / (self.torque_constant * self.gear_ratio)

    @property
    def reflected_inertia(self) -> float:
        return self.rotor_inertia * self.gear_ratio**2

    @property
    def current_torque_limit(self) -> float:
        """Output torque reachable at the driver current limit."""
        return self.torque_constant * self.current_limit * self.gear_ratio


@dataclass(frozen=True)
class SpringParams:
    stiffness: float = SE_STIFFNESS
    torque_limit: Optional[float] = None

    def __post_init__(self):
        if not self.stiffness > 0:
            raise ConfigError("spring stiffness must be > 0")
        if self.torque_limit is not None and not self.torque_limit > 0:
            raise ConfigError("spring torque_limit must be > 0 when set")

    def in_series(self, other: "SpringParams") -> "SpringParams":
        """Equivalent spring of two massless springs carrying the same torque."""
        k = 1.0 / (1.0 / self.stiffness + 1.0 / other.stiffness)
        limits = [s.torque_limit for s in (self, other) if s.torque_limit is not None]
        return SpringParams(k, min(limits) if limits else None)


@dataclass(frozen=True)
class SensorParams:
    torque_resolution: float = 0.125
    sample_rate: float = 1400.0
    range: float = 10.0
    series_stiffness: Optional[float] = SENSOR_STIFFNESS
    angle_resolution: float = ENCODER_RESOLUTION

    def __post_init__(self):
        if not (self.torque_resolution > 0 and self.angle_resolution > 0):
            raise ConfigError("sensor resolutions must be > 0")
        if not self.sample_rate > 0:
            raise ConfigError("sensor sample_rate must be > 0")


@dataclass(frozen=True)
class NonlinearitySwitches:
    backlash_enabled: bool = True
    stiction_enabled: bool = True
    saturation_enabled: bool = True
    quantization_enabled: bool = True

    @classmethod
    def linear(cls) -> "NonlinearitySwitches":
        return cls(False, False, False, False)


@dataclass
class PlantState:
    """Integrator state.  Angles and velocity are output-referred."""

    rotor_angle: float = 0.0
    rotor_velocity: float = 0.0
    gear_offset: float = 0.0
    lagged_torque: float = 0.0
    time: float = 0.0


@dataclass(frozen=True)
class PlantParams:
    motor: MotorParams = field(default_factory=MotorParams)
    spring: SpringParams = field(default_factory=SpringParams)

    def natural_frequency(self) -> float:
        return natural_frequency(self.motor.reflected_inertia, self.spring.stiffness)

    def max_dt(self) -> float:
        return 1.0 / (DT_MARGIN * self.natural_frequency())

    def validate_dt(self, dt: float) -> None:
        if not dt > 0:
            raise ConfigError("dt must be > 0")
        if dt > self.max_dt() * (1 + 1e-12):
            raise ConfigError(
                f"dt={dt:g} s too coarse: need <= {self.max_dt():.3g} s for a "
                f"{self.natural_frequency():.1f} Hz mode"
            )

    def with_spring(self, spring: SpringParams) -> "PlantParams":
        return replace(self, spring=spring)


# --- shared numeric kernels -------------------------------------------------

@njit(cache=True)
def _envelope(cmd, vel, f_sat, v_sat, t_cur):
    avail = f_sat * (1.0 - abs(vel) / v_sat)
    if avail < 0.0:
        avail = 0.0
    if t_cur < avail:
        avail = t_cur
    mag = abs(cmd)
    if mag > avail:
        mag = avail
    if cmd > 0.0:
        return mag
    if cmd < 0.0:
        return -mag
    return 0.0


@njit(cache=True)
def _is_stuck(applied, vel, f_static, v_thr):
    return abs(vel) < v_thr and abs(applied) <= f_static


@njit(cache=True)
def _friction_net(applied, vel, b, f_coulomb, f_static, v_thr, stiction):
    if not stiction:
        return applied - b * vel
    if _is_stuck(applied, vel, f_static, v_thr):
        return 0.0
    # inside the velocity band the motion direction is set by the applied torque
    if abs(vel) >= v_thr:
        direction = 1.0 if vel > 0.0 else -1.0
    else:
        direction = 1.0 if applied > 0.0 else (-1.0 if applied < 0.0 else 0.0)
    return applied - f_coulomb * direction - b * vel


@njit(cache=True)
def _deadzone_offset(x, half):
    # spring-loaded output sits on whichever flank keeps the spring least loaded
    if x > half:
        return half
    if x < -half:
        return -half
    return x


# packed parameter vector layout for the kernels
P_J, P_TAU, P_FSAT, P_VSAT, P_TCUR, P_B, P_FC, P_FS, P_VTHR, P_HALF, P_K, P_LIM, \
    P_BACKLASH, P_STICTION, P_SAT = range(15)


def pack(params: PlantParams, switches: NonlinearitySwitches) -> np.ndarray:
    """Flatten parameters into the output-referred vector the kernels read."""
    m, s = params.motor, params.spring
    n = m.gear_ratio
    return np.array([
        m.reflected_inertia,
        m.electrical_time_constant,
        m.stall_torque,
        m.output_no_load_speed,
        m.current_torque_limit,
        m.viscous_damping * n * n,
        m.coulomb_friction * n,
        m.static_friction * n,
        m.stiction_velocity_threshold / n,
        0.5 * m.backlash_total,
        s.stiffness,
        s.torque_limit if s.torque_limit is not None else np.inf,
        float(switches.backlash_enabled),
        float(switches.stiction_enabled),
        float(switches.saturation_enabled),
    ])


# status codes returned by _advance
OK, DIVERGED, OVERLOAD = 0, 1, 2


@njit(cache=True)
def _advance(x, v, lag, cmd, dt, p):
    """One semi-implicit Euler step.  Returns (x, v, offset, lag, spring_torque, status)."""
    tau_e = p[P_TAU]
    if tau_e > 0.0:
        lag = lag + (1.0 - math.exp(-dt / tau_e)) * (cmd - lag)
    else:
        lag = cmd
    if p[P_SAT] != 0.0:
        tau = _envelope(lag, v, p[P_FSAT], p[P_VSAT], p[P_TCUR])
    else:
        tau = lag

    offset = _deadzone_offset(x, p[P_HALF]) if p[P_BACKLASH] != 0.0 else 0.0
    ks = p[P_K] * (x - offset)
    applied = tau - ks

    stiction = p[P_STICTION] != 0.0
    j = p[P_J]
    if stiction and _is_stuck(applied, v, p[P_FS], p[P_VTHR]):
        v_new = 0.0
    else:
        net = _friction_net(applied, v, p[P_B], p[P_FC], p[P_FS], p[P_VTHR], stiction)
        v_new = v + dt * net / j
        # a velocity reversal under sub-breakaway torque ends in sticking
        if stiction and v * v_new < 0.0 and abs(applied) <= p[P_FS]:
            v_new = 0.0
    x_new = x + dt * v_new

    offset = _deadzone_offset(x_new, p[P_HALF]) if p[P_BACKLASH] != 0.0 else 0.0
    ks = p[P_K] * (x_new - offset)
    status = OK
    if not (math.isfinite(x_new) and math.isfinite(v_new) and math.isfinite(lag)
            and math.isfinite(ks)):
        status = DIVERGED
    elif abs(ks) >= p[P_LIM]:
        status = OVERLOAD
    return x_new, v_new, offset, lag, ks, status


# --- public operations ------------------------------------------------------

def torque_speed_envelope(commanded_torque: float, output_velocity: float,
                          motor: MotorParams) -> float:
    """Torque deliverable at ``output_velocity`` under the linear speed-torque limit.

    Available torque falls linearly from the stall torque at rest to zero at
    the no-load speed and is further capped by the driver current limit.
    """
    return float(_envelope(commanded_torque, output_velocity, motor.stall_torque,
                           motor.output_no_load_speed, motor.current_torque_limit))


def backlash_transmission(input_displacement: float, prior_gear_offset: float,
                          backlash_total: float):
    """Kinematic play element.

    ``input_displacement`` is the motion of the driving side since the last
    call; ``prior_gear_offset`` is input minus output position, bounded by half
    the total play.  Returns ``(output_displacement, new_gear_offset, engaged)``.
    """
    if backlash_total < 0:
        raise ConfigError("backlash_total must be >= 0")
    half = 0.5 * backlash_total
    if abs(prior_gear_offset) > half * (1 + 1e-12) + 1e-15:
        raise DomainError("prior_gear_offset outside the backlash band")
    if half == 0:
        return input_displacement, 0.0, True
    raw = prior_gear_offset + input_displacement
    new_offset = min(max(raw, -half), half)
    output_displacement = raw - new_offset
    engaged = abs(new_offset) == half
    return output_displacement, new_offset, engaged


def friction_torque(applied_torque: float, velocity: float, motor: MotorParams,
                    stiction_enabled: bool = True) -> float:
    """Net rotor-side torque after Karnopp stick-slip and viscous friction.

    Without stiction only the viscous term acts.
    """
    if stiction_enabled and not motor.stiction_velocity_threshold > 0:
        raise ConfigError("stiction_velocity_threshold must be > 0 with stiction enabled")
    return float(_friction_net(applied_torque, velocity, motor.viscous_damping,
                               motor.coulomb_friction, motor.static_friction,
                               motor.stiction_velocity_threshold, stiction_enabled))


def spring_torque(deflection: float, spring: SpringParams) -> float:
    torque = spring.stiffness * deflection
    if spring.torque_limit is not None and abs(torque) >= spring.torque_limit:
        raise SpringOverload(
            f"SpringOverload: {torque:.3f} Nm exceeds limit {spring.torque_limit} Nm"
        )
    return torque


def natural_frequency(reflected_inertia: float, stiffness: float) -> float:
    if not (reflected_inertia > 0 and stiffness > 0):
        raise DomainError("inertia and stiffness must both be > 0")
    return math.sqrt(stiffness / reflected_inertia) / (2.0 * math.pi)


def spring_deflection(state: PlantState) -> float:
    return state.rotor_angle - state.gear_offset


def step(state: PlantState, command_torque: float, dt: float, params: PlantParams,
         switches: NonlinearitySwitches, packed: Optional[np.ndarray] = None) -> PlantState:
    """Advance the rig by ``dt``.

    ``packed`` may carry a precomputed :func:`pack` vector for tight loops.
    Raises :class:`NumericalDivergence` on non-finite state and
    :class:`SpringOverload` when the spring limit is exceeded.
    """
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    p = pack(params, switches) if packed is None else packed
    x, v, offset, lag, ks, status = _advance(
        state.rotor_angle, state.rotor_velocity, state.lagged_torque,
        float(command_torque), float(dt), p,
    )
    if status == DIVERGED:
        raise NumericalDivergence(
            f"NumericalDivergence at t={state.time + dt:.6g} s; reduce dt"
        )
    if status == OVERLOAD:
        raise SpringOverload(
            f"SpringOverload: {ks:.3f} Nm exceeds limit {params.spring.torque_limit} Nm"
        )
    return PlantState(x, v, offset, lag, state.time + dt)


def energy(state: PlantState, params: PlantParams) -> float:
    """Kinetic plus spring potential energy (J)."""
    d = spring_deflection(state)
    return (0.5 * params.motor.reflected_inertia * state.rotor_velocity**2
            + 0.5 * params.spring.stiffness * d * d)


@njit(cache=True)
def _integrate(x, v, lag, cmd, dt, n_steps, p):
    angle = np.empty(n_steps + 1)
    vel = np.empty(n_steps + 1)
    torque = np.empty(n_steps + 1)
    offset = _deadzone_offset(x, p[P_HALF]) if p[P_BACKLASH] != 0.0 else 0.0
    angle[0], vel[0], torque[0] = x, v, p[P_K] * (x - offset)
    for i in range(n_steps):
        x, v, offset, lag, ks, status = _advance(x, v, lag, cmd, dt, p)
        angle[i + 1], vel[i + 1], torque[i + 1] = x, v, ks
        if status != OK:
            return status, i + 1, angle, vel, torque
    return OK, n_steps, angle, vel, torque


def integrate(state: PlantState, command_torque: float, dt: float, n_steps: int,
              params: PlantParams, switches: NonlinearitySwitches):
    """Hold ``command_torque`` for ``n_steps`` steps from ``state``.

    Same arithmetic as repeated :func:`step` calls.  Returns arrays of rotor
    angle, rotor velocity and spring torque with ``n_steps + 1`` samples,
    the initial state included.
    """
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    status, k, angle, vel, torque = _integrate(
        state.rotor_angle, state.rotor_velocity, state.lagged_torque, float(command_torque),
        float(dt), int(n_steps), pack(params, switches),
    )
    if status == DIVERGED:
        raise NumericalDivergence(f"NumericalDivergence at t={state.time + k * dt:.6g} s; reduce dt")
    if status == OVERLOAD:
        raise SpringOverload(
            f"SpringOverload at t={state.time + k * dt:.6g} s: limit "
            f"{params.spring.torque_limit} Nm exceeded"
        )
    return angle, vel, torque
