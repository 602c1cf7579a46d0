"""Closed simulation loop: controller ticks, plant integration and sensor sampling.

Three clocks run off the plant step: the controller at ``control_rate`` with a
zero-order hold on its output, the force sensor at its own sample rate with a
zero-order hold, and the integrator itself.  The controller reads the spring
encoder directly at each tick, or the most recent held force-sensor sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .control import ControllerGains, FeedbackSource, control_law, encoder_torque
from .errors import NumericalDivergence, SpringOverload
from .plant import DIVERGED, OK, OVERLOAD, NonlinearitySwitches, PlantParams, _advance, pack
from .signals import ChirpSpec, TimeSeries, chirp, quantize_scalar

_MODE = {FeedbackSource.NONE: 0, FeedbackSource.SEA_DEFLECTION: 1,
         FeedbackSource.RIGID_SENSOR: 2}


@dataclass
class RigRecord:
    """Sensor-rate record of one run.  All torques in Nm."""

    dt: float
    reference: np.ndarray
    command: np.ndarray
    measured: np.ndarray
    sea_torque: np.ndarray
    rotor_velocity: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.reference))

    def series(self, name: str) -> TimeSeries:
        return TimeSeries(self.dt, getattr(self, name))


def tick_steps(duration: float, rate: float, dt: float) -> np.ndarray:
    """Plant step index holding each tick of a clock running at ``rate``."""
    n = int(math.floor(duration * rate + 1e-9)) + 1
    return np.floor(np.arange(n) * (1.0 / (rate * dt)) + 1e-9).astype(np.int64)


@njit(cache=True)
def _run(p, n_steps, dt, ctrl_steps, ctrl_ref, sens_steps, mode, cff, kfb, cmd_limit,
         se_stiffness, enc_res, sensor_res, sensor_range, sensor_noise, sea_noise):
    n_s = len(sens_steps)
    n_c = len(ctrl_steps)
    out_cmd = np.zeros(n_s)
    out_meas = np.zeros(n_s)
    out_sea = np.zeros(n_s)
    out_vel = np.zeros(n_s)
    x = 0.0
    v = 0.0
    lag = 0.0
    ks = 0.0
    cmd = 0.0
    held = 0.0
    si = 0
    ci = 0
    for s in range(n_steps + 1):
        while si < n_s and sens_steps[si] == s:
            held = quantize_scalar(ks, sensor_res) + sensor_noise[si]
            # transducer output saturates at its rated range
            if held > sensor_range:
                held = sensor_range
            elif held < -sensor_range:
                held = -sensor_range
            out_meas[si] = held
            out_sea[si] = encoder_torque(ks / se_stiffness, se_stiffness, enc_res) + sea_noise[si]
            out_vel[si] = v
            si += 1
        if ci < n_c and ctrl_steps[ci] == s:
            r = ctrl_ref[ci]
            if mode == 0:
                u = cff * r
            elif mode == 1:
                # encoder read at the tick; noise index follows the sensor clock
                noise = sea_noise[si - 1] if si > 0 else 0.0
                y = encoder_torque(ks / se_stiffness, se_stiffness, enc_res) + noise
                u = control_law(r, y, cff, kfb)
            else:
                u = control_law(r, held, cff, kfb)
            if u > cmd_limit:
                u = cmd_limit
            elif u < -cmd_limit:
                u = -cmd_limit
            cmd = u
            ci += 1
        if si > 0 and sens_steps[si - 1] == s:
            out_cmd[si - 1] = cmd
        if s == n_steps:
            break
        x, v, offset, lag, ks, status = _advance(x, v, lag, cmd, dt, p)
        if status != OK:
            return status, s, out_cmd, out_meas, out_sea, out_vel
    return OK, n_steps, out_cmd, out_meas, out_sea, out_vel


def simulate_chirp(params: PlantParams, switches: NonlinearitySwitches, spec: ChirpSpec,
                   gains: ControllerGains, feedback: FeedbackSource, control_rate: float,
                   sensor_rate: float, sensor_resolution: float, se_stiffness: float,
                   encoder_resolution: float, dt: float,
                   rng: Optional[np.random.Generator] = None,
                   noise_std: float = 0.0, sensor_range: float = math.inf) -> RigRecord:
    """Drive the rig with a chirp reference and record at the sensor rate.

    Raises :class:`SpringOverload` or :class:`NumericalDivergence` with the
    failure time in the message.
    """
    params.validate_dt(dt)
    n_steps = int(round(spec.duration / dt))
    duration = n_steps * dt
    ctrl_steps = tick_steps(duration, control_rate, dt)
    sens_steps = tick_steps(duration, sensor_rate, dt)
    ctrl_ref = chirp(np.minimum(ctrl_steps * dt, spec.duration), spec)
    ref = chirp(np.minimum(sens_steps * dt, spec.duration), spec)

    q_on = switches.quantization_enabled
    n_s = len(sens_steps)
    if noise_std > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        sensor_noise = rng.normal(0.0, noise_std, n_s)
        sea_noise = rng.normal(0.0, noise_std, n_s)
    else:
        sensor_noise = np.zeros(n_s)
        sea_noise = np.zeros(n_s)

    mode = _MODE[FeedbackSource(feedback)]
    kfb = gains.feedback_gain if mode else 0.0
    status, s, cmd, meas, sea, vel = _run(
        pack(params, switches), n_steps, dt, ctrl_steps, np.asarray(ctrl_ref, dtype=float),
        sens_steps, mode, gains.feedforward_gain, kfb, params.motor.current_torque_limit,
        se_stiffness, encoder_resolution if q_on else 0.0,
        sensor_resolution if q_on else 0.0, sensor_range, sensor_noise, sea_noise,
    )
    if status == OVERLOAD:
        raise SpringOverload(
            f"SpringOverload at t={s * dt:.4f} s: spring torque exceeded "
            f"{params.spring.torque_limit} Nm (amplitude {spec.amplitude} Nm)"
        )
    if status == DIVERGED:
        raise NumericalDivergence(f"NumericalDivergence at t={s * dt:.4f} s; reduce dt")
    return RigRecord(1.0 / sensor_rate, np.asarray(ref, dtype=float), cmd, meas, sea, vel)
