import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from searetro.control import (
    ControllerGains, FeedbackSource, LoopConfig, check_control_rate, control_step,
    deflection_to_torque, min_control_rate, predicted_frequency_ratio,
)
from searetro.errors import ConfigError, DomainError
from searetro.plant import NonlinearitySwitches, PlantParams, PlantState, SpringParams, step
from searetro.rig import simulate_chirp, tick_steps
from searetro.signals import ChirpSpec, chirp

UNITY = ControllerGains()
finite = st.floats(-100, 100)


@pytest.mark.parametrize("r, y, u", [(1, 1, 1), (1, 0, 2), (0, 0.5, -0.5)])
def test_control_step_examples(r, y, u):
    assert control_step(r, y, UNITY) == u


def test_control_step_without_feedback():
    assert control_step(1.5, None, ControllerGains(2.0, 7.0)) == 3.0


@given(r1=finite, r2=finite, y1=finite, y2=finite, a=finite, b=finite,
       cff=st.floats(0, 3), kfb=st.floats(0, 3))
def test_control_step_linear(r1, r2, y1, y2, a, b, cff, kfb):
    g = ControllerGains(cff, kfb)
    lhs = control_step(a * r1 + b * r2, a * y1 + b * y2, g)
    rhs = a * control_step(r1, y1, g) + b * control_step(r2, y2, g)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


def test_gain_validation():
    with pytest.raises(ConfigError):
        ControllerGains(feedback_gain=-0.1)
    with pytest.raises(ConfigError):
        ControllerGains(derivative_gain=0.5)
    with pytest.raises(ConfigError):
        ControllerGains(feedforward_gain=float("inf"))
    with pytest.raises(ConfigError):
        LoopConfig(control_rate=0.0)
    assert LoopConfig(feedback_source="rigid_sensor").feedback_source is FeedbackSource.RIGID_SENSOR


@pytest.mark.parametrize("tau, rate", [(0.04178, 478.7), (1.0, 20.0), (0.1, 200.0)])
def test_min_control_rate(tau, rate):
    assert min_control_rate(tau) == pytest.approx(rate, abs=0.05)


def test_min_control_rate_domain_and_check():
    with pytest.raises(DomainError):
        min_control_rate(0.0)
    check_control_rate(603.0)
    with pytest.raises(ConfigError):
        check_control_rate(400.0)


def test_deflection_to_torque_examples():
    res = 1.109e-5
    se = SpringParams(2155.4)
    assert deflection_to_torque(res, se, res) == pytest.approx(0.02390, abs=5e-6)
    assert deflection_to_torque(0.0, se, res) == 0.0
    # a half-pulse tie rounds away from zero
    assert deflection_to_torque(0.5 * res, se, res) == pytest.approx(2155.4 * res)
    assert deflection_to_torque(-0.5 * res, se, res) == pytest.approx(-2155.4 * res)
    with pytest.raises(DomainError):
        deflection_to_torque(0.1, se, -1.0)


@pytest.mark.parametrize("kp, ratio", [(0.0, 1.0), (1.0, math.sqrt(2)), (3.0, 2.0)])
def test_predicted_frequency_ratio(kp, ratio):
    assert predicted_frequency_ratio(kp) == pytest.approx(ratio)


def test_predicted_frequency_ratio_domain():
    with pytest.raises(DomainError):
        predicted_frequency_ratio(-2.0)


# --- loop timing ---------------------------------------------------------------

def _run(feedback, gains=UNITY, switches=None, duration=0.5):
    params = PlantParams()
    return simulate_chirp(
        params, switches or NonlinearitySwitches(), ChirpSpec(2.0, 0.5, 20.0, duration),
        gains, feedback, control_rate=603.0, sensor_rate=1400.0, sensor_resolution=0.125,
        se_stiffness=2155.4, encoder_resolution=1.109e-5, dt=2e-5,
    )


def test_command_is_held_between_control_ticks():
    rec = _run(FeedbackSource.SEA_DEFLECTION)
    dt = 2e-5
    ctrl = tick_steps(0.5, 603.0, dt)
    sens = tick_steps(0.5, 1400.0, dt)
    # index of the latest control tick at or before each sensor sample
    latest = np.searchsorted(ctrl, sens, side="right") - 1
    for a in range(len(sens) - 1):
        if latest[a] == latest[a + 1]:
            assert rec.command[a] == rec.command[a + 1]


def test_open_loop_command_is_feedforward_of_held_reference():
    spec = ChirpSpec(2.0, 0.5, 20.0, 0.5)
    rec = _run(FeedbackSource.NONE, ControllerGains(1.5, 1.0))
    ctrl = tick_steps(0.5, 603.0, 2e-5)
    sens = tick_steps(0.5, 1400.0, 2e-5)
    latest = ctrl[np.searchsorted(ctrl, sens, side="right") - 1]
    np.testing.assert_allclose(rec.command, 1.5 * chirp(latest * 2e-5, spec), rtol=0, atol=1e-15)


def test_zero_feedback_gain_degenerates_to_open_loop():
    off = ControllerGains(1.0, 0.0)
    a = _run(FeedbackSource.NONE, off)
    b = _run(FeedbackSource.SEA_DEFLECTION, off)
    c = _run(FeedbackSource.RIGID_SENSOR, off)
    for name in ("command", "measured", "sea_torque", "rotor_velocity"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        np.testing.assert_array_equal(getattr(a, name), getattr(c, name))


def test_open_loop_rig_matches_stepping_the_plant():
    # plant driven directly by the held command must reproduce the rig record
    sw = NonlinearitySwitches.linear()
    rec = _run(FeedbackSource.NONE, switches=sw, duration=0.1)
    spec = ChirpSpec(2.0, 0.5, 20.0, 0.1)
    dt = 2e-5
    ctrl = tick_steps(0.1, 603.0, dt)
    sens = tick_steps(0.1, 1400.0, dt)
    params = PlantParams()
    s, cmd, ci, torques = PlantState(), 0.0, 0, {}
    for k in range(int(round(0.1 / dt)) + 1):
        if k in set(sens):
            torques[k] = 2155.4 * s.rotor_angle
        if ci < len(ctrl) and ctrl[ci] == k:
            cmd = float(chirp(k * dt, spec))
            ci += 1
        s = step(s, cmd, dt, params, sw)
    np.testing.assert_allclose(rec.measured, [torques[k] for k in sens], rtol=1e-12, atol=1e-15)
