"""Test-rig configurations, torque-amplitude sweeps and derived statistics."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .control import (
    SLOWEST_TIME_CONSTANT, ControllerGains, FeedbackSource, LoopConfig, check_control_rate,
)
from .errors import (
    ConfigError, DomainError, EmptyCurve, InsufficientPoints, NumericalDivergence, SeaError,
    SpringOverload,
)
from .plant import (
    DEFAULT_DT, SENSOR_TORQUE_LIMIT, MotorParams, NonlinearitySwitches, PlantParams,
    SensorParams, SpringParams, backlash_transmission,
)
from .rig import RigRecord, simulate_chirp
from .signals import ChirpSpec, instantaneous_frequency
from .sysid import BandwidthResult, BodePlot, bandwidth, estimate_frf

DEFAULT_AMPLITUDES = tuple(round(0.25 * i, 2) for i in range(1, 25))
# bins this far under the DC gain carry no transmitted torque
EXTINCTION_DB = 20.0

# hardware summary rows kept for side-by-side reporting only
HARDWARE_REFERENCE = {
    "original_motor": dict(b_avg=5.122, b_min=0.420, b_max=10.32, t_at_bmax=1.00),
    "passive_sea": dict(b_avg=4.780, b_min=1.175, b_max=8.125, t_at_bmax=5.00),
    "closed_loop_sea": dict(b_avg=15.86, b_min=1.100, b_max=30.32, t_at_bmax=1.25),
    "closed_loop_rigid_sensor": dict(b_avg=22.43, b_min=15.60, b_max=28.17, t_at_bmax=1.50),
}


class Configuration(str, enum.Enum):
    ORIGINAL_MOTOR = "original_motor"
    PASSIVE_SEA = "passive_sea"
    CLOSED_LOOP_SEA = "closed_loop_sea"
    CLOSED_LOOP_RIGID_SENSOR = "closed_loop_rigid_sensor"

    @property
    def feedback(self) -> FeedbackSource:
        return {
            Configuration.ORIGINAL_MOTOR: FeedbackSource.NONE,
            Configuration.PASSIVE_SEA: FeedbackSource.NONE,
            Configuration.CLOSED_LOOP_SEA: FeedbackSource.SEA_DEFLECTION,
            Configuration.CLOSED_LOOP_RIGID_SENSOR: FeedbackSource.RIGID_SENSOR,
        }[self]

    @property
    def has_se_spring(self) -> bool:
        return self is not Configuration.ORIGINAL_MOTOR


class RunStatus(str, enum.Enum):
    OK = "ok"
    NO_MOTION = "no_motion"
    OVERLOAD = "overload"
    DIVERGED = "diverged"


class NoMotion(SeaError):
    """The measured torque never left zero (stiction held the rotor)."""


@dataclass(frozen=True)
class ExperimentConfig:
    configuration: Configuration = Configuration.PASSIVE_SEA
    torque_amplitudes: Tuple[float, ...] = DEFAULT_AMPLITUDES
    chirp: ChirpSpec = field(default_factory=lambda: ChirpSpec(1.0))
    trials_per_amplitude: int = 1
    motor: MotorParams = field(default_factory=MotorParams)
    se_spring: SpringParams = field(default_factory=SpringParams)
    sensor: SensorParams = field(default_factory=SensorParams)
    switches: NonlinearitySwitches = field(default_factory=NonlinearitySwitches)
    loop: LoopConfig = field(default_factory=LoopConfig)
    gains: ControllerGains = field(default_factory=ControllerGains)
    random_seed: int = 0
    dt: float = DEFAULT_DT
    noise_std: float = 0.0
    segment_fraction: float = 0.25
    n_dc_bins: int = 3
    extinction_db: float = EXTINCTION_DB
    slowest_time_constant: float = SLOWEST_TIME_CONSTANT

    def __post_init__(self):
        object.__setattr__(self, "configuration", Configuration(self.configuration))
        amps = tuple(float(a) for a in self.torque_amplitudes)
        object.__setattr__(self, "torque_amplitudes", amps)
        if not amps or any(a <= 0 for a in amps) or any(b <= a for a, b in zip(amps, amps[1:])):
            raise ConfigError("torque_amplitudes must be positive and strictly ascending")
        if self.trials_per_amplitude < 1:
            raise ConfigError("trials_per_amplitude must be >= 1")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if not 0 < self.segment_fraction <= 0.4:
            raise ConfigError("segment_fraction must be in (0, 0.4]")
        check_control_rate(self.loop.control_rate, self.slowest_time_constant)
        self.plant().validate_dt(self.dt)

    def sensor_spring(self) -> SpringParams:
        return SpringParams(self.sensor.series_stiffness, SENSOR_TORQUE_LIMIT)

    def spring_chain(self) -> SpringParams:
        """Spring between gear output and ground for this configuration."""
        if self.configuration.has_se_spring:
            return self.se_spring.in_series(self.sensor_spring())
        return self.sensor_spring()

    def plant(self) -> PlantParams:
        return PlantParams(self.motor, self.spring_chain())

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class SweepRecord:
    """One trial.  ``bandwidth`` is NaN for overload/divergence and 0 for no motion."""

    amplitude: float
    trial: int
    bandwidth: float
    method: str
    status: RunStatus


@dataclass
class SweepCurve:
    configuration: Configuration
    records: List[SweepRecord]

    def ok(self) -> List[SweepRecord]:
        return [r for r in self.records if r.status is RunStatus.OK]

    def amplitudes(self) -> List[float]:
        return sorted({r.amplitude for r in self.records})

    def per_amplitude(self):
        """``(amplitude, [bandwidths of ok trials])`` in ascending amplitude."""
        out = []
        for a in self.amplitudes():
            out.append((a, [r.bandwidth for r in self.ok() if r.amplitude == a]))
        return out

    def max_bandwidth(self) -> float:
        ok = self.ok()
        return max(r.bandwidth for r in ok) if ok else 0.0


@dataclass(frozen=True)
class SummaryStats:
    b_avg: float
    b_min: float
    b_max: float
    t_at_bmax: float


# --- single runs -------------------------------------------------------------

def trial_rng(config: ExperimentConfig, amplitude_index: int, trial: int):
    """Generator owned by one (amplitude, trial) run, independent of execution order."""
    return np.random.default_rng([config.random_seed, amplitude_index, trial])


def _precheck(config: ExperimentConfig, amplitude: float):
    limit = config.spring_chain().torque_limit
    if limit is not None and amplitude >= limit:
        raise SpringOverload(
            f"SpringOverload: amplitude {amplitude} Nm exceeds spring limit {limit} Nm"
        )
    if amplitude > config.motor.current_torque_limit:
        raise ConfigError(
            f"amplitude {amplitude} Nm exceeds the current-limited torque "
            f"{config.motor.current_torque_limit:.2f} Nm"
        )


def simulate_configuration(config: ExperimentConfig, amplitude: float,
                           rng: Optional[np.random.Generator] = None) -> RigRecord:
    """Run one chirp trial and return the sensor-rate record."""
    _precheck(config, amplitude)
    return simulate_chirp(
        config.plant(), config.switches, config.chirp.with_amplitude(amplitude), config.gains,
        config.configuration.feedback, config.loop.control_rate, config.sensor.sample_rate,
        config.sensor.torque_resolution, config.se_spring.stiffness,
        config.sensor.angle_resolution, config.dt, rng=rng, noise_std=config.noise_std,
        sensor_range=config.sensor.range,
    )


def analysis_band(config: ExperimentConfig) -> Tuple[float, float]:
    """Frequencies the sweep excites while some Welch segment weights it by >= 1/2."""
    spec = config.chirp
    edge = 0.25 * config.segment_fraction * spec.duration
    return (instantaneous_frequency(edge, spec),
            instantaneous_frequency(spec.duration - edge, spec))


def truncate_at_extinction(bode: BodePlot, n_dc_bins: int = 3,
                           extinction_db: float = EXTINCTION_DB) -> BodePlot:
    """Drop bins from the first one where the response falls ``extinction_db`` under DC.

    Past that point the output carries no transmitted torque and its phase is
    numerical noise.
    """
    dc = float(np.mean(bode.magnitude[:n_dc_bins]))
    dead = np.flatnonzero(~(bode.magnitude >= dc - extinction_db))
    if len(dead) == 0:
        return bode
    end = max(dead[0], n_dc_bins)
    return BodePlot(bode.frequencies[:end], bode.magnitude[:end], bode.phase[:end])


def analyse_record(config: ExperimentConfig, record: RigRecord) -> Tuple[BodePlot, BandwidthResult]:
    if not np.any(record.measured != record.measured[0]):
        raise NoMotion("measured torque is constant; the rotor never broke away")
    lo, hi = analysis_band(config)
    n = len(record.reference)
    bode = estimate_frf(record.series("reference"), record.series("measured"),
                        segment_length=int(config.segment_fraction * n), overlap=0.5,
                        min_frequency=lo, max_frequency=hi)
    bode = truncate_at_extinction(bode, config.n_dc_bins, config.extinction_db)
    return bode, bandwidth(bode, config.n_dc_bins)


def run_configuration(config: ExperimentConfig, amplitude: float,
                      rng: Optional[np.random.Generator] = None) -> Tuple[BodePlot, BandwidthResult]:
    """Simulate one chirp at ``amplitude`` and extract its bandwidth.

    Raises :class:`SpringOverload`, :class:`NumericalDivergence` or
    :class:`NoMotion`.
    """
    record = simulate_configuration(config, amplitude, rng)
    return analyse_record(config, record)


# --- sweeps ------------------------------------------------------------------

def _sweep_job(args) -> SweepRecord:
    config, index, trial = args
    amplitude = config.torque_amplitudes[index]
    try:
        _, res = run_configuration(config, amplitude, trial_rng(config, index, trial))
    except SpringOverload:
        return SweepRecord(amplitude, trial, math.nan, "", RunStatus.OVERLOAD)
    except NumericalDivergence:
        return SweepRecord(amplitude, trial, math.nan, "", RunStatus.DIVERGED)
    except NoMotion:
        return SweepRecord(amplitude, trial, 0.0, "", RunStatus.NO_MOTION)
    return SweepRecord(amplitude, trial, res.bandwidth, res.method.value, RunStatus.OK)


def torque_sweep(config: ExperimentConfig, jobs: int = 1) -> SweepCurve:
    """Bandwidth at every configured amplitude and trial.

    Failures are recorded with their status rather than raised.  Results do not
    depend on ``jobs``: each trial owns a generator seeded from
    ``(random_seed, amplitude index, trial)`` and records are sorted.
    """
    tasks = [(config, i, t) for i in range(len(config.torque_amplitudes))
             for t in range(config.trials_per_amplitude)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_sweep_job, tasks))
    else:
        records = [_sweep_job(t) for t in tasks]
    records.sort(key=lambda r: (r.amplitude, r.trial))
    return SweepCurve(config.configuration, records)


def summary_stats(curve: SweepCurve) -> SummaryStats:
    """Mean, extremes and argmax amplitude over all successful trials."""
    ok = curve.ok()
    if not ok:
        raise EmptyCurve(f"no successful runs for {curve.configuration.value}")
    bw = np.array([r.bandwidth for r in ok])
    best = ok[int(np.argmax(bw))]
    return SummaryStats(float(np.mean(bw)), float(bw.min()), float(bw.max()), best.amplitude)


def peak_amplitude(curve: SweepCurve) -> float:
    """Amplitude with the highest mean bandwidth; the largest such on ties."""
    best_a, best_b = None, -math.inf
    for a, bws in curve.per_amplitude():
        if bws and np.mean(bws) >= best_b:
            best_a, best_b = a, float(np.mean(bws))
    if best_a is None:
        raise EmptyCurve("no successful runs")
    return best_a


def fit_saturation_regime(curve: SweepCurve, regime_split: Optional[float] = None):
    """Least-squares fit of ``B = c / T`` over amplitudes above ``regime_split``.

    Returns ``(c, r_squared)``; c is in Hz*Nm.  A curve with no variance to
    explain reports R^2 = 0.
    """
    split = peak_amplitude(curve) if regime_split is None else regime_split
    pts = [(r.amplitude, r.bandwidth) for r in curve.ok() if r.amplitude > split]
    if len({a for a, _ in pts}) < 3:
        raise InsufficientPoints(f"need >= 3 amplitudes above {split} Nm")
    t = np.array([a for a, _ in pts])
    b = np.array([bw for _, bw in pts])
    x = 1.0 / t
    c = float(np.dot(x, b) / np.dot(x, x))
    ss_res = float(np.sum((b - c * x) ** 2))
    ss_tot = float(np.sum((b - b.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return c, r2


def saturation_constant(v_sat: float, stiffness: float) -> float:
    """Predicted ``c`` in ``B = c/T``: the frequency where peak spring-deflection
    speed ``2*pi*f*T/k`` reaches the no-load speed."""
    return v_sat * stiffness / (2.0 * math.pi)


def peak_velocity_requirement(f: float, t_d: float, k: float) -> float:
    if not k > 0:
        raise DomainError("stiffness must be > 0")
    return 2.0 * math.pi * f * t_d / k


def peak_acceleration_requirement(f: float, t_d: float, k: float) -> float:
    if not k > 0:
        raise DomainError("stiffness must be > 0")
    return 4.0 * math.pi**2 * f * f * t_d / k


# --- virtual bench procedures ---------------------------------------------------

def _pulses(angle: float, resolution: float) -> int:
    return int(math.floor(angle / resolution + 0.5))


def virtual_backlash_measurement(plant: PlantParams, sensor: SensorParams = SensorParams(),
                                 increment: Optional[float] = None) -> float:
    """Free play found by holding the rotor and pushing the output to each flank.

    The output is moved in small increments until the play closes, first in
    the positive then in the negative direction; the encoder pulse difference
    between the two contacts is reported in radians.
    """
    res = sensor.angle_resolution
    step = res / 8.0 if increment is None else increment
    total = plant.motor.backlash_total
    # rotor locked: the output is the moving side of the play element
    position, offset = 0.0, 0.0
    _, offset, engaged = backlash_transmission(0.0, offset, total)
    contacts = []
    for direction in (1.0, -1.0):
        while True:
            moved, new_offset, engaged = backlash_transmission(direction * step, offset, total)
            # a transmitted component means the locked rotor is now pushing back
            position += direction * step - moved
            offset = new_offset
            if engaged:
                break
        contacts.append(_pulses(position, res))
    return (contacts[0] - contacts[1]) * res


def virtual_encoder_calibration(plant: PlantParams, rotations: int = 15, step: float = 2.0,
                                sensor: SensorParams = SensorParams(),
                                backlash_enabled: bool = True) -> float:
    """Encoder pulses per radian averaged over both directions.

    Each direction starts with an uncounted move that takes up the gear play,
    then ``rotations`` moves of ``step`` degrees are counted.
    """
    forward, backward = calibration_by_direction(plant, rotations, step, sensor,
                                                 backlash_enabled)
    return 0.5 * (forward + backward)


def calibration_by_direction(plant: PlantParams, rotations: int = 15, step: float = 2.0,
                             sensor: SensorParams = SensorParams(),
                             backlash_enabled: bool = True):
    """Forward and backward pulses-per-radian ratios of the calibration moves."""
    if rotations < 1:
        raise ConfigError("rotations must be >= 1")
    res = sensor.angle_resolution
    total = plant.motor.backlash_total if backlash_enabled else 0.0
    move = math.radians(step)
    output, offset = 0.0, 0.0
    ratios = []
    for direction in (1.0, -1.0):
        moved, offset, _ = backlash_transmission(direction * move, offset, total)
        output += moved
        start = _pulses(output, res)
        for _ in range(rotations):
            moved, offset, _ = backlash_transmission(direction * move, offset, total)
            output += moved
        counted = abs(_pulses(output, res) - start)
        ratios.append(counted / (rotations * move))
    return ratios[0], ratios[1]
