"""Configuration files, CSV records and run manifests.

Config files are JSON.  Every physical quantity carries its SI unit in the key
name, e.g. ``stiffness_nm_per_rad``, so a file can be read without guessing
units.  CSV files are UTF-8 with LF line endings and a mandatory header; floats
are written with ``repr`` so they parse back to the identical value.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np

from .control import ControllerGains, LoopConfig
from .errors import ConfigError, CsvFormatError
from .experiments import (
    HARDWARE_REFERENCE, Configuration, ExperimentConfig, RunStatus, SummaryStats, SweepCurve,
    SweepRecord,
)
from .plant import MotorParams, NonlinearitySwitches, SensorParams, SpringParams
from .rig import RigRecord
from .signals import ChirpSpec
from .sysid import BodePlot

SCHEMA_VERSION = 1

BODE_HEADER = ("frequency_hz", "magnitude_db", "phase_deg")
TIMESERIES_HEADER = ("time_s", "reference_torque_nm", "command_torque_nm",
                     "measured_torque_nm", "rotor_velocity_rad_s")
SWEEP_HEADER = ("configuration", "amplitude_nm", "trial", "bandwidth_hz", "method", "status")
SUMMARY_HEADER = ("system", "b_avg_hz", "b_min_hz", "b_max_hz", "t_at_bmax_nm")

# config key -> dataclass field, per section
_MOTOR_KEYS = {
    "torque_constant_nm_per_a": "torque_constant",
    "rotor_inertia_kg_m2": "rotor_inertia",
    "gear_ratio": "gear_ratio",
    "electrical_time_constant_s": "electrical_time_constant",
    "stall_torque_nm": "stall_torque",
    "no_load_speed_rad_per_s": "no_load_speed",
    "viscous_damping_nm_s_per_rad": "viscous_damping",
    "coulomb_friction_nm": "coulomb_friction",
    "static_friction_nm": "static_friction",
    "stiction_velocity_threshold_rad_per_s": "stiction_velocity_threshold",
    "backlash_total_rad": "backlash_total",
    "current_limit_a": "current_limit",
    "supply_voltage_v": "supply_voltage",
}
_SPRING_KEYS = {"stiffness_nm_per_rad": "stiffness", "torque_limit_nm": "torque_limit"}
_SENSOR_KEYS = {
    "torque_resolution_nm": "torque_resolution",
    "sample_rate_hz": "sample_rate",
    "range_nm": "range",
    "series_stiffness_nm_per_rad": "series_stiffness",
    "angle_resolution_rad": "angle_resolution",
}
_CHIRP_KEYS = {"start_frequency_hz": "start_frequency", "end_frequency_hz": "end_frequency",
               "duration_s": "duration"}
_SWITCH_KEYS = {k: k for k in ("backlash_enabled", "stiction_enabled", "saturation_enabled",
                               "quantization_enabled")}
_CONTROLLER_KEYS = {"control_rate_hz", "feedforward_gain", "feedback_gain",
                    "slowest_time_constant_s"}
_SIMULATION_KEYS = {"dt_s", "noise_std_nm"}
_ANALYSIS_KEYS = {"segment_fraction", "n_dc_bins", "extinction_db"}
_TOP_KEYS = {"schema_version", "configurations", "torque_amplitudes_nm", "trials_per_amplitude",
             "random_seed", "motor", "se_spring", "sensor", "chirp", "switches", "controller",
             "simulation", "analysis"}


# --- config ------------------------------------------------------------------

def _section(doc: dict, name: str, allowed) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"'{name}' must be an object")
    unknown = set(sec) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(sorted(unknown))}")
    return sec


def _number(value, key: str, allow_none: bool = False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {value!r}")
    return float(value)


def _mapped(sec: dict, keys: Dict[str, str], optional=()) -> dict:
    return {keys[k]: _number(v, k, allow_none=k in optional) for k, v in sec.items()}


def configs_from_dict(doc: dict) -> List[ExperimentConfig]:
    """One :class:`ExperimentConfig` per entry of ``configurations``."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")

    names = doc.get("configurations", [c.value for c in Configuration])
    if isinstance(names, str):
        names = [names]
    if not names:
        raise ConfigError("'configurations' must not be empty")
    try:
        configurations = [Configuration(n) for n in names]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    motor = MotorParams(**_mapped(_section(doc, "motor", _MOTOR_KEYS), _MOTOR_KEYS,
                                  optional=("no_load_speed_rad_per_s",)))
    se_spring = SpringParams(**_mapped(_section(doc, "se_spring", _SPRING_KEYS), _SPRING_KEYS,
                                       optional=("torque_limit_nm",)))
    sensor = SensorParams(**_mapped(_section(doc, "sensor", _SENSOR_KEYS), _SENSOR_KEYS))
    chirp = ChirpSpec(1.0, **_mapped(_section(doc, "chirp", _CHIRP_KEYS), _CHIRP_KEYS))

    sw = _section(doc, "switches", _SWITCH_KEYS)
    for k, v in sw.items():
        if not isinstance(v, bool):
            raise ConfigError(f"'{k}' must be true or false")
    switches = NonlinearitySwitches(**sw)

    ctl = _section(doc, "controller", _CONTROLLER_KEYS)
    gains = ControllerGains(_number(ctl.get("feedforward_gain", 1.0), "feedforward_gain"),
                            _number(ctl.get("feedback_gain", 1.0), "feedback_gain"))
    loop = LoopConfig(_number(ctl.get("control_rate_hz", LoopConfig().control_rate),
                              "control_rate_hz"))
    extra = {}
    if "slowest_time_constant_s" in ctl:
        extra["slowest_time_constant"] = _number(ctl["slowest_time_constant_s"],
                                                 "slowest_time_constant_s")

    sim = _section(doc, "simulation", _SIMULATION_KEYS)
    if "dt_s" in sim:
        extra["dt"] = _number(sim["dt_s"], "dt_s")
    if "noise_std_nm" in sim:
        extra["noise_std"] = _number(sim["noise_std_nm"], "noise_std_nm")
    ana = _section(doc, "analysis", _ANALYSIS_KEYS)
    if "segment_fraction" in ana:
        extra["segment_fraction"] = _number(ana["segment_fraction"], "segment_fraction")
    if "extinction_db" in ana:
        extra["extinction_db"] = _number(ana["extinction_db"], "extinction_db")
    for key in ("n_dc_bins", "trials_per_amplitude", "random_seed"):
        src = ana if key == "n_dc_bins" else doc
        if key in src:
            if isinstance(src[key], bool) or not isinstance(src[key], int):
                raise ConfigError(f"'{key}' must be an integer")
            extra[key] = src[key]
    if "torque_amplitudes_nm" in doc:
        amps = doc["torque_amplitudes_nm"]
        if not isinstance(amps, list):
            raise ConfigError("'torque_amplitudes_nm' must be a list")
        extra["torque_amplitudes"] = tuple(_number(a, "torque_amplitudes_nm") for a in amps)

    return [ExperimentConfig(configuration=c, chirp=chirp, motor=motor, se_spring=se_spring,
                             sensor=sensor, switches=switches, loop=loop, gains=gains, **extra)
            for c in configurations]


def load_config(path) -> List[ExperimentConfig]:
    """Read and validate a JSON config file.  Every failure raises ConfigError."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    try:
        return configs_from_dict(doc)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def config_to_dict(configs: Sequence[ExperimentConfig]) -> dict:
    """Inverse of :func:`configs_from_dict` for configs sharing all but the configuration."""
    c = configs[0]
    inv = lambda keys, obj: {k: getattr(obj, f) for k, f in keys.items()}
    chirp = c.chirp
    return {
        "schema_version": SCHEMA_VERSION,
        "configurations": [x.configuration.value for x in configs],
        "torque_amplitudes_nm": list(c.torque_amplitudes),
        "trials_per_amplitude": c.trials_per_amplitude,
        "random_seed": c.random_seed,
        "chirp": {"start_frequency_hz": chirp.start_frequency,
                  "end_frequency_hz": chirp.end_frequency, "duration_s": chirp.duration},
        "motor": inv(_MOTOR_KEYS, c.motor),
        "se_spring": inv(_SPRING_KEYS, c.se_spring),
        "sensor": inv(_SENSOR_KEYS, c.sensor),
        "switches": inv(_SWITCH_KEYS, c.switches),
        "controller": {"control_rate_hz": c.loop.control_rate,
                       "feedforward_gain": c.gains.feedforward_gain,
                       "feedback_gain": c.gains.feedback_gain,
                       "slowest_time_constant_s": c.slowest_time_constant},
        "simulation": {"dt_s": c.dt, "noise_std_nm": c.noise_std},
        "analysis": {"segment_fraction": c.segment_fraction, "n_dc_bins": c.n_dc_bins,
                     "extinction_db": c.extinction_db},
    }


# --- CSV ---------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def _write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(buf.getvalue())


def _read_rows(path, header: Sequence[str]) -> List[List[str]]:
    try:
        with open(path, encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except UnicodeDecodeError as exc:
        raise CsvFormatError(f"{path}: not UTF-8 ({exc})") from None
    except OSError as exc:
        raise CsvFormatError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise CsvFormatError(f"{path}: empty file, header required")
    if tuple(rows[0]) != tuple(header):
        raise CsvFormatError(f"{path}: header {rows[0]} != expected {list(header)}")
    body = [r for r in rows[1:] if r]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise CsvFormatError(f"{path}: row {i} has {len(r)} fields, expected {len(header)}")
    return body


def _float(text: str, path, column: str) -> float:
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise CsvFormatError(f"{path}: bad number {text!r} in column {column}") from None


def _columns(path, header, body) -> List[np.ndarray]:
    return [np.array([_float(r[i], path, h) for r in body], dtype=float)
            for i, h in enumerate(header)]


def write_bode(path, bode: BodePlot) -> None:
    _write_rows(path, BODE_HEADER, zip(bode.frequencies, bode.magnitude, bode.phase))


def read_bode(path) -> BodePlot:
    """Parse a Bode CSV.  A header with no rows gives an empty plot."""
    f, m, p = _columns(path, BODE_HEADER, _read_rows(path, BODE_HEADER))
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(p))):
        raise CsvFormatError(f"{path}: frequencies and phases must be finite")
    try:
        return BodePlot(f, m, p)
    except ValueError as exc:
        raise CsvFormatError(f"{path}: {exc}") from None


def write_timeseries(path, record: RigRecord) -> None:
    _write_rows(path, TIMESERIES_HEADER,
                zip(record.times, record.reference, record.command, record.measured,
                    record.rotor_velocity))


def read_timeseries(path) -> Dict[str, np.ndarray]:
    cols = _columns(path, TIMESERIES_HEADER, _read_rows(path, TIMESERIES_HEADER))
    return dict(zip(TIMESERIES_HEADER, cols))


def write_sweep(path, curves: Sequence[SweepCurve]) -> None:
    rows = [(c.configuration.value, r.amplitude, r.trial, r.bandwidth, r.method, r.status.value)
            for c in curves for r in c.records]
    _write_rows(path, SWEEP_HEADER, rows)


def read_sweep(path) -> List[SweepCurve]:
    """Curves in order of first appearance of each configuration."""
    curves: Dict[str, List[SweepRecord]] = {}
    for r in _read_rows(path, SWEEP_HEADER):
        try:
            cfg, status = Configuration(r[0]).value, RunStatus(r[5])
            trial = int(r[2])
        except ValueError as exc:
            raise CsvFormatError(f"{path}: {exc}") from None
        rec = SweepRecord(_float(r[1], path, "amplitude_nm"), trial,
                          _float(r[3], path, "bandwidth_hz"), r[4], status)
        curves.setdefault(cfg, []).append(rec)
    return [SweepCurve(Configuration(k), v) for k, v in curves.items()]


def write_summary(path, stats: Dict[Configuration, SummaryStats]) -> None:
    rows = [(cfg.value, s.b_avg, s.b_min, s.b_max, s.t_at_bmax) for cfg, s in stats.items()]
    _write_rows(path, SUMMARY_HEADER, rows)


def format_summary_table(stats: Dict[Configuration, SummaryStats],
                         with_reference: bool = True) -> str:
    """Plain-text "Summary bandwidth statistics" table, one row per system.

    Hardware reference rows follow for side-by-side reading; they are not
    simulated values.
    """
    head = f"{'System':<26}{'B_avg':>9}{'B_min':>9}{'B_max':>9}{'T(B_max)':>10}"
    units = f"{'':<26}{'[Hz]':>9}{'[Hz]':>9}{'[Hz]':>9}{'[Nm]':>10}"
    lines = ["Summary bandwidth statistics (simulated)", head, units, "-" * len(head)]
    for cfg, s in stats.items():
        lines.append(f"{cfg.value:<26}{s.b_avg:>9.3f}{s.b_min:>9.3f}{s.b_max:>9.3f}"
                     f"{s.t_at_bmax:>10.2f}")
    if with_reference:
        lines += ["", "Hardware reference (measured on the physical rig)", head, units,
                  "-" * len(head)]
        for cfg in stats:
            ref = HARDWARE_REFERENCE[cfg.value]
            lines.append(f"{cfg.value:<26}{ref['b_avg']:>9.3f}{ref['b_min']:>9.3f}"
                         f"{ref['b_max']:>9.3f}{ref['t_at_bmax']:>10.2f}")
    return "\n".join(lines) + "\n"


# --- manifest ----------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, config_path, artifacts: Sequence[str]) -> Path:
    """Record every emitted artifact with its SHA-256 digest in ``manifest.json``.

    Paths are relative to ``out_dir``; no timestamps, so reruns are identical.
    """
    out_dir = Path(out_dir)
    entries = [{"path": a, "sha256": sha256_file(out_dir / a)} for a in sorted(artifacts)]
    doc = {"config": os.fspath(config_path), "output_directory": os.fspath(out_dir),
           "artifacts": entries}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


def verify_manifest(out_dir) -> bool:
    out_dir = Path(out_dir)
    doc = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    return all((out_dir / e["path"]).is_file() and sha256_file(out_dir / e["path"]) == e["sha256"]
               for e in doc["artifacts"])
