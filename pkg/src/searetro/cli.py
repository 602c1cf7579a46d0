"""Command-line front end.

Exit codes: 0 success, 2 configuration or CSV error, 3 simulation error,
4 empty Bode plot.  Data goes to stdout or files, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import fileio
from .errors import ConfigError, CsvFormatError, EmptyBode, SeaError
from .experiments import (
    ExperimentConfig, simulate_configuration, analyse_record, summary_stats, torque_sweep,
    trial_rng,
)
from .sysid import bandwidth

log = logging.getLogger("searetro")

EXIT_OK, EXIT_CONFIG, EXIT_SIMULATION, EXIT_EMPTY_BODE = 0, 2, 3, 4


def _describe(exc: BaseException) -> str:
    name, msg = type(exc).__name__, str(exc)
    return msg if msg.startswith(name) else f"{name}: {msg}"


def _load(args) -> List[ExperimentConfig]:
    configs = fileio.load_config(args.config)
    if args.seed is not None:
        configs = [c.with_(random_seed=args.seed) for c in configs]
    return configs


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def cmd_simulate(args) -> int:
    configs = _load(args)
    out = _out_dir(args.out)
    artifacts = []
    for config in configs:
        amplitude = config.torque_amplitudes[0] if args.amplitude is None else args.amplitude
        name = config.configuration.value
        log.info("simulating %s at %g Nm", name, amplitude)
        record = simulate_configuration(config, amplitude, trial_rng(config, 0, 0))
        files = [f"{name}_timeseries.csv", f"{name}_bode.csv", f"{name}_bandwidth.json"]
        fileio.write_timeseries(out / files[0], record)
        bode, result = analyse_record(config, record)
        fileio.write_bode(out / files[1], bode)
        summary = {"configuration": name, "amplitude_nm": amplitude, **result.as_dict()}
        (out / files[2]).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
        if args.plot:
            from .plotting import plot_bode
            files.append(f"{name}_bode.svg")
            plot_bode(bode, out / files[-1], result, title=f"{name}, {amplitude:g} Nm")
        artifacts += files
    fileio.write_manifest(out, args.config, artifacts)
    return EXIT_OK


def cmd_sweep(args) -> int:
    configs = _load(args)
    out = _out_dir(args.out)
    jobs = args.jobs or os.cpu_count() or 1
    curves, stats = [], {}
    for config in configs:
        log.info("sweeping %s over %d amplitudes", config.configuration.value,
                 len(config.torque_amplitudes))
        curve = torque_sweep(config, jobs=jobs)
        curves.append(curve)
        if curve.ok():
            stats[config.configuration] = summary_stats(curve)
        else:
            log.warning("%s: no successful runs, omitted from summary",
                        config.configuration.value)
    artifacts = ["sweep.csv", "summary.csv", "summary.txt"]
    fileio.write_sweep(out / "sweep.csv", curves)
    fileio.write_summary(out / "summary.csv", stats)
    (out / "summary.txt").write_text(fileio.format_summary_table(stats), encoding="utf-8")
    if args.plot:
        from .plotting import plot_sweep
        artifacts.append("bandwidth_vs_amplitude.svg")
        plot_sweep(curves, out / artifacts[-1])
    fileio.write_manifest(out, args.config, artifacts)
    return EXIT_OK


def cmd_bandwidth(args) -> int:
    bode = fileio.read_bode(args.bode_csv)
    result = bandwidth(bode)
    sys.stdout.write(json.dumps(result.as_dict()) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="searetro",
                                description="Retrofitted series-elastic actuator bench simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON config file")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override random_seed")
    common.add_argument("--plot", action="store_true", help="also write SVG figures")

    s = sub.add_parser("simulate", parents=[common], help="one chirp run per configuration")
    s.add_argument("--amplitude", type=float, default=None,
                   help="torque amplitude in Nm (default: first configured amplitude)")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", parents=[common], help="torque-amplitude sweep")
    w.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    w.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bandwidth", help="bandwidth of a Bode CSV, printed as JSON")
    b.add_argument("bode_csv")
    b.set_defaults(func=cmd_bandwidth)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except EmptyBode as exc:
        print(f"error: {_describe(exc)}", file=sys.stderr)
        return EXIT_EMPTY_BODE
    except (ConfigError, CsvFormatError) as exc:
        print(f"error: {_describe(exc)}", file=sys.stderr)
        return EXIT_CONFIG
    except SeaError as exc:
        print(f"error: {_describe(exc)}", file=sys.stderr)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
