"""Static SVG figures for sweep and single-run reports.

Figures are decorative; the CSV files are the data contract.  Rendering uses
the Agg backend with a fixed SVG hash salt and no date stamp so reruns give
identical files.
"""

from __future__ import annotations

from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .experiments import SweepCurve
from .sysid import BandwidthResult, BodePlot

_STYLE = {
    "svg.hashsalt": "searetro",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

LABELS = {
    "original_motor": "Original motor",
    "passive_sea": "Passive SEA (open loop)",
    "closed_loop_sea": "SEA feedback",
    "closed_loop_rigid_sensor": "Force-sensor feedback",
}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_sweep(curves: Sequence[SweepCurve], path) -> None:
    """Bandwidth against torque amplitude, mean line with min-max trial band."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for curve in curves:
            amps, mean, lo, hi = [], [], [], []
            for a, bws in curve.per_amplitude():
                if not bws:
                    continue
                amps.append(a)
                mean.append(np.mean(bws))
                lo.append(np.min(bws))
                hi.append(np.max(bws))
            if not amps:
                continue
            name = curve.configuration.value
            line, = ax.plot(amps, mean, marker="o", ms=3, label=LABELS.get(name, name))
            ax.fill_between(amps, lo, hi, color=line.get_color(), alpha=0.2, lw=0)
        ax.set_xlabel("Torque amplitude [Nm]")
        ax.set_ylabel("Bandwidth [Hz]")
        ax.set_ylim(bottom=0)
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_bode(bode: BodePlot, path, result: Optional[BandwidthResult] = None,
              title: str = "") -> None:
    with plt.rc_context(_STYLE):
        fig, (am, ap) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 5.0))
        am.semilogx(bode.frequencies, bode.magnitude, lw=1)
        ap.semilogx(bode.frequencies, bode.phase, lw=1)
        if result is not None:
            am.axhline(result.dc_gain - 3.0, color="0.5", ls="--", lw=0.8)
            for ax in (am, ap):
                ax.axvline(result.bandwidth, color="C3", lw=0.8)
                if result.crossover is not None:
                    ax.axvline(result.crossover, color="C2", ls=":", lw=0.8)
            am.set_title(f"{title}  B = {result.bandwidth:.2f} Hz ({result.method.value})".strip())
        elif title:
            am.set_title(title)
        am.set_ylabel("Magnitude [dB]")
        ap.set_ylabel("Phase [deg]")
        ap.set_xlabel("Frequency [Hz]")
        fig.tight_layout()
        _save(fig, path)
