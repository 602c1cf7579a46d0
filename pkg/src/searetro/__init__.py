"""Simulation and bandwidth analysis of a gear motor retrofitted with a series spring."""

from .errors import (
    ConfigError, CsvFormatError, DomainError, EmptyBode, EmptyCurve, FitFailed, InsufficientData,
    InsufficientPoints, NumericalDivergence, SeaError, SpringOverload, UpsampleRequested,
    ZeroInputPower,
)
from .plant import MotorParams, NonlinearitySwitches, PlantParams, PlantState, SensorParams, SpringParams
from .signals import ChirpSpec, TimeSeries, chirp, quantize, sample_hold
from .control import ControllerGains, FeedbackSource, LoopConfig, control_step, min_control_rate
from .sysid import BandwidthMethod, BandwidthResult, BodePlot, bandwidth, estimate_frf
from .experiments import (
    Configuration, ExperimentConfig, RunStatus, SummaryStats, SweepCurve, SweepRecord,
    run_configuration, summary_stats, torque_sweep,
)

__version__ = "0.1.0"
