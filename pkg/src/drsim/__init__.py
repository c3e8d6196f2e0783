"""drsim: deterministic demand-response simulation for server clusters.

Models a rack of servers tracking a grid regulation signal: six
CPU-throttling interfaces with calibrated power/residency behavior, a
sensed measurement pipeline, a lossy multicast error channel, per-server
integral and open-loop controllers, and the statistics used to grade
tracking quality. Everything is reproducible from a single seed.
"""

from ._kernels import backend as kernel_backend
from .config import ConfigError, ExperimentConfig, load_config, snapshot
from .control import (
    InfeasibleScheduleError,
    IntegralController,
    SetpointSchedule,
    open_loop_tau,
)
from .engine import (
    ExperimentReport,
    run_characterization,
    run_model_accuracy_sweep,
    run_ramp,
    run_tracking,
)
from .netsim import ChannelConfig, ControlCommand, Datagram, MulticastChannel
from .powermodel import (
    InterfaceKind,
    InterfaceParams,
    LinearPowerModel,
    PRESETS,
    ResidencyProfile,
    interface_params,
    mean_power,
    power_from_residency,
    residency,
    sample_power,
)
from .report import write_report
from .sensing import (
    ErrorSample,
    PowerSample,
    RawSample,
    SensorChannel,
    SensorConfig,
    block_average,
    compute_error,
)
from .stats import (
    RangeBand,
    RmseCurve,
    conservative_range,
    linear_fit_residual,
    mad_filter,
    precision_score,
    ramp_metrics,
    rmse,
)

__version__ = "0.1.0"
