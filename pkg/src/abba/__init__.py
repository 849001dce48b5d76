"""Relative recall and FPR of two keyword spotters from accept-only data.

Two models run simultaneously on random user populations. Each collects only
what it accepts; each is then decoded offline on the other's data. From the
labelled cross-decoded accepts the package estimates recall and FPR of the
candidate (B) relative to the baseline (A).
"""
__version__ = "0.1.0"

from .bootstrap import BootstrapConfig, bootstrap_ci, estimate
from .calibration import CalibrationModel, annotate_soft
from .data import (
    Arm,
    ArmTraffic,
    ContingencyCounts,
    Dataset,
    Thresholds,
    UtteranceRecord,
    build_counts,
    ingest,
    soft_counts,
    write_records,
)
from .estimators import (
    RatioEstimate,
    Region,
    SweepRow,
    base_metrics,
    rfpr_abtest,
    rfpr_approx,
    rfpr_direct,
    rrecall_approx,
    rrecall_direct,
    select_threshold,
    ss_rfpr,
    ss_rrecall,
    threshold_sweep,
)
from .exceptions import (
    AbbaError,
    BootstrapError,
    ConfigError,
    MissingSoftLabelError,
    RecordFormatError,
    RecordValueError,
    UndefinedRatioError,
)
from .sampling import AllocationPlan, StratumSpec, derive_weights, neyman_allocate
from .simulation import (
    AbbaSimConfig,
    LabelMachineSpec,
    SsSimConfig,
    simulate_abba,
    simulate_ss,
)
