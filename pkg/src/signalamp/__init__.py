"""Weak-signal amplification over bipartite transaction graphs.

Cheap per-transaction binary features are individually too noisy to act
on. Aggregated at the convergence nodes the traffic funnels into, shrunk
toward the population rate, and tested as proportions, they become
node-level adjudications precise enough to flag whole cohorts at once.
"""

from .amplify import NodeScore, compute_baseline, score_all, score_node, shrink, z_score
from .backtest import (
    AcceptanceBounds,
    BacktestReport,
    MetricsRow,
    RawSignalBaseline,
    SeriesRow,
    SignalSummary,
    amplification_factor,
    check_bounds,
    compute_metrics,
    daily_series,
    metrics_from_counts,
    raw_signal_baseline,
    run_backtest,
    threshold_sweep,
    write_report_files,
)
from .detect import (
    ActivationReport,
    Alert,
    IncidentSummary,
    SignalActivation,
    attach_users,
    build_alerts,
    collect_hit_users,
    compose_signals,
    flag_nodes,
    serialize_alert,
    serialize_alerts,
)
from .edgefile import (
    read_edge_file,
    read_ground_truth,
    write_edge_file,
    write_ground_truth,
)
from .engine import (
    DayOutcome,
    ReplayResult,
    StreamEngine,
    WindowConfig,
    replay_daily,
)
from .errors import (
    CheckpointError,
    DegenerateBaselineError,
    DuplicateSignalError,
    EdgeFileError,
    InfeasibleScenarioError,
    NoBaselineError,
    NodeMismatchError,
    SignalAmpError,
    UnknownNodeError,
    UnknownSignalError,
    UnsortedEdgesError,
)
from .model import (
    GlobalBaseline,
    NodeAccumulator,
    SignalDef,
    SignalRegistry,
    TransactionEdge,
    accumulate_edges,
    merge_accumulators,
)
from .scenario import (
    PRESETS,
    AttackConfig,
    GroundTruth,
    ScenarioConfig,
    calibrate_case1,
    calm,
    case1_desk,
    case2_desk,
    generate,
    preset,
    registry_for,
    scenario_from_dict,
    scenario_to_dict,
    with_seed,
)

__version__ = "0.1.0"
