"""Seedable simulator for supervised computation over task DAGs with a
constant fraction of adversarial workers, plus two instantiations:
verified matrix multiplication over GF(2^61 - 1) and supervised
mergesort with authenticated items."""

from .adversary import Strategy, builtin_strategies, expected_resamples, make_strategy
from .metrics import Metrics
from .protocol import (
    SOURCE,
    TARGET,
    AdversaryView,
    Done,
    Engine,
    FlagApp,
    Reject,
    Report,
    RunOutcome,
    Silent,
    SupervisorState,
    WorkerSampler,
    apply_report,
    wavefront,
)
from .rngs import TrialRngs
from .taskgraph import (
    GraphBuilder,
    NotADagError,
    TaskGraph,
    TaskKind,
    assign_levels,
    build_path,
    extend_with_io_lists,
    random_leveled_dag,
    to_leveled,
    topological_order,
)

__version__ = "0.1.0"

__all__ = [
    "AdversaryView",
    "Done",
    "Engine",
    "FlagApp",
    "GraphBuilder",
    "Metrics",
    "NotADagError",
    "Reject",
    "Report",
    "RunOutcome",
    "SOURCE",
    "Silent",
    "Strategy",
    "SupervisorState",
    "TARGET",
    "TaskGraph",
    "TaskKind",
    "TrialRngs",
    "WorkerSampler",
    "apply_report",
    "assign_levels",
    "build_path",
    "builtin_strategies",
    "expected_resamples",
    "extend_with_io_lists",
    "make_strategy",
    "random_leveled_dag",
    "to_leveled",
    "topological_order",
    "wavefront",
    "__version__",
]
