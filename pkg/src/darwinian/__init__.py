"""Search-based selection of collection implementations in a program."""

from .config import ProjectConfig, load_config
from .evaluate import EvalConfig, EvalOutcome, Evaluator, Measurement, Mode
from .extract import Extraction, GenomeSchema, extract, materialize, scan_project, search_space_size
from .report import build_report, cost_estimate, emit_artifacts
from .search import Classification, SearchParams, classify_vs_baseline, nsga2_run
from .stats import mann_whitney_u, median_ci
from .store import Store, builtin_store, load_store

__all__ = [
    "Classification",
    "EvalConfig",
    "EvalOutcome",
    "Evaluator",
    "Extraction",
    "GenomeSchema",
    "Measurement",
    "Mode",
    "ProjectConfig",
    "SearchParams",
    "Store",
    "build_report",
    "builtin_store",
    "classify_vs_baseline",
    "cost_estimate",
    "emit_artifacts",
    "extract",
    "load_config",
    "load_store",
    "mann_whitney_u",
    "materialize",
    "median_ci",
    "nsga2_run",
    "scan_project",
    "search_space_size",
]
