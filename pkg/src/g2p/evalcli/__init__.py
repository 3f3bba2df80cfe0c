from .metrics import ConfusionCounts, Metrics, compute_metrics, format_table
from .pipeline import extract_files, loops_to_graphs, read_loops, write_loops
from .predict import (
    EvalReport,
    OverlapError,
    PredictError,
    Suggestion,
    TaskModel,
    compose_pragma,
    evaluate,
    predict,
)
from .stats import corpus_stats, stats_rows
