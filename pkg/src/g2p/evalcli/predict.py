"""Scoring trained task models: held-out evaluation and pragma suggestions."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..cfront import LABEL_NAMES, CSyntaxError, scan_loops
from ..graphrep import encode_features, build_graph
from ..hgt.checkpoint import check_compatible, load_checkpoint, vocab_from_header
from ..hgt.model import ModelConfig, predict_proba
from .metrics import ConfusionCounts, Metrics, compute_metrics

CLAUSE_TASKS = ("private", "reduction", "simd", "target")
THRESHOLD = 0.5


class OverlapError(ValueError):
    def __init__(self, ids):
        self.ids = sorted(ids)
        shown = ", ".join(self.ids[:10]) + (" ..." if len(self.ids) > 10 else "")
        super().__init__(f"{len(self.ids)} evaluation loops were used in training: {shown}")


class PredictError(ValueError):
    pass


@dataclass
class TaskModel:
    params: dict
    config: ModelConfig
    vocab: Optional[dict] = None
    train_ids: tuple = ()

    @classmethod
    def load(cls, path) -> "TaskModel":
        params, cfg, header = load_checkpoint(path)
        return cls(params, cfg, vocab_from_header(header), tuple(header.get("train_ids", ())))


@dataclass
class EvalReport:
    task: str
    counts: ConfusionCounts
    metrics: Metrics
    rows: list  # (id, label, probability, prediction) sorted by id

    def per_loop_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "label", "probability", "prediction"])
        for lid, y, p, pred in self.rows:
            w.writerow([lid, y, f"{p:.6f}", pred])
        return buf.getvalue()

    def as_json(self) -> dict:
        return {"task": self.task, "counts": self.counts.as_dict(), "metrics": self.metrics.as_dict(),
                "metrics_percent": self.metrics.as_percent(), "n": self.counts.total}


def evaluate(model: TaskModel, graphs, task: Optional[str] = None, train_ids=None) -> EvalReport:
    """Threshold-0.5 confusion counts of ``model`` on graphs disjoint from its training set."""
    task = task or model.config.task
    train_ids = set(model.train_ids if train_ids is None else train_ids)
    graphs = sorted(graphs, key=lambda g: g.id)
    if not graphs:
        raise ValueError("empty evaluation set")
    overlap = {g.id for g in graphs} & train_ids
    if overlap:
        raise OverlapError(overlap)
    check_compatible(model.config, graphs)
    probs = np.concatenate([predict_proba(model.params, graphs[i:i + 64], model.config)
                            for i in range(0, len(graphs), 64)])
    y = np.array([g.label(task) for g in graphs], dtype=np.int64)
    pred = (probs >= THRESHOLD).astype(np.int64)
    counts = ConfusionCounts.from_predictions(y, pred)
    rows = [(g.id, int(a), float(p), int(b)) for g, a, p, b in zip(graphs, y, probs, pred)]
    return EvalReport(task, counts, compute_metrics(counts), rows)


@dataclass
class Suggestion:
    loop_id: str
    parallel_prob: float
    clause_probs: dict = field(default_factory=dict)
    suggested_pragma: Optional[str] = None

    def as_json(self) -> dict:
        return {"loop_id": self.loop_id, "parallel_prob": self.parallel_prob,
                "clause_probs": dict(self.clause_probs), "suggested_pragma": self.suggested_pragma}


def compose_pragma(parallel_prob: float, clause_probs: dict) -> Optional[str]:
    """Pragma text from task probabilities; clause arguments stay as ``?`` placeholders."""
    if parallel_prob < THRESHOLD:
        return None
    on = {k for k, v in clause_probs.items() if v >= THRESHOLD}
    text = "#pragma omp"
    if "target" in on:
        text += " target teams distribute"
    text += " parallel for"
    if "simd" in on:
        text += " simd"
    if "private" in on:
        text += " private(?)"
    if "reduction" in on:
        text += " reduction(?:?)"
    return text


def predict(models: dict, loop_source: str, loop_id: str = "<input>") -> Suggestion:
    """Run every available task model on the first for-loop of ``loop_source``.

    ``models`` maps task name to a TaskModel or a checkpoint path; the
    ``parallel`` model is required.
    """
    models = {t: (m if isinstance(m, TaskModel) else TaskModel.load(m)) for t, m in models.items()}
    unknown = set(models) - set(LABEL_NAMES)
    if unknown:
        raise PredictError(f"unknown tasks {sorted(unknown)}")
    if "parallel" not in models:
        raise PredictError("a model for the parallel task is required")
    try:
        loops, diags = scan_loops(loop_source, loop_id)
        if not loops:
            detail = "; ".join(d.message for d in diags) or "no for-loop found"
            raise PredictError(f"{loop_id}: {detail}")
        graph = build_graph(loops[0].text)
    except CSyntaxError as exc:
        raise PredictError(f"{loop_id}: cannot parse loop: {exc}") from exc
    probs = {}
    for task, m in models.items():
        if m.vocab is None:
            raise PredictError(f"model for {task} has no stored vocabulary")
        fg = encode_features(graph, m.vocab, loops[0].id)
        probs[task] = float(predict_proba(m.params, [fg], m.config)[0])
    clause = {t: probs[t] for t in CLAUSE_TASKS if t in probs}
    return Suggestion(loops[0].id, probs["parallel"], clause, compose_pragma(probs["parallel"], clause))
