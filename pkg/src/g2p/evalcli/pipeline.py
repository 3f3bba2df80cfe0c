"""File-level glue: C sources to loop records to featurized graphs."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Optional

from ..cfront import CSyntaxError, Diagnostic, LabelSet, SourceLoop, scan_loops
from ..graphrep import build_vocab, featurize_loop


def _c_files(inputs) -> list:
    """(path, id prefix) pairs in deterministic order."""
    out = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            out += [(f, f.relative_to(p).as_posix()) for f in sorted(p.rglob("*.c"))]
        elif p.is_file():
            out.append((p, p.name))
        else:
            raise FileNotFoundError(f"no such file or directory: {p}")
    return out


def load_manifest_labels(manifest_path) -> dict:
    """Resolved file path -> LabelSet from a synthetic-corpus manifest."""
    path = Path(manifest_path)
    data = json.loads(path.read_text())
    return {(path.parent / e["file"]).resolve(): LabelSet.from_dict(e["labels"]) for e in data["entries"]}


def extract_files(inputs: Iterable, manifest: Optional[str] = None):
    """Extract outermost loops from every ``.c`` file; manifest labels override pragmas."""
    labels = load_manifest_labels(manifest) if manifest else {}
    loops, diags = [], []
    for path, prefix in _c_files(inputs):
        try:
            source = path.read_text(encoding="utf-8", errors="replace")
            found, d = scan_loops(source, prefix)
        except CSyntaxError as exc:
            diags.append(Diagnostic(prefix, exc.line or 0, f"file skipped: {exc}"))
            continue
        diags += d
        override = labels.get(path.resolve())
        for lp in found:
            if override is not None:
                lp.labels = override
            loops.append(lp)
    return loops, diags


def write_loops(loops, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for lp in loops:
            fh.write(json.dumps(lp.to_json(), ensure_ascii=False) + "\n")


def read_loops(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [SourceLoop.from_json(json.loads(line)) for line in fh if line.strip()]


def loops_to_graphs(loops, vocab: Optional[dict] = None, min_freq: int = 2):
    """Featurize loops; loops the graph builder cannot parse are reported and skipped."""
    loops = list(loops)
    vocab = build_vocab(loops, min_freq) if vocab is None else vocab
    graphs, diags = [], []
    for lp in loops:
        try:
            graphs.append(featurize_loop(lp, vocab))
        except CSyntaxError as exc:
            diags.append(Diagnostic(lp.id, exc.line or 0, f"graph skipped: {exc}"))
    return graphs, vocab, diags
