"""``g2p`` command line: extract, synth, graph, train, predict, eval, stats, gradcheck.

Exit codes: 0 success, 1 user error (bad input, config or file), 2 internal error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import fields
from pathlib import Path

from .cfront import CSyntaxError
from .graphrep import read_graphs, write_graphs

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2


class UserError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"g2p: {msg}", file=sys.stderr)


def _write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _report_diags(diags) -> None:
    for d in diags:
        print(f"{d.path}:{d.line}: {d.message}", file=sys.stderr)


def load_train_config(path) -> dict:
    """key = value pairs, optionally under a ``[model]`` section, typed by ModelConfig."""
    from .hgt.model import ModelConfig

    text = Path(path).read_text()
    parser = configparser.ConfigParser()
    if not text.lstrip().startswith("["):
        text = "[model]\n" + text
    parser.read_string(text)
    section = parser["model"] if parser.has_section("model") else parser[parser.sections()[0]]
    types = {f.name: f.type for f in fields(ModelConfig)}
    out = {}
    for key, raw in section.items():
        if key not in types:
            raise UserError(f"{path}: unknown config key {key!r}")
        t = types[key]
        out[key] = int(raw) if t in ("int", int) else float(raw) if t in ("float", float) else raw.strip()
    return out


# --------------------------------------------------------------------------
# commands

def cmd_extract(a) -> int:
    from .evalcli.pipeline import extract_files, write_loops

    loops, diags = extract_files(a.inputs, a.manifest)
    _report_diags(diags)
    write_loops(loops, a.out)
    print(f"extracted {len(loops)} loops ({len(diags)} skipped) -> {a.out}")
    return EXIT_OK


def cmd_synth(a) -> int:
    from .synthgen import CorpusConfig, generate_corpus, pattern_counts

    cfg = CorpusConfig(a.out, a.variants, a.nonparallel, a.seed, a.templates)
    manifest = generate_corpus(cfg)
    counts = pattern_counts(manifest)
    print(" ".join(f"{k}={v}" for k, v in counts.items()) + f" -> {a.out}")
    return EXIT_OK


def cmd_graph(a) -> int:
    from .evalcli.pipeline import loops_to_graphs, read_loops

    loops = read_loops(a.inputs[0])
    vocab = json.loads(Path(a.vocab).read_text()) if a.vocab else None
    graphs, vocab, diags = loops_to_graphs(loops, vocab, a.min_freq)
    _report_diags(diags)
    write_graphs(graphs, a.out)
    vocab_out = a.vocab_out or str(Path(a.out).with_name("vocab.json"))
    if not a.vocab:
        _write_json(vocab, vocab_out)
    print(f"{len(graphs)} graphs ({len(diags)} skipped), vocab {len(vocab)} -> {a.out}")
    return EXIT_OK


def cmd_train(a) -> int:
    from .hgt import ModelConfig, accuracy, save_checkpoint, split_corpus, train, write_history

    graphs = read_graphs(a.inputs[0])
    vocab = json.loads(Path(a.vocab).read_text())
    overrides = load_train_config(a.config) if a.config else {}
    for key in ("task", "seed", "epochs", "lr", "readout", "d", "h", "L"):
        val = getattr(a, key, None)
        if val is not None:
            overrides[key] = val
    overrides.setdefault("seed", 42)
    cfg = ModelConfig(**{**overrides, "vocab_size": len(vocab)})
    if a.parallel_only:
        graphs = [g for g in graphs if g.labels.parallel]
    tr, va, te = split_corpus(graphs, cfg.seed)
    log = (lambda s: print(s, file=sys.stderr)) if a.verbose else None
    res = train(tr, va, cfg, log=log)
    save_checkpoint(res.params, cfg, a.out, vocab=vocab, train_ids=[g.id for g in tr + va])
    if a.history:
        write_history(res.history, a.history)
    if a.test_out:
        write_graphs(te, a.test_out)
    report = {"task": cfg.task, "epochs_run": len(res.history), "best_epoch": res.best_epoch,
              "train_acc": accuracy(res.params, tr, cfg), "n_train": len(tr), "n_val": len(va),
              "n_test": len(te)}
    _write_json(report, str(a.out) + ".json")
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_eval(a) -> int:
    from .evalcli.metrics import format_table
    from .evalcli.predict import TaskModel, evaluate

    model = TaskModel.load(a.model)
    rep = evaluate(model, read_graphs(a.inputs[0]), a.task)
    pct = rep.metrics.as_percent()
    c = rep.counts
    print(format_table([[rep.task, c.tp, c.tn, c.fp, c.fn, f"{pct['precision']:.2f}", f"{pct['recall']:.2f}",
                         f"{pct['f1']:.2f}", f"{pct['accuracy']:.2f}"]],
                       ["task", "TP", "TN", "FP", "FN", "Precision", "Recall", "F1", "Accuracy(%)"]))
    if a.out:
        _write_json(rep.as_json(), a.out)
    if a.csv:
        Path(a.csv).write_text(rep.per_loop_csv())
    return EXIT_OK


def cmd_predict(a) -> int:
    from .evalcli.predict import predict

    models = {}
    for spec in a.model:
        task, sep, path = spec.partition("=")
        if not sep:
            raise UserError(f"--model expects task=path, got {spec!r}")
        models[task] = path
    source = Path(a.inputs[0]).read_text()
    sug = predict(models, source, Path(a.inputs[0]).name)
    print(json.dumps(sug.as_json(), indent=2, sort_keys=True))
    if a.out:
        _write_json(sug.as_json(), a.out)
    return EXIT_OK


def cmd_stats(a) -> int:
    from .evalcli.metrics import format_table
    from .evalcli.pipeline import read_loops
    from .evalcli.stats import COLUMNS, corpus_stats, stats_rows

    table = corpus_stats(read_loops(a.inputs[0]))
    print(format_table(stats_rows(table), ["category", *COLUMNS]))
    if a.out:
        _write_json(table, a.out)
    return EXIT_OK


def cmd_gradcheck(a) -> int:
    from .hgt import ModelConfig, gradcheck

    report = gradcheck(ModelConfig(d=8, h=2, L=1, vocab_size=6), seed=a.seed)
    worst = max(report.values())
    for name, err in report.items():
        print(f"{name:12s} {err:.3e}")
    print(f"max relative error {worst:.3e} ({'ok' if worst < a.tol else 'FAIL'})")
    if a.out:
        _write_json({"relative_errors": report, "max": worst, "tolerance": a.tol}, a.out)
    return EXIT_OK if worst < a.tol else EXIT_USER


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="g2p", description="Loop parallelism detection with heterogeneous AST graphs.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help, n_in="+", out_required=True):
        sp = sub.add_parser(name, help=help)
        if n_in:
            sp.add_argument("--in", dest="inputs", nargs=n_in, required=True, metavar="PATH")
        sp.add_argument("--out", required=out_required)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("extract", cmd_extract, "extract outermost for-loops from C files into JSONL")
    sp.add_argument("--manifest", help="synthetic-corpus manifest whose labels override pragma labels")

    sp = add("synth", cmd_synth, "generate the labeled synthetic corpus", n_in=None)
    sp.add_argument("--templates", help="template directory (default: shipped templates)")
    sp.add_argument("--variants", type=int, default=20)
    sp.add_argument("--nonparallel", type=int, default=700)
    sp.add_argument("--seed", type=int, default=42)

    sp = add("graph", cmd_graph, "build featurized graphs from loop JSONL", n_in=1)
    sp.add_argument("--vocab", help="existing vocab.json to reuse")
    sp.add_argument("--vocab-out", help="where to write the new vocabulary (default: vocab.json beside --out)")
    sp.add_argument("--min-freq", type=int, default=2)

    sp = add("train", cmd_train, "train one task model", n_in=1)
    sp.add_argument("--vocab", required=True)
    sp.add_argument("--config", help="key=value training config file")
    sp.add_argument("--task")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--readout", choices=("root", "mean"))
    sp.add_argument("--d", type=int)
    sp.add_argument("--h", type=int)
    sp.add_argument("--L", type=int)
    sp.add_argument("--history", help="per-epoch CSV output")
    sp.add_argument("--test-out", help="write the held-out test split as graph JSONL")
    sp.add_argument("--parallel-only", action="store_true", help="train on parallel loops only")
    sp.add_argument("-v", "--verbose", action="store_true")

    sp = add("eval", cmd_eval, "evaluate a model on held-out graphs", n_in=1, out_required=False)
    sp.add_argument("--model", required=True)
    sp.add_argument("--task")
    sp.add_argument("--csv", help="per-loop predictions CSV")

    sp = add("predict", cmd_predict, "suggest a pragma for the first loop of a C file", n_in=1,
             out_required=False)
    sp.add_argument("--model", action="append", required=True, metavar="TASK=PATH")

    add("stats", cmd_stats, "per-category corpus statistics", n_in=1, out_required=False)

    sp = add("gradcheck", cmd_gradcheck, "finite-difference gradient check", n_in=None, out_required=False)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-4)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse usage errors count as user errors
        return EXIT_OK if not exc.code else EXIT_USER
    from .hgt.checkpoint import CheckpointError
    from .hgt.model import ConfigError
    from .synthgen import TemplateError

    user_errors = (UserError, OSError, CSyntaxError, ConfigError, CheckpointError, TemplateError,
                   json.JSONDecodeError, configparser.Error, KeyError, ValueError)
    try:
        return args.fn(args)
    except user_errors as exc:
        _err(str(exc))
        return EXIT_USER
    except Exception as exc:  # noqa: BLE001
        _err(f"internal error: {type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
