"""Score a trained model and turn its probabilities into a pragma suggestion.

The script trains a parallel model and a reduction model, saves both as
checkpoints, and evaluates the parallel model on held-out loops. It then asks
for a pragma for a loop written by hand.

Run: python demos/05_evaluate_and_suggest.py   (about a minute on one core)
"""

import tempfile
from pathlib import Path

from g2p.evalcli import ConfusionCounts, TaskModel, compose_pragma, compute_metrics, evaluate, predict
from g2p.evalcli.pipeline import extract_files, loops_to_graphs
from g2p.hgt import ModelConfig, save_checkpoint, split_corpus, train
from g2p.synthgen import CorpusConfig, generate_corpus

# Metrics come straight from confusion counts.
m = compute_metrics(ConfusionCounts(tp=2860, tn=617, fp=356, fn=199))
print("metrics from counts:", m.as_percent())

# Clause probabilities map to pragma text; arguments stay as placeholders.
print(compose_pragma(0.9, {"reduction": 0.8, "private": 0.3, "simd": 0.1, "target": 0.2}))
print(compose_pragma(0.2, {"reduction": 0.9}), "(no suggestion below 0.5)\n")

work = Path(tempfile.mkdtemp())
generate_corpus(CorpusConfig(str(work / "corpus"), n_variants_per_template=10, n_nonparallel=350, seed=4))
loops, _ = extract_files([work / "corpus"], work / "corpus" / "manifest.json")
graphs, vocab, _ = loops_to_graphs(loops)

paths = {}
held_out = None
for task, pool in (("parallel", graphs), ("reduction", [g for g in graphs if g.labels.parallel])):
    tr, va, te = split_corpus(pool, seed=0)
    cfg = ModelConfig(vocab_size=len(vocab), epochs=12, patience=3, task=task)
    res = train(tr, va, cfg)
    paths[task] = work / f"{task}.g2p"
    save_checkpoint(res.params, cfg, paths[task], vocab=vocab, train_ids=[g.id for g in tr + va])
    if task == "parallel":
        held_out = te

report = evaluate(TaskModel.load(paths["parallel"]), held_out)
print("held-out parallel task:", report.counts.as_dict(), report.metrics.as_percent())

# The training ids travel with the checkpoint, so evaluating on training data is refused.
try:
    evaluate(TaskModel.load(paths["parallel"]), graphs)
except ValueError as exc:
    print("refused:", str(exc)[:70], "...")

# Three close relatives. The first matches a reduction template token for token.
# The other two change what is accumulated, or use a pointer accumulator and a
# declaration in the loop header. The model has learned template shapes more than
# dependence structure, so expect the last two to be misjudged.
loops = {
    "template_shape.c": "int main(void) { for (i = 0; i < 1000; i++) { a[i] = i * 2; sum += i; } }",
    "other_term.c": "int main(void) { for (i = 0; i < 1000; i++) { a[i] = i * 2; sum += b[i]; } }",
    "pointer_style.c": """
void f(int n, double *a, double *b, double *s) {
    for (int i = 0; i < n; i++) {
        a[i] = i * 2;
        *s += b[i];
    }
}
""",
}
for name, source in loops.items():
    s = predict(paths, source, name)
    print(f"\n{name}: parallel {s.parallel_prob:.3f}, reduction {s.clause_probs['reduction']:.3f}")
    print("  suggestion:", s.suggested_pragma)
