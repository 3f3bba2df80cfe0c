"""Train the heterogeneous graph transformer on a small synthetic corpus.

This script first checks the hand-written backward pass against finite
differences. It then trains the parallel-existence task and looks at the
attention one node pays to its neighbours.

Run: python demos/04_train_hgt.py   (about a minute on one core)
"""

import tempfile

import numpy as np

from g2p.evalcli.pipeline import extract_files, loops_to_graphs
from g2p.graphrep import EDGE_KINDS
from g2p.hgt import ModelConfig, accuracy, attention_weights, gradcheck, split_corpus, train
from g2p.synthgen import CorpusConfig, generate_corpus

errors = gradcheck(ModelConfig(d=8, h=2, L=1, vocab_size=6), seed=0)
print(f"gradient check: max relative error {max(errors.values()):.1e} over {len(errors)} tensors\n")

with tempfile.TemporaryDirectory() as out:
    generate_corpus(CorpusConfig(out, n_variants_per_template=5, n_nonparallel=182, seed=3))
    loops, _ = extract_files([out], f"{out}/manifest.json")
graphs, vocab, _ = loops_to_graphs(loops)
train_set, val_set, test_set = split_corpus(graphs, seed=0)
print(f"{len(graphs)} graphs, vocabulary of {len(vocab)} tokens, split {len(train_set)}/{len(val_set)}/{len(test_set)}")

cfg = ModelConfig(d=32, h=4, L=2, vocab_size=len(vocab), epochs=8, patience=3, seed=0)
result = train(train_set, val_set, cfg, log=print)
print(f"\nbest epoch {result.best_epoch}; test accuracy {accuracy(result.params, test_set, cfg):.3f}")

# Attention at the root for_stmt in the last layer, averaged over heads.
g = test_set[0]
layers, batch = attention_weights(result.params, [g], cfg)
into_root = np.flatnonzero(batch.dst == g.root)
print(f"\nlast-layer attention into the root of {g.id}:")
for e in into_root:
    print(f"  from node {batch.src[e]:3d} via {EDGE_KINDS[batch.rel[e]]:10s} {layers[-1][e].mean():.3f}")
