"""Turn one loop into the heterogeneous graph the model consumes.

The graph has the syntax tree, statement-level control flow merged onto the
tree, and a chain linking consecutive source tokens. Every forward edge kind
has a reverse kind and every node has a self loop.

Run: python demos/02_build_graph.py
"""

from collections import Counter

from g2p.cfront import LabelSet, SourceLoop
from g2p.graphrep import EDGE_KINDS, build_graph, build_vocab, encode_features, graph_to_jsonl_line

LOOP = """for (i = 0; i < n; i++) {
    if (a[i] > 0)
        b[i] = sqrt(a[i]);
    else
        b[i] = 0;
}"""

g = build_graph(LOOP)
print(f"{len(g.nodes)} nodes, {len(g.edges)} edges, root = node {g.root} ({g.nodes[g.root].kind})\n")

print("node kinds:")
for kind, n in sorted(Counter(n.kind for n in g.nodes).items()):
    print(f"  {kind:15s} {n}")

print("\nedges per kind:")
for kind in EDGE_KINDS:
    print(f"  {kind:11s} {len(g.edges_of(kind))}")

# Control flow between statements: the if branches both fall through to the update clause.
print("\ncontrol flow:")
for s, t in g.edges_of("cfg_next"):
    print(f"  {g.nodes[s].kind:14s} -> {g.nodes[t].kind}")

# The lexical chain visits the leaves in source order.
leaves = [s for s, _ in g.edges_of("lex_next")] + [g.edges_of("lex_next")[-1][1]]
print("\nlexical chain:", " ".join(g.nodes[v].text for v in leaves))

# Features: node kind ids, token ids from a vocabulary, sibling order buckets.
vocab = build_vocab([SourceLoop("x", LOOP)], min_freq=1)
fg = encode_features(g, vocab, "demo:0", LabelSet(parallel=True))
print("\nfirst 8 token ids:", fg.token_ids[:8].tolist())
print("JSONL record is", len(graph_to_jsonl_line(fg)), "bytes")
