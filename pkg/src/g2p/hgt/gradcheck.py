"""Finite-difference verification of the analytic gradients."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..cfront import LabelSet
from ..graphrep import EDGE_KINDS, N_ORDER_BUCKETS, NODE_KINDS, FeaturizedGraph
from .model import ModelConfig, init_params, loss_and_grad


def random_graph(rng: np.random.Generator, n_nodes: int = 10, vocab_size: int = 6,
                 n_extra_edges: Optional[int] = None, gid: str = "random") -> FeaturizedGraph:
    """A random tree with extra typed edges and a self loop on every node."""
    n_extra = n_nodes if n_extra_edges is None else n_extra_edges
    kinds = rng.integers(0, len(NODE_KINDS), n_nodes)
    toks = rng.integers(0, vocab_size, n_nodes)
    ords = rng.integers(0, N_ORDER_BUCKETS, n_nodes)
    edges = []
    for v in range(1, n_nodes):
        parent = int(rng.integers(0, v))
        edges += [(parent, 0, v), (v, 1, parent)]
    for _ in range(n_extra):
        s, t = rng.integers(0, n_nodes, 2)
        edges.append((int(s), int(rng.integers(2, len(EDGE_KINDS) - 1)), int(t)))
    edges += [(v, len(EDGE_KINDS) - 1, v) for v in range(n_nodes)]
    return FeaturizedGraph(gid, LabelSet(parallel=bool(rng.integers(0, 2))), 0, kinds, toks, ords,
                           np.array(edges, dtype=np.int64))


def gradcheck(cfg: Optional[ModelConfig] = None, seed: int = 0, n_nodes: int = 10,
              eps: float = 1e-4, n_graphs: int = 1) -> dict:
    """Max relative error per tensor between analytic and central-difference gradients.

    Relative error of a tensor is ||g_a - g_n|| / max(||g_a||, ||g_n||).
    """
    cfg = cfg or ModelConfig(d=8, h=2, L=1, vocab_size=6)
    rng = np.random.default_rng(seed)
    graphs = [random_graph(rng, n_nodes, cfg.vocab_size) for _ in range(n_graphs)]
    labels = [int((i + 1) % 2) for i in range(n_graphs)]
    params = init_params(cfg, rng)
    # move biases and edge priors off their init values so every path carries gradient
    for k in params:
        if k.endswith("_b"):
            params[k] = rng.uniform(-0.2, 0.2, params[k].shape)
        elif k.endswith(".mu"):
            params[k] = rng.uniform(0.5, 1.5, params[k].shape)
    _, grads = loss_and_grad(params, graphs, labels, cfg)
    report = {}
    for name, p in params.items():
        num = np.zeros_like(p)
        flat, nflat = p.reshape(-1), num.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            lp, _ = loss_and_grad(params, graphs, labels, cfg, need_grad=False)
            flat[i] = old - eps
            lm, _ = loss_and_grad(params, graphs, labels, cfg, need_grad=False)
            flat[i] = old
            nflat[i] = (lp - lm) / (2 * eps)
        a = grads[name]
        denom = max(np.linalg.norm(a), np.linalg.norm(num))
        report[name] = float(np.linalg.norm(a - num) / denom) if denom > 0 else 0.0
    return report
