"""Heterogeneous Graph Transformer on featurized loop graphs.

Graphs are processed as disjoint-union batches. Every quantity attached to an
edge is stored in destination-sorted edge order, so per-target sums are
``np.add.reduceat`` calls over contiguous segments.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from ..cfront import LABEL_NAMES
from ..graphrep import EDGE_KINDS, N_ORDER_BUCKETS, NODE_KINDS, FeaturizedGraph

LINEARS = ("k", "q", "v", "a")


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    d: int = 64
    h: int = 4
    L: int = 2
    n_node_types: int = len(NODE_KINDS)
    n_edge_types: int = len(EDGE_KINDS)
    vocab_size: int = 2
    n_order_buckets: int = N_ORDER_BUCKETS
    lr: float = 1e-3
    epochs: int = 100
    seed: int = 0
    task: str = "parallel"
    readout: str = "mean"  # or "root"
    batch_size: int = 8
    patience: int = 10
    min_delta: float = 1e-4  # smallest validation-loss drop that resets patience

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("d", "h", "n_node_types", "n_edge_types", "vocab_size", "n_order_buckets",
                     "batch_size", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.L < 0 or self.epochs < 0:
            raise ConfigError("L and epochs must be >= 0")
        if self.d % self.h:
            raise ConfigError(f"d={self.d} is not divisible by h={self.h}")
        if self.lr < 0 or self.min_delta < 0:
            raise ConfigError("lr and min_delta must be >= 0")
        if self.task not in LABEL_NAMES:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.readout not in ("root", "mean"):
            raise ConfigError(f"unknown readout {self.readout!r}")

    @property
    def dk(self) -> int:
        return self.d // self.h

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name: f.type for f in fields(cls)}
        bad = set(d) - set(known)
        if bad:
            raise ConfigError(f"unknown config keys {sorted(bad)}")
        return cls(**d)


def param_shapes(cfg: ModelConfig) -> dict:
    """Name -> shape, in checkpoint order."""
    T, R, d, h, dk = cfg.n_node_types, cfg.n_edge_types, cfg.d, cfg.h, cfg.dk
    shapes = {
        "emb_type": (T, d),
        "emb_tok": (cfg.vocab_size, d),
        "emb_ord": (cfg.n_order_buckets, d),
    }
    for l in range(cfg.L):
        for name in LINEARS:
            shapes[f"l{l}.{name}_w"] = (T, d, d)
            shapes[f"l{l}.{name}_b"] = (T, d)
        shapes[f"l{l}.w_att"] = (R, h, dk, dk)
        shapes[f"l{l}.w_msg"] = (R, h, dk, dk)
        shapes[f"l{l}.mu"] = (R,)
    shapes["cls_w"] = (2, d)
    shapes["cls_b"] = (2,)
    return shapes


def param_count(cfg: ModelConfig) -> int:
    return int(sum(np.prod(s) for s in param_shapes(cfg).values()))


def to_float32_grid(params: dict) -> dict:
    """Round every tensor to the nearest float32 value (kept as float64)."""
    return {k: v.astype(np.float32).astype(np.float64) for k, v in params.items()}


def init_params(cfg: ModelConfig, rng=None) -> dict:
    """Glorot-uniform weights, zero biases and unit edge priors."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape)
        elif name.endswith(".mu"):
            params[name] = np.ones(shape)
        else:
            fan_in, fan_out = shape[-2], shape[-1]
            a = math.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-a, a, size=shape)
    return to_float32_grid(params)


# --------------------------------------------------------------------------
# batching

class GraphBatch:
    """Disjoint union of featurized graphs with precomputed index structure."""

    def __init__(self, graphs: Sequence[FeaturizedGraph], n_edge_types: int = len(EDGE_KINDS)):
        if not graphs:
            raise ValueError("empty batch")
        sizes = np.array([g.n_nodes for g in graphs], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.n_graphs = len(graphs)
        self.n = int(sizes.sum())
        self.sizes = sizes
        self.kinds = np.concatenate([np.asarray(g.node_kinds, dtype=np.int64) for g in graphs])
        self.toks = np.concatenate([np.asarray(g.token_ids, dtype=np.int64) for g in graphs])
        self.ords = np.concatenate([np.asarray(g.order_ids, dtype=np.int64) for g in graphs])
        self.roots = np.array([g.root for g in graphs], dtype=np.int64) + offsets
        self.graph_of = np.repeat(np.arange(len(graphs)), sizes)
        edges = np.concatenate([np.asarray(g.edges, dtype=np.int64).reshape(-1, 3)
                                + np.array([o, 0, o]) for g, o in zip(graphs, offsets)])
        order = np.lexsort((edges[:, 1], edges[:, 0], edges[:, 2]))
        edges = edges[order]
        self.src, self.rel, self.dst = edges[:, 0], edges[:, 1], edges[:, 2]
        self.n_edges = len(edges)

        in_count = np.bincount(self.dst, minlength=self.n)
        self.has_in = in_count > 0
        self.dst_starts = (np.cumsum(in_count) - in_count)[self.has_in]
        self.src_perm = np.argsort(self.src, kind="stable")
        out_count = np.bincount(self.src, minlength=self.n)
        self.has_out = out_count > 0
        self.src_starts = (np.cumsum(out_count) - out_count)[self.has_out]

        self.type_groups = [(int(t), np.flatnonzero(self.kinds == t)) for t in np.unique(self.kinds)]
        self.rel_groups = [(r, np.flatnonzero(self.rel == r)) for r in range(n_edge_types)
                           if np.any(self.rel == r)]

    def sum_to_dst(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros((self.n,) + x.shape[1:])
        if self.n_edges:
            out[self.has_in] = np.add.reduceat(x, self.dst_starts, axis=0)
        return out

    def max_to_dst(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros((self.n,) + x.shape[1:])
        if self.n_edges:
            out[self.has_in] = np.maximum.reduceat(x, self.dst_starts, axis=0)
        return out

    def sum_to_src(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros((self.n,) + x.shape[1:])
        if self.n_edges:
            out[self.has_out] = np.add.reduceat(x[self.src_perm], self.src_starts, axis=0)
        return out


def as_batch(graphs, cfg: ModelConfig) -> GraphBatch:
    if isinstance(graphs, GraphBatch):
        return graphs
    if isinstance(graphs, FeaturizedGraph):
        graphs = [graphs]
    return GraphBatch(list(graphs), cfg.n_edge_types)


# --------------------------------------------------------------------------
# building blocks

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x):
    return x * ndtr(x)


def gelu_grad(x):
    return ndtr(x) + x * np.exp(-0.5 * x * x) * _INV_SQRT_2PI


def _typed_linear(X, W, b, groups):
    out = np.empty((X.shape[0], W.shape[2]))
    for t, idx in groups:
        out[idx] = X[idx] @ W[t] + b[t]
    return out


def _typed_linear_back(X, W, dY, groups):
    dW = np.zeros_like(W)
    db = np.zeros((W.shape[0], W.shape[2]))
    dX = np.empty((X.shape[0], W.shape[1]))
    for t, idx in groups:
        dW[t] = X[idx].T @ dY[idx]
        db[t] = dY[idx].sum(axis=0)
        dX[idx] = dY[idx] @ W[t].T
    return dW, db, dX


def _per_head(x, W, idx):
    # x: (E, h, dk), W: (h, dk, dk) -> (E, h, dk)
    return np.matmul(x[idx].transpose(1, 0, 2), W).transpose(1, 0, 2)


def embed_nodes(params: dict, batch: GraphBatch) -> np.ndarray:
    for name, ids in (("emb_type", batch.kinds), ("emb_tok", batch.toks), ("emb_ord", batch.ords)):
        if ids.size and (ids.min() < 0 or ids.max() >= params[name].shape[0]):
            raise IndexError(f"{name} index out of range (vocabulary or graph mismatch)")
    return params["emb_type"][batch.kinds] + params["emb_tok"][batch.toks] + params["emb_ord"][batch.ords]


def _layer_forward(params: dict, l: int, H: np.ndarray, b: GraphBatch, cfg: ModelConfig):
    p = lambda n: params[f"l{l}.{n}"]
    h, dk = cfg.h, cfg.dk
    N = H.shape[0]
    K = _typed_linear(H, p("k_w"), p("k_b"), b.type_groups)
    Q = _typed_linear(H, p("q_w"), p("q_b"), b.type_groups)
    V = _typed_linear(H, p("v_w"), p("v_b"), b.type_groups)
    ks = K.reshape(N, h, dk)[b.src]
    qt = Q.reshape(N, h, dk)[b.dst]
    vs = V.reshape(N, h, dk)[b.src]
    kW = np.empty_like(ks)
    msg = np.empty_like(vs)
    w_att, w_msg = p("w_att"), p("w_msg")
    for r, idx in b.rel_groups:
        kW[idx] = _per_head(ks, w_att[r], idx)
        msg[idx] = _per_head(vs, w_msg[r], idx)
    raw = (kW * qt).sum(axis=-1)  # (E, h)
    scale = p("mu")[b.rel] / math.sqrt(dk)
    score = raw * scale[:, None]
    ex = np.exp(score - b.max_to_dst(score)[b.dst])
    att = ex / b.sum_to_dst(ex)[b.dst]
    agg = b.sum_to_dst(att[:, :, None] * msg).reshape(N, cfg.d)
    G = gelu(agg)
    out = _typed_linear(G, p("a_w"), p("a_b"), b.type_groups) + H
    cache = dict(H=H, ks=ks, qt=qt, vs=vs, kW=kW, msg=msg, raw=raw, scale=scale,
                 att=att, agg=agg, G=G)
    return out, cache


def _layer_backward(params: dict, l: int, dOut: np.ndarray, c: dict, b: GraphBatch,
                    cfg: ModelConfig, grads: dict) -> np.ndarray:
    p = lambda n: params[f"l{l}.{n}"]
    h, dk, N = cfg.h, cfg.dk, dOut.shape[0]
    H = c["H"]
    dH = dOut.copy()
    grads[f"l{l}.a_w"], grads[f"l{l}.a_b"], dG = _typed_linear_back(c["G"], p("a_w"), dOut, b.type_groups)
    dagg = (dG * gelu_grad(c["agg"])).reshape(N, h, dk)[b.dst]
    att, msg = c["att"], c["msg"]
    dmsg = att[:, :, None] * dagg
    datt = (msg * dagg).sum(axis=-1)
    dscore = att * (datt - b.sum_to_dst(att * datt)[b.dst])
    draw = dscore * c["scale"][:, None]
    dscale = (dscore * c["raw"]).sum(axis=-1)
    grads[f"l{l}.mu"] = np.bincount(b.rel, weights=dscale, minlength=cfg.n_edge_types) / math.sqrt(dk)
    dkW = draw[:, :, None] * c["qt"]
    dqt = draw[:, :, None] * c["kW"]
    w_att, w_msg = p("w_att"), p("w_msg")
    dw_att, dw_msg = np.zeros_like(w_att), np.zeros_like(w_msg)
    dks, dvs = np.empty_like(dkW), np.empty_like(dmsg)
    ks, vs = c["ks"], c["vs"]
    for r, idx in b.rel_groups:
        dw_att[r] = np.matmul(ks[idx].transpose(1, 2, 0), dkW[idx].transpose(1, 0, 2))
        dks[idx] = _per_head(dkW, w_att[r].transpose(0, 2, 1), idx)
        dw_msg[r] = np.matmul(vs[idx].transpose(1, 2, 0), dmsg[idx].transpose(1, 0, 2))
        dvs[idx] = _per_head(dmsg, w_msg[r].transpose(0, 2, 1), idx)
    grads[f"l{l}.w_att"], grads[f"l{l}.w_msg"] = dw_att, dw_msg
    dK = b.sum_to_src(dks).reshape(N, cfg.d)
    dV = b.sum_to_src(dvs).reshape(N, cfg.d)
    dQ = b.sum_to_dst(dqt).reshape(N, cfg.d)
    for name, dY in (("k", dK), ("q", dQ), ("v", dV)):
        dW, db, dX = _typed_linear_back(H, p(f"{name}_w"), dY, b.type_groups)
        grads[f"l{l}.{name}_w"], grads[f"l{l}.{name}_b"] = dW, db
        dH += dX
    return dH


def _readout(H: np.ndarray, b: GraphBatch, cfg: ModelConfig) -> np.ndarray:
    if cfg.readout == "root":
        return H[b.roots]
    sums = np.zeros((b.n_graphs, H.shape[1]))
    np.add.at(sums, b.graph_of, H)
    return sums / b.sizes[:, None]


def _forward(params: dict, b: GraphBatch, cfg: ModelConfig):
    H = embed_nodes(params, b)
    caches = []
    for l in range(cfg.L):
        H, cache = _layer_forward(params, l, H, b, cfg)
        caches.append(cache)
    R = _readout(H, b, cfg)
    logits = R @ params["cls_w"].T + params["cls_b"]
    return logits, R, caches


def forward(params: dict, graphs, cfg: ModelConfig) -> np.ndarray:
    """Logits of shape (n_graphs, 2)."""
    return _forward(params, as_batch(graphs, cfg), cfg)[0]


def node_states(params: dict, graphs, cfg: ModelConfig) -> list:
    """H[0..L] for every node of the batch."""
    b = as_batch(graphs, cfg)
    H = embed_nodes(params, b)
    out = [H]
    for l in range(cfg.L):
        H, _ = _layer_forward(params, l, H, b, cfg)
        out.append(H)
    return out


def attention_weights(params: dict, graphs, cfg: ModelConfig):
    """Per-layer attention of shape (E, h) and the batch they refer to."""
    b = as_batch(graphs, cfg)
    H = embed_nodes(params, b)
    atts = []
    for l in range(cfg.L):
        H, cache = _layer_forward(params, l, H, b, cfg)
        atts.append(cache["att"])
    return atts, b


def softmax2(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_proba(params: dict, graphs, cfg: ModelConfig) -> np.ndarray:
    return softmax2(forward(params, graphs, cfg))[:, 1]


def loss_and_grad(params: dict, graphs, labels, cfg: ModelConfig, need_grad: bool = True):
    """Mean cross-entropy over the batch and its gradient for every tensor."""
    b = as_batch(graphs, cfg)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (b.n_graphs,):
        raise ValueError("one label per graph required")
    logits, R, caches = _forward(params, b, cfg)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-logp[np.arange(len(y)), y].mean())
    if not math.isfinite(loss):
        bad = [k for k, v in params.items() if not np.all(np.isfinite(v))]
        raise FloatingPointError(f"non-finite loss {loss}; non-finite tensors: {bad or 'none'}; "
                                 f"logit range [{logits.min()}, {logits.max()}]")
    if not need_grad:
        return loss, None
    dlogits = np.exp(logp)
    dlogits[np.arange(len(y)), y] -= 1.0
    dlogits /= len(y)
    grads = {"cls_w": dlogits.T @ R, "cls_b": dlogits.sum(axis=0)}
    dR = dlogits @ params["cls_w"]
    dH = np.zeros((b.n, cfg.d))
    if cfg.readout == "root":
        dH[b.roots] += dR
    else:
        dH += dR[b.graph_of] / b.sizes[b.graph_of][:, None]
    for l in reversed(range(cfg.L)):
        dH = _layer_backward(params, l, dH, caches[l], b, cfg, grads)
    for name, ids in (("emb_type", b.kinds), ("emb_tok", b.toks), ("emb_ord", b.ords)):
        g = np.zeros_like(params[name])
        np.add.at(g, ids, dH)
        grads[name] = g
    return loss, grads
