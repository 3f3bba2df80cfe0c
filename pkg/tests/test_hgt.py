import math

import numpy as np
import pytest
from scipy.special import erf

from g2p.cfront import LabelSet
from g2p.graphrep import EDGE_KIND_ID, FeaturizedGraph, build_graph, encode_features
from g2p.hgt import (
    Adam,
    CheckpointError,
    ConfigError,
    GraphBatch,
    ModelConfig,
    attention_weights,
    check_compatible,
    embed_nodes,
    forward,
    gradcheck,
    init_params,
    load_checkpoint,
    loss_and_grad,
    node_states,
    param_count,
    predict_proba,
    random_graph,
    save_checkpoint,
    split_corpus,
    train,
)
from g2p.hgt.train import history_csv

SMALL = dict(d=8, h=2, L=1, vocab_size=6)


def reference_logits(params, g, cfg):
    """Per-node, per-head evaluation of the attention layers written directly from the update rule."""
    n = g.n_nodes
    H = np.array([params["emb_type"][g.node_kinds[v]] + params["emb_tok"][g.token_ids[v]]
                  + params["emb_ord"][g.order_ids[v]] for v in range(n)])
    dk = cfg.d // cfg.h
    for l in range(cfg.L):
        p = {k.split(".", 1)[1]: v for k, v in params.items() if k.startswith(f"l{l}.")}
        lin = lambda name, x, t: x @ p[f"{name}_w"][t] + p[f"{name}_b"][t]
        new = np.zeros_like(H)
        for t in range(n):
            tau = g.node_kinds[t]
            incoming = [(int(s), int(r)) for s, r, d in g.edges if d == t]
            upd = np.zeros(cfg.d)
            for i in range(cfg.h):
                sl = slice(i * dk, (i + 1) * dk)
                q = lin("q", H[t], tau)[sl]
                scores, msgs = [], []
                for s, r in incoming:
                    k = lin("k", H[s], g.node_kinds[s])[sl]
                    scores.append(k @ p["w_att"][r, i] @ q * p["mu"][r] / math.sqrt(dk))
                    msgs.append(lin("v", H[s], g.node_kinds[s])[sl] @ p["w_msg"][r, i])
                w = np.exp(np.array(scores) - max(scores))
                w /= w.sum()
                upd[sl] = sum(wi * m for wi, m in zip(w, msgs))
            gel = upd * 0.5 * (1 + erf(upd / math.sqrt(2)))
            new[t] = lin("a", gel, tau) + H[t]
        H = new
    r = H.mean(axis=0) if cfg.readout == "mean" else H[g.root]
    return params["cls_w"] @ r + params["cls_b"]


def _graph(kinds, edges, root=0, toks=None):
    n = len(kinds)
    return FeaturizedGraph("g", LabelSet(parallel=True), root, np.array(kinds), np.array(toks or [2] * n),
                           np.zeros(n, dtype=np.int64), np.array(edges, dtype=np.int64).reshape(-1, 3))


class TestConfigAndInit:
    def test_divisibility(self):
        with pytest.raises(ConfigError):
            ModelConfig(d=10, h=4)

    def test_shapes(self):
        cfg = ModelConfig(**SMALL)
        p = init_params(cfg, 0)
        assert p["l0.w_att"].shape == (7, 2, 4, 4) and p["l0.w_msg"][3, 1].shape == (4, 4)
        assert p["l0.k_w"].shape == (17, 8, 8)
        assert sum(v.size for v in p.values()) == param_count(cfg)

    def test_biases_zero_mu_one_glorot(self):
        cfg = ModelConfig(**SMALL)
        p = init_params(cfg, 0)
        assert all(not v.any() for k, v in p.items() if k.endswith("_b"))
        assert np.all(p["l0.mu"] == 1.0)
        assert np.abs(p["l0.q_w"]).max() <= math.sqrt(6 / 16)

    def test_deterministic(self):
        cfg = ModelConfig(**SMALL)
        a, b = init_params(cfg, 5), init_params(cfg, 5)
        assert all(a[k].tobytes() == b[k].tobytes() for k in a)


class TestForward:
    @pytest.mark.parametrize("readout,L", [("mean", 1), ("root", 2), ("mean", 2)])
    def test_matches_reference(self, readout, L):
        cfg = ModelConfig(d=8, h=2, L=L, vocab_size=6, readout=readout)
        rng = np.random.default_rng(L)
        p = init_params(cfg, rng)
        p = {k: v + rng.normal(0, 0.1, v.shape) for k, v in p.items()}
        gs = [random_graph(rng, 7 + i, 6) for i in range(3)]
        batched = forward(p, gs, cfg)
        for g, row in zip(gs, batched):
            assert np.allclose(row, reference_logits(p, g, cfg), atol=1e-10)

    def test_embedding_rows(self):
        cfg = ModelConfig(**SMALL)
        p = {k: np.zeros_like(v) for k, v in init_params(cfg, 0).items()}
        g = _graph([0, 14, 14], [(0, 6, 0), (1, 6, 1), (2, 6, 2)], toks=[0, 3, 3])
        b = GraphBatch([g])
        assert not embed_nodes(p, b).any()
        p = init_params(cfg, 0)
        H = embed_nodes(p, b)
        assert np.array_equal(H[1], H[2])
        p2 = dict(p, emb_tok=p["emb_tok"].copy())
        p2["emb_tok"][3] += 1.0
        H2 = embed_nodes(p2, b)
        assert np.array_equal(H2[0], H[0]) and not np.array_equal(H2[1], H[1])

    def test_embedding_out_of_range(self):
        cfg = ModelConfig(**SMALL)
        g = _graph([0], [(0, 6, 0)], toks=[99])
        with pytest.raises(IndexError):
            forward(init_params(cfg, 0), g, cfg)

    def test_singleton_and_symmetric_attention(self):
        cfg = ModelConfig(**SMALL)
        sl = EDGE_KIND_ID["self_loop"]
        cf = EDGE_KIND_ID["cfg_next"]
        g = _graph([5, 14, 14], [(1, cf, 0), (2, cf, 0), (1, sl, 1), (2, sl, 2)], toks=[0, 3, 3])
        (att,), b = attention_weights(init_params(cfg, 1), g, cfg)
        to0 = b.dst == 0
        assert np.allclose(att[to0], 0.5, atol=1e-15)
        assert np.all(att[~to0] == 1.0)

    def test_identity_messages_and_residual(self):
        cfg = ModelConfig(**SMALL)
        p = init_params(cfg, 2)
        p["l0.w_msg"] = np.broadcast_to(np.eye(4), p["l0.w_msg"].shape).copy()
        g = _graph([3], [(0, EDGE_KIND_ID["self_loop"], 0)])
        H0, H1 = node_states(p, g, cfg)
        v = H0[0] @ p["l0.v_w"][3] + p["l0.v_b"][3]
        gel = v * 0.5 * (1 + erf(v / math.sqrt(2)))
        assert np.allclose(H1[0], gel @ p["l0.a_w"][3] + p["l0.a_b"][3] + H0[0], atol=1e-12)
        p["l0.a_w"][:] = 0
        p["l0.a_b"][:] = 0
        H0, H1 = node_states(p, g, cfg)
        assert np.array_equal(H0, H1)

    def test_zero_messages_bias_path(self):
        cfg = ModelConfig(**SMALL)
        p = init_params(cfg, 2)
        p["l0.w_msg"][:] = 0
        g = random_graph(np.random.default_rng(0), 6, 6)
        H0, H1 = node_states(p, g, cfg)
        a_b = p["l0.a_b"][g.node_kinds]
        assert np.allclose(H1 - H0, a_b, atol=1e-14)

    def test_message_depends_on_edge_type(self):
        cfg = ModelConfig(**SMALL)
        p = init_params(cfg, 3)
        a = _graph([5, 14], [(1, 2, 0), (0, 6, 0), (1, 6, 1)])
        b = _graph([5, 14], [(1, 4, 0), (0, 6, 0), (1, 6, 1)])
        assert not np.allclose(node_states(p, a, cfg)[1][0], node_states(p, b, cfg)[1][0])

    def test_type_sensitivity(self):
        cfg = ModelConfig(**SMALL)
        p = init_params(cfg, 4)
        a = _graph([5, 14], [(1, 2, 0), (0, 6, 0), (1, 6, 1)])
        b = _graph([5, 15], [(1, 2, 0), (0, 6, 0), (1, 6, 1)])
        assert not np.allclose(node_states(p, a, cfg)[1][0], node_states(p, b, cfg)[1][0])

    def test_zero_depth_readout(self):
        cfg = ModelConfig(d=8, h=2, L=0, vocab_size=6, readout="root")
        p = init_params(cfg, 0)
        g = random_graph(np.random.default_rng(1), 5, 6)
        H0 = node_states(p, g, cfg)[0]
        assert np.allclose(forward(p, g, cfg)[0], p["cls_w"] @ H0[g.root] + p["cls_b"])

    def test_constant_probability(self):
        cfg = ModelConfig(**SMALL)
        p = {k: np.zeros_like(v) for k, v in init_params(cfg, 0).items()}
        p["cls_b"] = np.array([0.0, 1.3])
        rng = np.random.default_rng(0)
        probs = predict_proba(p, [random_graph(rng, k, 6) for k in (3, 8, 11)], cfg)
        assert np.allclose(probs, math.exp(1.3) / (1 + math.exp(1.3)))

    def test_finite_outputs_fuzz(self):
        rng = np.random.default_rng(11)
        for trial in range(1000):
            cfg = ModelConfig(d=4, h=2, L=int(rng.integers(1, 3)), vocab_size=4)
            p = {k: rng.uniform(-1, 1, v.shape) for k, v in init_params(cfg, trial).items()}
            g = random_graph(rng, int(rng.integers(1, 9)), 4)
            assert all(np.all(np.isfinite(H)) for H in node_states(p, g, cfg))

    def test_batch_equals_single(self):
        cfg = ModelConfig(**SMALL)
        p = init_params(cfg, 0)
        rng = np.random.default_rng(3)
        gs = [random_graph(rng, k, 6) for k in (4, 9, 6)]
        together = forward(p, gs, cfg)
        alone = np.vstack([forward(p, g, cfg) for g in gs])
        assert np.allclose(together, alone, atol=1e-12)


class TestLoss:
    def test_uniform_logits(self):
        cfg = ModelConfig(**SMALL)
        p = {k: np.zeros_like(v) for k, v in init_params(cfg, 0).items()}
        g = random_graph(np.random.default_rng(0), 5, 6)
        loss, _ = loss_and_grad(p, [g, g], [0, 1], cfg)
        assert loss == pytest.approx(math.log(2))

    def test_confident_correct(self):
        cfg = ModelConfig(**SMALL)
        p = {k: np.zeros_like(v) for k, v in init_params(cfg, 0).items()}
        p["cls_b"] = np.array([0.0, 40.0])
        g = random_graph(np.random.default_rng(0), 5, 6)
        assert loss_and_grad(p, [g], [1], cfg)[0] < 1e-15

    def test_nan_aborts(self):
        cfg = ModelConfig(**SMALL)
        p = init_params(cfg, 0)
        p["cls_b"] = np.array([np.nan, 0.0])
        with pytest.raises(FloatingPointError, match="cls_b"):
            loss_and_grad(p, [random_graph(np.random.default_rng(0), 4, 6)], [1], cfg)

    def test_gradcheck(self):
        report = gradcheck(ModelConfig(**SMALL), seed=0)
        assert max(report.values()) < 1e-4

    def test_gradcheck_two_layers_mean(self):
        report = gradcheck(ModelConfig(d=4, h=2, L=2, vocab_size=6, readout="mean"), seed=1, n_nodes=6)
        assert max(report.values()) < 1e-4


class TestTraining:
    def _graphs(self, n, seed=0):
        rng = np.random.default_rng(seed)
        gs = []
        for i in range(n):
            g = random_graph(rng, int(rng.integers(4, 9)), 6, gid=f"g{i:03d}")
            # positives carry token 5 on every node, which the embeddings can pick up
            g.labels = LabelSet(parallel=bool(i % 2))
            g.token_ids[:] = np.where(g.token_ids == 5, 4, g.token_ids)
            if g.labels.parallel:
                g.token_ids[:] = 5
            gs.append(g)
        return gs

    def test_overfit_single_example(self):
        cfg = ModelConfig(**SMALL, lr=1e-2)
        g = self._graphs(1)[0]
        p = init_params(cfg, 0)
        opt = Adam(p, cfg.lr)
        for _ in range(200):
            loss, grads = loss_and_grad(p, [g], [1], cfg)
            p = opt.step(p, grads)
        assert loss_and_grad(p, [g], [1], cfg)[0] < 0.01

    def test_lr_zero_keeps_params(self):
        cfg = ModelConfig(**SMALL, lr=0.0, epochs=3, seed=1)
        gs = self._graphs(20)
        p0 = init_params(cfg, 9)
        res = train(gs[:16], gs[16:], cfg, params=p0)
        assert all(np.array_equal(p0[k], res.params[k]) for k in p0)

    def test_history_deterministic(self):
        cfg = ModelConfig(**SMALL, epochs=4, seed=3)
        gs = self._graphs(30)
        h1 = history_csv(train(gs[:24], gs[24:], cfg).history)
        h2 = history_csv(train(gs[:24], gs[24:], cfg).history)
        assert h1 == h2
        assert h1.splitlines()[0] == "epoch,train_loss,val_loss,val_acc"
        assert len(h1.splitlines()) == 5

    def test_early_stopping(self):
        cfg = ModelConfig(**SMALL, epochs=100, patience=2, lr=0.0, seed=0)
        gs = self._graphs(12)
        res = train(gs[:8], gs[8:], cfg)
        assert len(res.history) == 3 and res.best_epoch == 1

    def test_empty_split(self):
        with pytest.raises(ConfigError):
            train([], self._graphs(2), ModelConfig(**SMALL))

    def test_learns(self):
        cfg = ModelConfig(**SMALL, epochs=30, seed=0, lr=5e-3)
        gs = self._graphs(80)
        res = train(gs[:64], gs[64:], cfg)
        assert res.history[-1]["val_acc"] >= 0.9 or max(r["val_acc"] for r in res.history) >= 0.9

    def test_split(self):
        gs = self._graphs(50)
        tr, va, te = split_corpus(gs, 42)
        assert (len(tr), len(va), len(te)) == (40, 5, 5)
        ids = [g.id for g in tr + va + te]
        assert len(set(ids)) == 50
        assert [g.id for g in split_corpus(list(reversed(gs)), 42)[0]] == [g.id for g in tr]


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        cfg = ModelConfig(**SMALL)
        p = init_params(cfg, 0)
        path = tmp_path / "m.g2p"
        save_checkpoint(p, cfg, path, vocab={"<interior>": 0, "<unk>": 1}, train_ids=["b", "a"])
        q, cfg2, header = load_checkpoint(path)
        assert cfg2 == cfg and header["train_ids"] == ["a", "b"]
        g = random_graph(np.random.default_rng(0), 8, 6)
        assert forward(p, g, cfg).tobytes() == forward(q, g, cfg2).tobytes()
        raw = path.read_bytes()
        assert raw[:4] == b"G2P1"
        hlen = int.from_bytes(raw[4:8], "little")
        assert len(raw) == 8 + hlen + 4 * param_count(cfg)

    def test_truncated(self, tmp_path):
        cfg = ModelConfig(**SMALL)
        path = tmp_path / "m.g2p"
        save_checkpoint(init_params(cfg, 0), cfg, path)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)
        path.write_bytes(b"G2P1\x05")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.g2p"
        path.write_bytes(b"XXXX" + b"\x00" * 20)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_vocab_mismatch(self):
        cfg = ModelConfig(**SMALL)
        g = encode_features(build_graph("for (i = 0; i < n; i++) a[i] = 0;"), {"a": 50})
        with pytest.raises(CheckpointError, match="vocabulary"):
            check_compatible(cfg, [g])
