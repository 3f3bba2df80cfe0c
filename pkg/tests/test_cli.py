import json

import pytest

from g2p.cli import load_train_config, main

FIXTURE_C = """\
#include <stdio.h>
double a[100], b[100];
int main(void) {
  int i; double s = 0;
#pragma omp parallel for
  for (i = 0; i < 100; i++) a[i] = b[i] * 2;
#pragma omp parallel for reduction(+:s)
  for (i = 0; i < 100; i++) s += a[i];
  for (i = 1; i < 100; i++) a[i] = a[i - 1] + 1;
  return 0;
}
"""


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--variants", "2", "--nonparallel", "28", "--seed", "3", "--out", str(d / "corpus")]) == 0
    assert main(["extract", "--in", str(d / "corpus"), "--manifest", str(d / "corpus" / "manifest.json"),
                 "--out", str(d / "loops.jsonl")]) == 0
    assert main(["graph", "--in", str(d / "loops.jsonl"), "--out", str(d / "graphs.jsonl")]) == 0
    assert main(["train", "--in", str(d / "graphs.jsonl"), "--vocab", str(d / "vocab.json"), "--out",
                 str(d / "par.g2p"), "--epochs", "2", "--d", "8", "--h", "2", "--L", "1",
                 "--history", str(d / "hist.csv"), "--test-out", str(d / "test.jsonl")]) == 0
    return d


def test_synth_outputs(pipeline):
    manifest = json.loads((pipeline / "corpus" / "manifest.json").read_text())
    assert len(manifest["entries"]) == 2 * 20 + 28


def test_extract_counts(pipeline):
    lines = (pipeline / "loops.jsonl").read_text().splitlines()
    assert len(lines) == 68


def test_train_outputs(pipeline):
    report = json.loads((pipeline / "par.g2p.json").read_text())
    assert report["epochs_run"] == 2
    assert report["n_train"] + report["n_val"] + report["n_test"] == 68
    assert (pipeline / "hist.csv").read_text().startswith("epoch,train_loss,val_loss,val_acc")


def test_eval(pipeline, capsys):
    out = pipeline / "eval.json"
    assert main(["eval", "--model", str(pipeline / "par.g2p"), "--in", str(pipeline / "test.jsonl"),
                 "--out", str(out), "--csv", str(pipeline / "eval.csv")]) == 0
    js = json.loads(out.read_text())
    assert sum(js["counts"].values()) == js["n"]
    assert "Accuracy(%)" in capsys.readouterr().out


def test_eval_overlap_refused(pipeline, capsys):
    assert main(["eval", "--model", str(pipeline / "par.g2p"), "--in", str(pipeline / "graphs.jsonl")]) == 1
    assert "used in training" in capsys.readouterr().err


def test_predict(pipeline, tmp_path):
    src = tmp_path / "k.c"
    src.write_text("int main(){ for (i = 0; i < n; i++) { a[i] = i * 2; sum += i; } }")
    out = tmp_path / "s.json"
    assert main(["predict", "--model", f"parallel={pipeline / 'par.g2p'}", "--in", str(src), "--out", str(out)]) == 0
    sug = json.loads(out.read_text())
    assert 0.0 <= sug["parallel_prob"] <= 1.0
    assert (sug["suggested_pragma"] is None) == (sug["parallel_prob"] < 0.5)


def test_predict_bad_model_spec(pipeline, tmp_path):
    src = tmp_path / "k.c"
    src.write_text("int main(){ for (i = 0; i < n; i++) a[i] = 0; }")
    assert main(["predict", "--model", str(pipeline / "par.g2p"), "--in", str(src)]) == 1


def test_stats(pipeline, tmp_path):
    out = tmp_path / "stats.json"
    assert main(["stats", "--in", str(pipeline / "loops.jsonl"), "--out", str(out)]) == 0
    table = json.loads(out.read_text())
    assert table["reduction"]["loops"] == 20 and table["non_parallel"]["loops"] == 28


def test_extract_pragmas(tmp_path):
    src = tmp_path / "f.c"
    src.write_text(FIXTURE_C)
    out = tmp_path / "l.jsonl"
    assert main(["extract", "--in", str(src), "--out", str(out)]) == 0
    rows = [json.loads(x) for x in out.read_text().splitlines()]
    assert [r["labels"]["parallel"] for r in rows] == [True, True, False]
    assert rows[1]["labels"]["reduction"] and [r["id"] for r in rows] == ["f.c:0", "f.c:1", "f.c:2"]


def test_gradcheck(tmp_path):
    out = tmp_path / "g.json"
    assert main(["gradcheck", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["max"] < 1e-4


def test_missing_input_is_user_error(tmp_path, capsys):
    assert main(["stats", "--in", str(tmp_path / "nope.jsonl")]) == 1
    assert "nope.jsonl" in capsys.readouterr().err


def test_usage_error():
    assert main(["train"]) == 1
    assert main(["frobnicate"]) == 1


def test_bad_checkpoint(tmp_path):
    bad = tmp_path / "bad.g2p"
    bad.write_bytes(b"nope")
    g = tmp_path / "g.jsonl"
    g.write_text("")
    assert main(["eval", "--model", str(bad), "--in", str(g)]) == 1


def test_config_file(tmp_path):
    cfg = tmp_path / "t.ini"
    cfg.write_text("d = 16\nh = 2\nlr = 0.01\nreadout = root\n")
    assert load_train_config(cfg) == {"d": 16, "h": 2, "lr": 0.01, "readout": "root"}
    cfg.write_text("[model]\nbogus = 1\n")
    with pytest.raises(Exception, match="bogus"):
        load_train_config(cfg)


def test_invalid_config_exit(pipeline, tmp_path):
    cfg = tmp_path / "t.ini"
    cfg.write_text("d = 10\nh = 4\n")
    assert main(["train", "--in", str(pipeline / "graphs.jsonl"), "--vocab", str(pipeline / "vocab.json"),
                 "--config", str(cfg), "--out", str(tmp_path / "m.g2p")]) == 1
