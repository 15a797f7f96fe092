import csv
import json

import numpy as np
import pytest

from grafflp.cli import main
from grafflp.graph import build_graph, save_bundle
from grafflp.metrics import GS_CSV_COLUMNS
from grafflp.splits import SplitConfig, save_manifest, transductive_split


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "grid", "--rows", "8", "--cols", "8", "--out", str(d / "bundle")]) == 0
    assert main(["split", "--bundle", str(d / "bundle"), "--out", str(d / "split.json"), "--seed", "2"]) == 0
    (d / "train.cfg").write_text("num_layers = 1\nmax_epochs = 5\n")
    code = main(["train", "--bundle", str(d / "bundle"), "--manifest", str(d / "split.json"),
                 "--out-dir", str(d / "run"), "--config", str(d / "train.cfg"), "--set", "lr=0.001"])
    assert code == 0
    return d


def _eval_args(d):
    return ["--checkpoint", str(d / "run" / "checkpoint.json"),
            "--bundle", str(d / "bundle"), "--manifest", str(d / "split.json")]


def test_synth_chain(tmp_path, capsys):
    assert main(["synth", "chain", "--nodes", "50", "--out", str(tmp_path / "c")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["num_nodes"] == 50 and out["edge_homophily"] < 0.2
    meta = json.loads((tmp_path / "c" / "meta.json").read_text())
    assert meta["num_classes"] == 18


def test_train_outputs(workspace):
    report = json.loads((workspace / "run" / "report.json").read_text())
    assert report["epochs_run"] == 5
    assert report["config"]["lr"] == 0.001 and report["config"]["num_layers"] == 1
    assert 0.0 <= report["test_auroc"] <= 1.0
    ck = json.loads((workspace / "run" / "checkpoint.json").read_text())
    assert ck["meta"]["model_config"]["num_layers"] == 1


def test_eval_reproduces_report(workspace):
    out = workspace / "eval.json"
    assert main(["eval", *_eval_args(workspace), "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    report = json.loads((workspace / "run" / "report.json").read_text())
    assert res["auroc"] == report["test_auroc"]
    assert res["gs_graph"] == "test"


def test_gs_trace(workspace):
    out = workspace / "gs.csv"
    assert main(["gs-trace", *_eval_args(workspace), "--role", "val", "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == GS_CSV_COLUMNS
    assert len(rows) == 3


def test_grid(workspace):
    space = workspace / "space.json"
    space.write_text(json.dumps({"lr": [0.01, 0.001], "batch_norm": [True, False]}))
    (workspace / "base.cfg").write_text("num_layers = 1\nmax_epochs = 2\n")
    code = main(["grid", "--space", str(space), "--bundle", str(workspace / "bundle"),
                 "--manifest", str(workspace / "split.json"), "--out-dir", str(workspace / "grid"),
                 "--config", str(workspace / "base.cfg"), "--budget", "3"])
    assert code == 0
    summary = json.loads((workspace / "grid" / "summary.json").read_text())
    assert len(summary) == 3
    assert len(list((workspace / "grid").glob("run_*.json"))) == 3


def test_bench(workspace, capsys):
    code = main(["bench", "--bundle", str(workspace / "bundle"), "--manifest", str(workspace / "split.json"),
                 "--layers", "1", "3", "--hidden", "16", "--repeats", "2", "--set", "model=gcn"])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split("\t")[:4] == ["model", "num_layers", "hidden_dim", "params"]
    assert len(lines) == 3


def test_validation_errors_exit_2(workspace, tmp_path):
    assert main(["split", "--bundle", str(tmp_path / "missing"), "--out", str(tmp_path / "s.json")]) == 2
    (tmp_path / "bad.cfg").write_text("lr = 0.5\n")
    args = ["train", "--bundle", str(workspace / "bundle"), "--manifest", str(workspace / "split.json"),
            "--out-dir", str(tmp_path / "r")]
    assert main(args + ["--config", str(tmp_path / "bad.cfg")]) == 2
    assert main(args + ["--set", "bogus=1"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exit_3(tmp_path):
    g = build_graph([(i, i + 1) for i in range(29)], np.full((30, 2), 1e300), np.zeros(30))
    save_bundle(g, tmp_path / "b")
    save_manifest(transductive_split(g, SplitConfig(seed=0)), tmp_path / "s.json")
    code = main(["train", "--bundle", str(tmp_path / "b"), "--manifest", str(tmp_path / "s.json"),
                 "--out-dir", str(tmp_path / "r"), "--set", "num_layers=1"])
    assert code == 3


def test_thread_env(workspace, monkeypatch):
    monkeypatch.setenv("GRAFFLP_NUM_THREADS", "1")
    assert main(["eval", *_eval_args(workspace), "--out", str(workspace / "e1.json")]) == 0
