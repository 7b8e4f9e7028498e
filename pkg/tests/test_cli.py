import json
import subprocess
import sys

import numpy as np
import pytest

from mrdnn import cli, load_dataset
from mrdnn.cli import OPTIONS, main, sub_seeds
from mrdnn.graph import load_graph
from mrdnn.network import load_network
from mrdnn.trainer import read_metrics


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.setenv("MRDNN_WORKDIR", str(tmp_path))
    return tmp_path


def run(*args):
    assert main(list(args)) == 0


def error_of(capsys, *args):
    code = main(list(args))
    assert code != 0
    lines = capsys.readouterr().err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


SMALL_TRAIN = ("--hidden", "8,3", "--epochs", "2", "--batch-size", "16", "--lr0", "0.05")


def pipeline(work):
    run("gen", "--out", "d.bin", "--n-per-class", "20")
    run("graph", "--data", "d.bin", "--rho", "median", "--out", "g.bin")
    run("train", "--data", "d.bin", "--graph", "g.bin", *SMALL_TRAIN, "--out", "m.ckpt")
    run("train", "--data", "d.bin", "--gamma2", "0", *SMALL_TRAIN, "--out", "b.ckpt")


def test_gen_and_graph(work):
    run("gen", "--out", "d.bin", "--n-per-class", "15", "--kind", "two-arcs", "--seed", "3")
    ds = load_dataset(work / "d.bin")
    assert (ds.n, ds.dim) == (30, 2)
    run("graph", "--data", "d.bin", "--k", "4", "--out", "g.bin")
    g = load_graph(work / "g.bin")
    assert (g.k, g.rho, g.n) == (4, 1000.0, 30)
    manifest = json.loads((work / "g.bin.manifest.json").read_text())
    assert manifest["command"] == "graph"
    assert manifest["config"]["k"] == 4 and manifest["config"]["threads"] == 1
    assert manifest["inputs"]["data"]["sha256"]


def test_gen_splice(work):
    run("gen", "--out", "d.csv", "--format", "csv", "--kind", "gaussian-clusters", "--dim", "3",
        "--n-per-class", "4", "--splice", "5")
    assert load_dataset(work / "d.csv").dim == 15


def test_train_outputs_and_defaults(work):
    pipeline(work)
    net = load_network(work / "m.ckpt")
    assert net.sizes == [10, 8, 3, 2] and net.bottleneck_index == 2
    recs = read_metrics(work / "m.ckpt.metrics.jsonl")
    assert len(recs) == 2 and all(r.manifold_active for r in recs)
    cfg = json.loads((work / "m.ckpt.manifest.json").read_text())["config"]
    assert (cfg["gamma1"], cfg["gamma2"], cfg["lr_decay"]) == (1e-4, 1e-3, 0.9)
    assert "seconds" not in (work / "m.ckpt.metrics.jsonl").read_text()


def test_default_hyperparameters_in_option_table():
    train = {name: default for name, _, default, _ in OPTIONS["train"]}
    assert (train["gamma1"], train["gamma2"], train["lr0"], train["epochs"]) == (1e-4, 1e-3, 1e-3, 40)
    graph = {name: default for name, _, default, _ in OPTIONS["graph"]}
    assert (graph["k"], graph["rho"]) == (10, 1000.0)


def test_extract_diagnose_compare(work):
    pipeline(work)
    run("extract", "--checkpoint", "m.ckpt", "--data", "d.bin", "--components", "2", "--out", "f.bin")
    assert load_dataset(work / "f.bin").dim == 2
    assert (work / "f.bin.pca").exists()
    run("diagnose", "--checkpoint", "m.ckpt", "--data", "d.bin", "--graph", "g.bin", "--bins", "3",
        "--csv", "p.csv", "--out", "diag.jsonl")
    kinds = [json.loads(l)["record"] for l in (work / "diag.jsonl").read_text().splitlines()]
    assert kinds == ["profile", "scatter"]
    run("compare", "--checkpoint-a", "b.ckpt", "--metrics-a", "b.ckpt.metrics.jsonl", "--checkpoint-b", "m.ckpt",
        "--metrics-b", "m.ckpt.metrics.jsonl", "--data", "d.bin", "--bins", "3", "--out", "cmp.jsonl")
    recs = [json.loads(l) for l in (work / "cmp.jsonl").read_text().splitlines()]
    assert [r["record"] for r in recs] == ["bins", "run", "run", "delta"]


def test_diagnose_audit(work):
    run("gen", "--out", "t.bin", "--n-per-class", "4", "--kind", "gaussian-clusters", "--noise", "3")
    run("graph", "--data", "t.bin", "--k", "2", "--out", "t.g")
    run("train", "--data", "t.bin", "--graph", "t.g", "--hidden", "3", "--epochs", "1", "--out", "t.ckpt")
    run("diagnose", "--checkpoint", "t.ckpt", "--data", "t.bin", "--graph", "t.g", "--audit", "true",
        "--bins", "2", "--out", "a.jsonl")
    audit = json.loads((work / "a.jsonl").read_text().splitlines()[-1])
    assert audit["record"] == "audit" and audit["max_rel_error"] < 1e-6


def test_flags_override_config(work):
    (work / "c.json").write_text(json.dumps({"n_per_class": 7, "noise": 0.0, "kind": "gaussian-clusters"}))
    run("gen", "--config", "c.json", "--n-per-class", "3", "--out", "d.bin")
    ds = load_dataset(work / "d.bin")
    assert ds.n == 6
    np.testing.assert_array_equal(ds.vectors[:3], 0.0)


def test_missing_graph_names_path(work, capsys):
    run("gen", "--out", "d.bin", "--n-per-class", "5")
    err = error_of(capsys, "train", "--data", "d.bin", "--graph", "nowhere.g", "--out", "x.ckpt")
    assert "nowhere.g" in err["error"] and err["command"] == "train"


def test_manifold_without_graph(work, capsys):
    run("gen", "--out", "d.bin", "--n-per-class", "5")
    err = error_of(capsys, "train", "--data", "d.bin", "--out", "x.ckpt")
    assert "--graph" in err["error"]


def test_errors_are_single_json_lines(work, capsys):
    assert error_of(capsys, "train", "--lr0", "abc", "--data", "d", "--out", "o")["type"] == "ConfigError"
    assert "unrecognized" in error_of(capsys, "gen", "--bogus", "1")["error"]
    (work / "bad.csv").write_text("1,2,0\n1,nan,1\n")
    err = error_of(capsys, "graph", "--data", "bad.csv", "--out", "g")
    assert err["module"] == "dataio" and "row 2" in err["error"]
    run("gen", "--out", "d.bin", "--n-per-class", "5")
    err = error_of(capsys, "graph", "--data", "d.bin", "--rho", "-1", "--out", "g")
    assert "rho" in err["error"]


def test_unknown_config_key(work, capsys):
    (work / "c.json").write_text(json.dumps({"colour": 1}))
    assert "colour" in error_of(capsys, "gen", "--config", "c.json", "--out", "d.bin")["error"]


def test_sub_seeds_stable_and_distinct():
    a = sub_seeds(5, ("init", "shuffle"))
    assert a == sub_seeds(5, ("shuffle", "init"))
    assert a["init"] != a["shuffle"]
    assert a != sub_seeds(6, ("init", "shuffle"))


@pytest.mark.parametrize("cmd", list(OPTIONS))
def test_help_lists_every_default(cmd, capsys):
    with pytest.raises(SystemExit) as info:
        main([cmd, "--help"])
    assert info.value.code == 0
    text = " ".join(capsys.readouterr().out.split())
    for name, _, default, _ in OPTIONS[cmd] + cli.COMMON:
        assert "--" + name.replace("_", "-") in text
    assert text.count("(default:") >= len(OPTIONS[cmd]) + len(cli.COMMON)


def test_console_script_entry(work):
    out = subprocess.run([sys.executable, "-m", "mrdnn.cli", "gen", "--out", "e.bin", "--n-per-class", "2"],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert (work / "e.bin.manifest.json").exists()
