import json

import numpy as np
import pytest

from condfilter.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, dispatch
from condfilter.data import EmbeddingSet, RunReport, load_embeddings, read_selection, save_embeddings, save_labels
from condfilter.synth import shift_benchmark


@pytest.fixture
def files(tmp_path, rng):
    source = EmbeddingSet(np.vstack([rng.standard_normal((150, 3)) + 4, rng.standard_normal((150, 3)) - 4]))
    target = EmbeddingSet(rng.standard_normal((60, 3)) + 4)
    save_embeddings(source, tmp_path / "source.emb")
    save_embeddings(target, tmp_path / "target.emb")
    labels = (target.data[:, 1] > 4).astype(np.int32)
    save_labels(labels, tmp_path / "target.lbl")
    return tmp_path


def run(*argv):
    return dispatch([str(a) for a in argv])


def test_filter_cluster_end_to_end(files):
    out, rep = files / "sel.txt", files / "rep.json"
    code = run("filter", "cluster", "--source", files / "source.emb", "--target", files / "target.emb",
               "--budget", 100, "--k", 5, "--out", out, "--report", rep)
    assert code == EXIT_OK
    sel = read_selection(out)
    assert sel.shape == (100,) and np.all(np.diff(sel) > 0)
    assert (sel < 150).mean() > 0.95
    report = RunReport.from_text(rep.read_text())
    assert report.method == "cluster_min" and report.selected_count == 100 and report.seed == 42
    assert len(report.input_digests) == 2


def test_output_independent_of_threads(files):
    outs = []
    for t in (1, 4):
        out = files / f"sel{t}.txt"
        assert run("filter", "cluster", "--source", files / "source.emb", "--target", files / "target.emb",
                   "--budget", 50, "--k", 4, "--agg", "avg", "--out", out, "--threads", t) == EXIT_OK
        outs.append(out.read_bytes())
        km = files / f"c{t}.emb"
        assert run("kmeans", "--target", files / "target.emb", "--k", 4, "--out", km, "--threads", t) == EXIT_OK
        outs.append(km.read_bytes())
    assert outs[0] == outs[2] and outs[1] == outs[3]


def test_reuse_centers(files):
    assert run("kmeans", "--target", files / "target.emb", "--k", 3, "--out", files / "c.emb") == EXIT_OK
    assert load_embeddings(files / "c.emb").count == 3
    assert run("filter", "cluster", "--source", files / "source.emb", "--target", files / "target.emb",
               "--budget", 10, "--centers", files / "c.emb", "--out", files / "s.txt") == EXIT_OK


def test_filter_domain_and_entropy(files):
    common = ["--source", files / "source.emb", "--target", files / "target.emb", "--budget", 40]
    assert run("filter", "domain", *common, "--out", files / "d.txt",
               "--classifier-out", files / "clf.json") == EXIT_OK
    assert (read_selection(files / "d.txt") < 150).all()
    assert json.loads((files / "clf.json").read_text())["kind"] == "logistic"
    for mode in ("active", "inverse"):
        out = files / f"e_{mode}.txt"
        assert run("filter", "entropy", *common, "--target-labels", files / "target.lbl", "--mode", mode,
                   "--epochs", 50, "--out", out, "--report", files / f"{mode}.json") == EXIT_OK
        assert read_selection(out).shape == (40,)
    assert RunReport.from_text((files / "inverse.json").read_text()).method == "entropy_inverse"


def test_budget_clamp_is_not_an_error(files):
    assert run("filter", "cluster", "--source", files / "target.emb", "--target", files / "target.emb",
               "--budget", 1000, "--k", 2, "--out", files / "s.txt", "--report", files / "r.json") == EXIT_OK
    assert read_selection(files / "s.txt").shape == (60,)
    assert "budget_clamped" in RunReport.from_text((files / "r.json").read_text()).warnings


def test_csv_input(files):
    (files / "t.csv").write_text("1,2\n3,4\n5,6\n")
    assert run("kmeans", "--target", files / "t.csv", "--format", "csv", "--k", 1, "--out", files / "c.emb") == 0
    np.testing.assert_allclose(load_embeddings(files / "c.emb").data, [[3, 4]])


def test_usage_errors(files):
    assert run() == EXIT_USAGE
    assert run("filter", "cluster", "--source", files / "source.emb") == EXIT_USAGE
    assert run("filter", "cluster", "--source", "a", "--target", "b", "--budget", 0, "--out", "c") == EXIT_USAGE
    assert run("filter", "cluster", "--source", "a", "--target", "b", "--budget", 1, "--out", "c",
               "--agg", "max") == EXIT_USAGE
    assert run("frobnicate") == EXIT_USAGE


def test_data_errors(files):
    (files / "bad.emb").write_bytes(b"NOPE0000")
    assert run("kmeans", "--target", files / "bad.emb", "--k", 1, "--out", files / "c.emb") == EXIT_DATA
    assert run("kmeans", "--target", files / "missing.emb", "--k", 1, "--out", files / "c.emb") == EXIT_DATA
    assert run("kmeans", "--target", files / "target.emb", "--k", 999, "--out", files / "c.emb") == EXIT_DATA
    assert run("cost", "calibrate", "--obs", "1000,10,224,5", "--out", files / "p.json") == EXIT_DATA


def test_cost_commands(files, capsys):
    assert run("cost", "--images", 1281167, "--epochs", 90, "--resolution", 224) == EXIT_OK
    assert "hours=170.00" in capsys.readouterr().out
    assert run("cost", "estimate", "--images", 150000, 1281167, "--epochs", 90,
               "--resolution", 112, 224) == EXIT_OK
    assert len(capsys.readouterr().out.strip().splitlines()) == 5
    assert run("cost", "calibrate", "--obs", "1281167,90,224,170", "--obs", "1281167,90,112,100",
               "--out", files / "p.json") == EXIT_OK
    assert run("cost", "estimate", "--profile", files / "p.json", "--images", 1281167, "--epochs", 90,
               "--resolution", 112) == EXIT_OK
    assert "hours=100.00" in capsys.readouterr().out.splitlines()[-1]


def test_synth(files):
    spec = {"dim": 2, "n": 500, "seed": 3,
            "components": [{"mean": [0, 0], "std": 1, "weight": 1}, {"mean": [9, 9], "std": 1, "weight": 0}]}
    (files / "mix.json").write_text(json.dumps(spec))
    assert run("synth", "--spec", files / "mix.json", "--out", files / "m.emb",
               "--labels-out", files / "m.lbl") == EXIT_OK
    emb = load_embeddings(files / "m.emb")
    assert emb.count == 500 and abs(emb.data.mean()) < 0.15
    assert run("synth", "--spec", files / "mix.json", "--out", files / "m2.emb") == EXIT_OK
    assert (files / "m.emb").read_bytes() == (files / "m2.emb").read_bytes()


def test_sequential_commands(tmp_path, capsys):
    source, _, targets = shift_benchmark(0, n_source=400, n_target=60)
    save_embeddings(source, tmp_path / "src.emb")
    save_labels(source.labels, tmp_path / "src.lbl")
    tasks = []
    for i, (name, epochs) in enumerate([("A", 100), ("B", 40), ("A2", 20)]):
        t = targets[name[0]]
        save_embeddings(t, tmp_path / f"{name}.emb")
        save_labels(t.labels, tmp_path / f"{name}.lbl")
        tasks.append({"task_id": name, "target_path": f"{name}.emb", "target_labels_path": f"{name}.lbl",
                      "arrival_index": i, "filter_method": "cluster_min", "budget": 80, "epochs": epochs})
    (tmp_path / "plan.json").write_text(json.dumps({"tasks": tasks}))
    common = ["--plan", tmp_path / "plan.json", "--source", tmp_path / "src.emb",
              "--source-labels", tmp_path / "src.lbl"]
    assert run("sequential", "run", *common, "--out-dir", tmp_path / "out") == EXIT_OK
    assert "total_epochs\t160" in capsys.readouterr().out
    assert json.loads((tmp_path / "out" / "summary.json").read_text())["total_epochs"] == 160
    assert read_selection(tmp_path / "out" / "B.sel.txt").shape == (80,)
    assert run("sequential", "compare", *common, "--trainer", "mock", "--out", tmp_path / "cmp.json") == EXIT_OK
    cmp = json.loads((tmp_path / "cmp.json").read_text())
    assert (cmp["sequential_total_epochs"], cmp["independent_total_epochs"]) == (160, 300)
