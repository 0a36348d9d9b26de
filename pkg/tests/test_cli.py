import csv
import io
import json

import numpy as np
from click.testing import CliRunner

from tnsketch.cli import main
from tnsketch.generators import tt_network
from tnsketch.tn import save_network


def _run(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


def test_cost_kronecker_terms():
    r = _run("cost", "--input-kind", "kronecker", "--order", "4", "--size", "1000",
             "--sketch-size", "50")
    assert r.exit_code == 0
    d = json.loads(r.output)
    assert d["term_kron"] == sum(2 * 1000 * 50 for _ in range(4))
    assert d["constrained"] and d["sufficient_condition"]
    assert set(d["by_embedding"]) == {"tn", "tree", "tt", "khatri-rao"}
    assert d["plan_flops"] == d["by_embedding"]["tn"]


def test_cost_tt_tree_optimal(tmp_path):
    net, sk = tt_network(4, 20, 8)
    p = tmp_path / "tt.json"
    save_network(p, net, sk)
    r = _run("cost", "--network", str(p), "--sketch-size", "4")
    assert r.exit_code == 0 and json.loads(r.output)["tree_optimal"] is True


def test_cost_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"vertices": ["a"],\n "edges": [}')
    r = CliRunner().invoke(main, ["cost", "--network", str(bad), "--sketch-size", "2"])
    assert r.exit_code == 2 and ":2:" in r.output
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"vertices": ["a"], "edges": [
        {"id": "e", "endpoints": ["a"], "dangling": True, "size": 4}], "sketch_edges": []}))
    r = CliRunner().invoke(main, ["cost", "--network", str(empty), "--sketch-size", "2"])
    assert r.exit_code == 2


def test_accuracy_csv_and_metadata(tmp_path):
    out = tmp_path / "acc.csv"
    r = _run("--seed", "3", "--out", str(out), "accuracy", "--input-kind", "tensor-train",
             "--order", "3", "--size", "64", "--rank", "2", "--embedding", "tn",
             "--embedding", "tt", "--tau", "0.5", "--trials", "2")
    assert r.exit_code == 0
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert rows[0] == ["inputId", "embedding", "smallest_m", "flops"]
    assert len(rows) == 1 + 2 * 2
    meta = json.loads((tmp_path / "acc.csv.meta.json").read_text())
    assert meta["tau"] == 0.5 and meta["seed"] == 3


def test_accuracy_parallel_output_identical(tmp_path):
    args = ["accuracy", "--order", "2", "--order", "3", "--size", "30", "--tau", "0.4",
            "--trials", "2"]
    a = _run("--seed", "1", *args).output
    b = _run("--seed", "1", "--threads", "2", *args).output
    assert a == b


def test_accuracy_exit_codes():
    r = CliRunner().invoke(main, ["accuracy", "--order", "4", "--size", "8", "--embedding",
                                  "khatri-rao", "--tau", "0.001", "--m-max", "3"])
    assert r.exit_code == 3 and "not-found" in r.output
    r = CliRunner().invoke(main, ["accuracy", "--tau", "2"])
    assert r.exit_code == 2


def test_sketch_save_and_seed(tmp_path):
    f1, f2 = tmp_path / "a.npy", tmp_path / "b.npy"
    r = _run("--seed", "4", "sketch", "--order", "3", "--size", "10", "--sketch-size", "5",
             "--save", str(f1))
    assert r.exit_code == 0
    d = json.loads(r.output)
    assert d["shape"] == [5] and d["flops"] > 0
    _run("--seed", "4", "sketch", "--order", "3", "--size", "10", "--sketch-size", "5",
         "--save", str(f2))
    assert np.array_equal(np.load(f1), np.load(f2))
    _run("--seed", "5", "sketch", "--order", "3", "--size", "10", "--sketch-size", "5",
         "--save", str(f2))
    assert not np.array_equal(np.load(f1), np.load(f2))


def test_cp_als_outputs(tmp_path):
    out = tmp_path / "cp.json"
    r = _run("--out", str(out), "cp-als", "--order", "3", "--size", "10", "--rank", "2",
             "--sketch-size", "20", "--iters", "3")
    assert r.exit_code == 0
    d = json.loads(out.read_text())
    assert d["m"] == 20 and len(d["ledger"]["sweeps"]) == 3
    trace = list(csv.reader(io.StringIO((tmp_path / "cp.json.csv").read_text())))
    assert trace[0] == ["sweep", "residual", "sweep_flops"] and len(trace) == 4
    r = _run("cp-als", "--epsilon", "0.5", "--size", "12", "--iters", "1")
    assert r.exit_code == 0
    r = CliRunner().invoke(main, ["cp-als", "--iters", "1"])
    assert r.exit_code == 2
    r = CliRunner().invoke(main, ["cp-als", "--size", "3", "--sketch-size", "50"])
    assert r.exit_code == 2 and "sketch exceeds subspace" in r.output


def test_tt_round_outputs():
    r = _run("tt-round", "--order", "4", "--size", "10", "--rank", "5", "--sketch-size", "3")
    assert r.exit_code == 0
    text = r.output
    d = json.loads(text[:text.index("boundary,")])
    assert d["warnings"] == [] and d["ledger"]["total"] > 0
    r = _run("tt-round", "--order", "3", "--size", "10", "--rank", "2", "--sketch-size", "4")
    assert "not below the rank" in r.output
