import json
import subprocess
import sys

import numpy as np
import pytest

from mlscale.cli import main


def run(*args, cwd=None):
    p = subprocess.run([sys.executable, "-m", "mlscale.cli", *map(str, args)], cwd=cwd,
                       capture_output=True, text=True)
    return p.returncode, p.stdout, p.stderr


def _ratings(path, seed=0):
    rng = np.random.default_rng(seed)
    lines = [f"{u}\t{i}\t{rng.integers(1, 6)}\t0" for u in range(1, 31) for i in range(1, 21)
             if rng.random() < 0.5 or u == i]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_usage_errors_exit_1(tmp_path):
    data = _ratings(tmp_path / "u.data")
    assert run("complete-als", "--data", data, "--rank", 0)[0] == 1
    assert run("complete-als", "--data", data, "--bogus")[0] == 1
    assert run("no-such-command")[0] == 1


def test_missing_file_exits_2(tmp_path):
    assert main(["complete-als", "--data", str(tmp_path / "none")]) == 2
    assert main(["kmeans", "--data", str(tmp_path / "none"), "--k", "2"]) == 2


def test_complete_als(tmp_path, capsys):
    data = _ratings(tmp_path / "u.data")
    assert main(["complete-als", "--data", str(data), "--rank", "2", "--nonneg",
                 "--out", str(tmp_path / "m.txt"), "--trace", str(tmp_path / "t.csv")]) == 0
    s = json.loads(capsys.readouterr().out)
    assert s["test_rmse"] > 0 and "baseline_rmse" in s
    assert (tmp_path / "t.csv").exists()


def test_complete_svt(tmp_path, capsys):
    data = _ratings(tmp_path / "u.data")
    assert main(["complete-svt", "--data", str(data), "--lam", "2", "--rank-max", "4",
                 "--out", str(tmp_path / "s.npz")]) == 0
    assert (tmp_path / "s.npz").exists()


def test_nmf(tmp_path):
    X = np.random.default_rng(0).random((8, 6))
    np.savetxt(tmp_path / "x.csv", X, delimiter=",")
    assert main(["nmf", "--data", str(tmp_path / "x.csv"), "--rank", "2",
                 "--out", str(tmp_path / "f")]) == 0
    np.savetxt(tmp_path / "neg.csv", -X, delimiter=",")
    assert main(["nmf", "--data", str(tmp_path / "neg.csv"), "--rank", "2",
                 "--out", str(tmp_path / "g")]) == 2


def test_text_round_trip(tmp_path, capsys):
    corpus = tmp_path / "c.tsv"
    corpus.write_text("".join(f"{lab}\t{w} {w} mot{i}\n" for i in range(20)
                              for lab, w in [("a", "chien"), ("b", "voiture")]))
    assert main(["train-text", "--corpus", str(corpus), "--n-hash", "128",
                 "--out", str(tmp_path / "m.txt")]) == 0
    assert json.loads(capsys.readouterr().out)["train_error"] == 0
    plain = tmp_path / "p.txt"
    plain.write_text("un chien\nla voiture\nles chiens\n")
    assert main(["vectorize", "--corpus", str(plain), "--n-hash", "128",
                 "--out", str(tmp_path / "f.txt")]) == 0
    assert json.loads(capsys.readouterr().out)["n_docs"] == 3
    assert main(["predict-text", "--model", str(tmp_path / "m.txt"), "--matrix",
                 str(tmp_path / "f.txt"), "--out", str(tmp_path / "pred.txt")]) == 0
    assert (tmp_path / "pred.txt").read_text() == "a\nb\na\n"
    bad = tmp_path / "bad.tsv"
    bad.write_text("no tab here\n")
    assert main(["train-text", "--corpus", str(bad)]) == 2


def test_kmeans(tmp_path):
    np.savetxt(tmp_path / "p.csv", np.random.default_rng(1).standard_normal((30, 2)),
               delimiter=",")
    assert main(["kmeans", "--data", str(tmp_path / "p.csv"), "--k", "3", "--partitions", "4",
                 "--out", str(tmp_path / "km")]) == 0
    assert (tmp_path / "km.assignments.csv").read_text().count("\n") == 31
    assert main(["kmeans", "--data", str(tmp_path / "p.csv"), "--k", "99"]) == 2


def test_curve(tmp_path):
    (tmp_path / "c.toml").write_text(
        'task = "complete_als"\ndataset = "synthetic"\nladder = [100, 200]\n'
        '[grid]\nr = 2\n[synthetic]\nn = 40\np = 30\n')
    rc, out, _ = run("curve", "--config", tmp_path / "c.toml", "--out", tmp_path / "r.csv")
    assert rc == 0 and json.loads(out)["rows"] == 2
    assert (tmp_path / "r.csv").read_text().count("\n") == 3
    assert run("curve", "--config", tmp_path / "nope.toml")[0] == 2
