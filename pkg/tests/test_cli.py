import csv

import numpy as np
import pytest

from ganver.cli import main
from ganver.data import make_ring_spec, read_samples_csv

TINY = [
    "--set", "g_hidden=8,8", "--set", "d_hidden=8,8", "--set", "m_hidden=8", "--set", "batch_size=8",
    "--set", "train_size=200", "--set", "eval_n=50", "--set", "eval_repeats=1",
    "--epochs", "1", "--iters-per-epoch", "2",
]


def _err_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return err[0]


def test_synth_data_zero_sigma_gives_means(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["synth-data", "--dataset", "ring", "--n", "8", "--sigma", "0", "--out", str(out)]) == 0
    pts = read_samples_csv(out)
    assert pts.shape == (8, 2)
    means = make_ring_spec().means
    assert all(np.min(np.linalg.norm(means - p, axis=1)) == 0 for p in pts)


def test_eval_identical_csvs(tmp_path, capsys):
    src = tmp_path / "a.csv"
    main(["synth-data", "--n", "300", "--out", str(src)])
    out = tmp_path / "r.csv"
    assert main(["eval", "--real", str(src), "--gen", str(src), "--out", str(out)]) == 0
    row = next(csv.DictReader(out.open()))
    assert float(row["wd"]) == 0.0 and float(row["kl"]) == 0.0


def test_train_eval_plot_roundtrip(tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["train", *TINY, "--variant", "vgan+ver", "--lam", "0.5", "--seed", "3", "--out", str(run)]) == 0
    assert (run / "metrics.csv").exists() and (run / "best.ckpt").exists()
    out = tmp_path / "e.csv"
    assert main(["eval", "--checkpoint", str(run / "best.ckpt"), "--n", "100", "--repeats", "1", "--out", str(out)]) == 0
    assert out.read_text().startswith("modes,hq,kl,wd,mmd,ta,ra,ga,pr,re\n")
    svg = tmp_path / "p.svg"
    assert main(["plot", "--checkpoint", str(run / "best.ckpt"), "--n", "100", "--out", str(svg)]) == 0
    text = svg.read_text()
    assert text.startswith("<svg") and 'id="real"' in text and 'id="generated"' in text and 'id="modes"' in text


def test_sweep_cartesian_product(tmp_path, capsys):
    out = tmp_path / "sw"
    assert main(["sweep", *TINY, "--lambdas", "0.01,0.1", "--seeds", "1,2,3", "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert [(r["lambda"], r["seed"]) for r in rows] == [(l, s) for l in ("0.01", "0.1") for s in "123"]
    agg = list(csv.DictReader((out / "aggregate.csv").open()))
    assert [(r["lambda"], r["stat"]) for r in agg] == [
        ("0.01", "mean"), ("0.01", "median"), ("0.1", "mean"), ("0.1", "median")
    ]
    assert all(r["seeds"] == "3" for r in agg)


def test_train_requires_seed(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path)]) == 2
    assert _err_line(capsys).startswith("error: usage:")


def test_unknown_flag(capsys):
    assert main(["eval", "--frobnicate"]) == 2
    assert _err_line(capsys).startswith("error: usage:")


def test_missing_file(tmp_path, capsys):
    assert main(["eval", "--real", str(tmp_path / "nope.csv"), "--gen", str(tmp_path / "nope.csv")]) == 1
    assert _err_line(capsys).startswith("error: missing-file:")


def test_invalid_config(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("batch_size = 1\n")
    assert main(["train", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "o")]) == 1
    assert _err_line(capsys).startswith("error: config:")


def test_corrupt_checkpoint(tmp_path, capsys):
    run = tmp_path / "run"
    main(["train", *TINY, "--seed", "1", "--out", str(run)])
    (run / "best.ckpt").write_bytes(b"junk")
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(run / "best.ckpt")]) == 1
    assert _err_line(capsys).startswith("error: checkpoint:")


def test_eval_needs_inputs(capsys):
    assert main(["eval"]) == 2
    assert "error: usage:" in _err_line(capsys)


@pytest.mark.parametrize("var", ["GANVER_THREADS"])
def test_thread_cap_must_be_integer(tmp_path, capsys, monkeypatch, var):
    monkeypatch.setenv(var, "many")
    assert main(["sweep", *TINY, "--lambdas", "0.1", "--seeds", "1", "--out", str(tmp_path)]) == 1
    assert "GANVER_THREADS" in _err_line(capsys)
