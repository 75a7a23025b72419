import csv
import subprocess
import sys
import time

import numpy as np
import pytest

from radcine.cli import main
from radcine.formats import load_dataset, read_cine

SMALL = ["--nx", "16", "--ny", "16", "--nt", "4", "--coils", "2", "--spokes-per-frame", "4",
         "--n-train", "2", "--n-val", "1", "--n-test", "2"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "data"
    assert main(["simulate", *SMALL, "--out", str(d)]) == 0
    return d


def run(*args, env=None):
    return subprocess.run([sys.executable, "-m", "radcine", *args], capture_output=True,
                          text=True, env=env)


def test_help_and_usage_errors():
    assert run("--help").returncode == 0
    r = run("simulate", "--nx", "abc", "--out", "x")
    assert r.returncode == 2 and "invalid int value" in r.stderr
    assert run("frobnicate").returncode == 2
    with pytest.raises(SystemExit) as exc:
        main(["reconstruct", "--method", "magic", "--data", "d", "--out", "o"])
    assert exc.value.code == 2


def test_simulate_layout_and_determinism(data_dir, tmp_path):
    ds = load_dataset(data_dir)
    assert [len(ds[s]) for s in ("train", "val", "test")] == [2, 1, 2]
    again = tmp_path / "again"
    assert main(["simulate", *SMALL, "--out", str(again)]) == 0
    for f in ("train/0000/ksp.bin", "test/0001/gt.bin", "maps.bin"):
        assert (again / f).read_bytes() == (data_dir / f).read_bytes()


def test_radcine_seed_env_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("RADCINE_SEED", "5")
    assert main(["simulate", *SMALL, "--seed", "0", "--out", str(tmp_path / "a")]) == 0
    monkeypatch.delenv("RADCINE_SEED")
    assert main(["simulate", *SMALL, "--seed", "5", "--out", str(tmp_path / "b")]) == 0
    assert ((tmp_path / "a/train/0000/ksp.bin").read_bytes()
            == (tmp_path / "b/train/0000/ksp.bin").read_bytes())


def test_sigma_zero_is_noiseless(tmp_path):
    assert main(["simulate", *SMALL, "--sigma", "0", "--out", str(tmp_path / "d")]) == 0
    ds = load_dataset(tmp_path / "d")
    s = ds["train"][0]
    np.testing.assert_allclose(ds.op.A(s.x_gt), s.y, atol=1e-4)


def test_bad_simulate_values_exit_2(tmp_path, capsys):
    assert main(["simulate", *SMALL, "--sigma", "-1", "--out", str(tmp_path / "d")]) == 2
    assert main(["simulate", *SMALL[:4], "--nt", "6", "--out", str(tmp_path / "d")]) == 2
    assert "error" in capsys.readouterr().err


def test_reconstruct_and_evaluate(data_dir, tmp_path):
    out = tmp_path / "rec"
    for method in ("nufft", "itsense", "tv"):
        assert main(["reconstruct", "--data", str(data_dir), "--method", method,
                     "--iters", "3", "--out", str(out / method)]) == 0
    x, h = read_cine(out / "nufft" / "test_0001.bin")
    assert x.shape == (16, 16, 4) and h["method"] == "nufft"
    assert len(list((out / "nufft" / "test_0000_png").glob("*.png"))) == 4
    report = tmp_path / "r.csv"
    assert main(["evaluate", "--pred", str(out / "itsense"), "--gt", str(data_dir),
                 "--roi-frac", "1.0", "--label", "itsense", "--out", str(report)]) == 0
    rows = list(csv.DictReader(report.open()))
    assert rows[0]["method"] == "itsense" and float(rows[0]["nrmse"]) > 0
    # single-file evaluation
    gt = data_dir / "test" / "0000" / "gt.bin"
    assert main(["evaluate", "--pred", str(gt), "--gt", str(gt), "--roi-frac", "1.0"]) == 0


def test_missing_artifacts_exit_3(data_dir, tmp_path):
    assert main(["finetune", "--data", str(data_dir), "--out", str(tmp_path / "f.radw")]) == 3
    assert main(["finetune", "--data", str(data_dir), "--ckpt", str(tmp_path / "none.radw"),
                 "--out", str(tmp_path / "f.radw")]) == 3
    assert main(["reconstruct", "--data", str(tmp_path / "nodata"), "--method", "nufft",
                 "--out", str(tmp_path / "o")]) == 3
    assert main(["evaluate", "--pred", str(tmp_path / "p"), "--gt", str(data_dir)]) == 3


def test_format_error_exit_4(data_dir, tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"not a container")
    assert main(["reconstruct", "--data", str(data_dir), "--method", "nufft",
                 "--ksp", str(bad), "--out", str(tmp_path / "o")]) == 4
    ckpt = tmp_path / "bad.radw"
    ckpt.write_bytes(b"junk")
    assert main(["reconstruct", "--data", str(data_dir), "--ckpt", str(ckpt),
                 "--out", str(tmp_path / "o")]) == 4


def test_train_then_reconstruct_proposed(data_dir, tmp_path):
    pre = tmp_path / "pre.radw"
    assert main(["pretrain", "--data", str(data_dir), "--epochs", "1", "--nf", "4",
                 "--lr", "1e-3", "--out", str(pre)]) == 0
    assert (tmp_path / "pre.loss.csv").exists()
    ft = tmp_path / "ft.radw"
    assert main(["finetune", "--data", str(data_dir), "--ckpt", str(pre), "--epochs", "1",
                 "--ncg", "2", "--out", str(ft)]) == 0
    out = tmp_path / "rec"
    assert main(["reconstruct", "--data", str(data_dir), "--ckpt", str(ft), "--M", "2",
                 "--ncg", "3", "--tol", "1e-3", "--no-png", "--out", str(out)]) == 0
    assert len(list(out.glob("*.bin"))) == 2 and not list(out.glob("*_png"))


def test_diagnostics(tmp_path, capsys):
    assert main(["adjoint-test", "--nx", "16", "--nt", "2", "--coils", "2", "--trials", "3"]) == 0
    assert '"pass": true' in capsys.readouterr().out
    assert main(["gradcheck", "--n-params", "4"]) == 0
    assert main(["--threads", "1", "bench", "--sizes", "16", "--n-theta", "2,4", "--ncg", "1,2",
                 "--nt", "2", "--coils", "1", "--kernels", "--out", str(tmp_path / "b.csv")]) == 0
    header = (tmp_path / "b.csv").read_text().splitlines()[0]
    assert header == "size,n_theta,n_cg,time_ms_mean,time_ms_std,alloc_mb"
    assert (tmp_path / "b.csv.json").exists() and (tmp_path / "b.kernels.csv").exists()
    assert main(["bench", "--reps", "2", "--out", str(tmp_path / "c.csv")]) == 2


def test_default_round_trip_under_two_minutes(tmp_path):
    t0 = time.perf_counter()
    d, rec = tmp_path / "data", tmp_path / "rec"
    assert main(["simulate", "--out", str(d)]) == 0
    assert main(["reconstruct", "--data", str(d), "--method", "nufft", "--out", str(rec)]) == 0
    assert main(["evaluate", "--pred", str(rec), "--gt", str(d)]) == 0
    assert time.perf_counter() - t0 < 120
