import subprocess
import sys

import numpy as np
import pytest

from attnbm.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, run
from attnbm.data import read_pgm, write_idx
from attnbm.efh import efh_from_bytes
from attnbm.energy import AttnBMModel, load_model, save_model
from attnbm.gmm import read_mixture


@pytest.fixture
def workdir(tmp_path):
    rng = np.random.default_rng(0)
    np.savetxt(tmp_path / "data.csv", rng.standard_normal((40, 4)), delimiter=",")
    save_model(tmp_path / "m.abm", AttnBMModel(rng.standard_normal((3, 4)), 1))
    (tmp_path / "base.cfg").write_text(
        f"# shared settings\ndata = {tmp_path / 'data.csv'}\nn_hidden = 3\nepochs = 3\nseed = 7\n")
    return tmp_path


def _csv(path):
    lines = path.read_text().strip().split("\n")
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def test_train_mle_outputs(workdir):
    code = run(["train-mle", "--config", str(workdir / "base.cfg"),
                "--model", str(workdir / "out.abm"), "--report", str(workdir / "r.csv")])
    assert code == EXIT_OK
    assert load_model(workdir / "out.abm").xi.shape == (3, 4)
    header, rows = _csv(workdir / "r.csv")
    assert header == ["epoch", "objective"] and len(rows) == 3


def test_train_mle_zero_learning_rate_constant(workdir):
    assert run(["train-mle", "--config", str(workdir / "base.cfg"), "--learning-rate", "0",
                "--report", str(workdir / "r.csv"), "--report-timing", "true"]) == EXIT_OK
    header, rows = _csv(workdir / "r.csv")
    assert header == ["epoch", "objective", "seconds"]
    assert len({r[1] for r in rows}) == 1


def test_flags_override_config(workdir):
    run(["train-mle", "--config", str(workdir / "base.cfg"), "--epochs", "5",
         "--report", str(workdir / "r.csv")])
    assert len(_csv(workdir / "r.csv")[1]) == 5


@pytest.mark.parametrize("command, ext", [("train-mle", "abm"), ("train-dsm", "abm"), ("train-cd", "efh")])
def test_training_is_byte_deterministic(workdir, command, ext):
    outs = []
    for tag in "ab":
        args = [command, "--config", str(workdir / "base.cfg"), "--model", str(workdir / f"{tag}.{ext}"),
                "--report", str(workdir / f"{tag}.csv")]
        if command == "train-cd":
            args += ["--n-hidden", "2", "--grid-radius", "12"]
        assert run(args) == EXIT_OK
        outs.append(((workdir / f"{tag}.{ext}").read_bytes(), (workdir / f"{tag}.csv").read_bytes()))
    assert outs[0] == outs[1]
    if command == "train-cd":
        assert efh_from_bytes(outs[0][0]).n_hidden == 2


def test_reconstruct_and_retrieve(workdir):
    cfg = str(workdir / "base.cfg")
    model = str(workdir / "m.abm")
    assert run(["reconstruct", "--config", cfg, "--model", model, "--n-eval", "5",
                "--out", str(workdir / "rec.csv")]) == EXIT_OK
    header, rows = _csv(workdir / "rec.csv")
    assert header == ["index", "mse_corrupted", "mse_conditional", "mse_hopfield"] and len(rows) == 5
    assert run(["retrieve", "--config", cfg, "--model", model, "--n-eval", "4",
                "--out", str(workdir / "ret.csv")]) == EXIT_OK
    header, rows = _csv(workdir / "ret.csv")
    assert header[:3] == ["index", "iterations", "converged"] and len(rows) == 4
    assert all(float(r[4]) <= float(r[3]) + 1e-9 for r in rows)


def test_filters(workdir):
    out = workdir / "f.pgm"
    assert run(["filters", "--model", str(workdir / "m.abm"), "--out", str(out)]) == EXIT_OK
    assert read_pgm(out).shape == (5, 5)
    assert run(["filters", "--model", str(workdir / "m.abm")]) == EXIT_USAGE


def test_sweep(workdir):
    out = workdir / "s.csv"
    assert run(["sweep-mse", "--config", str(workdir / "base.cfg"), "--sizes", "5,10",
                "--n-eval", "5", "--out", str(out)]) == EXIT_OK
    header, rows = _csv(out)
    assert header == ["P", "mse_conditional", "mse_hopfield"] and [r[0] for r in rows] == ["5", "10"]


def test_gmm_sample(workdir, capsys):
    mix = workdir / "mix.txt"
    assert run(["gmm-sample", "--model", str(workdir / "m.abm"), "--n", "6", "--mixture", str(mix)]) == EXIT_OK
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[0] == "x0,x1,x2,x3,component" and len(lines) == 7
    assert read_mixture(mix).n_components == 3


def test_vmf_sample(workdir, capsys):
    assert run(["vmf-sample", "--eta", "0,0,2", "--n", "5", "--seed", "1"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[0] == "u0,u1,u2"
    u = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    np.testing.assert_allclose(np.linalg.norm(u, axis=1), 1.0, atol=1e-12)
    assert run(["vmf-sample", "--model", str(workdir / "m.abm"), "--n", "2"]) == EXIT_OK
    assert run(["vmf-sample"]) == EXIT_USAGE


def test_verify(capsys):
    assert run(["verify"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and "16/16 checks passed" in out
    assert run(["verify", "--only", "jensen_bound"]) == EXIT_OK
    assert run(["verify", "--only", "nonexistent"]) == EXIT_USAGE


def test_verify_failure_exit_code(monkeypatch):
    from attnbm import cli
    from attnbm.verify import Check
    monkeypatch.setattr(cli, "run_suite", lambda seed, names: [Check("x", False, 1.0, 0.1, 0.0, "")])
    assert run(["verify"]) == EXIT_VERIFY


@pytest.mark.parametrize("argv", [[], ["bogus"], ["train-mle", "--nope", "1"],
                                  ["train-mle", "--epochs", "abc"], ["train-mle"]])
def test_usage_errors(argv):
    assert run(argv) == EXIT_USAGE


def test_config_errors(workdir):
    (workdir / "bad.cfg").write_text("mystery_key = 1\n")
    assert run(["train-mle", "--config", str(workdir / "bad.cfg")]) == EXIT_USAGE
    (workdir / "bad.cfg").write_text("no equals sign\n")
    assert run(["train-mle", "--config", str(workdir / "bad.cfg")]) == EXIT_USAGE
    assert run(["train-mle", "--config", str(workdir / "missing.cfg")]) == EXIT_USAGE


def test_data_errors(workdir):
    (workdir / "bad.idx").write_bytes(b"\x01\x02\x03\x04")
    assert run(["train-mle", "--data", str(workdir / "bad.idx")]) == EXIT_DATA
    assert run(["train-mle", "--data", str(workdir / "nothing.idx")]) == EXIT_DATA
    (workdir / "bad.abm").write_bytes(b"XXXX")
    assert run(["gmm-sample", "--model", str(workdir / "bad.abm")]) == EXIT_DATA
    assert run(["train-mle", "--config", str(workdir / "base.cfg"), "--learning-rate", "-1"]) == EXIT_DATA


def test_idx_and_patch_pipeline(workdir):
    images = np.random.default_rng(1).integers(0, 256, (6, 8, 8), dtype=np.uint8)
    write_idx(workdir / "img.idx", images)
    assert run(["train-mle", "--data", str(workdir / "img.idx"), "--patch-size", "4", "--n-patches", "30",
                "--n-hidden", "2", "--epochs", "1", "--model", str(workdir / "p.abm"),
                "--report", str(workdir / "r.csv")]) == EXIT_OK
    assert load_model(workdir / "p.abm").xi.shape == (2, 16)


def test_thread_env(workdir, monkeypatch):
    args = ["train-mle", "--config", str(workdir / "base.cfg"), "--report", str(workdir / "r.csv")]
    monkeypatch.setenv("ATTNBM_THREADS", "1")
    assert run(args) == EXIT_OK
    single = (workdir / "r.csv").read_bytes()
    monkeypatch.setenv("ATTNBM_THREADS", "0")
    assert run(args) == EXIT_OK
    assert (workdir / "r.csv").read_bytes() == single
    for bad in ("-2", "many"):
        monkeypatch.setenv("ATTNBM_THREADS", bad)
        assert run(args) == EXIT_USAGE


def test_module_entry_point_exit_code():
    proc = subprocess.run([sys.executable, "-m", "attnbm.cli", "bogus"], capture_output=True, text=True)
    assert proc.returncode == EXIT_USAGE
    assert "usage" in proc.stderr and proc.stdout == ""
