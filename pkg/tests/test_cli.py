import csv
import json

import numpy as np
import pytest

from legrad.cli import EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_OK, main
from legrad.data import write_idx
from legrad.experiments import OUTPUT_ENV, parse_estimator_spec


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestRun:
    def test_gauss_fit_row_accounting(self, tmp_path, capsys):
        out = tmp_path / "g"
        assert run_cli("run", "experiment=gauss-fit", "T=200", "trace_every=10", "--out", out) == EXIT_OK
        printed = json.loads(capsys.readouterr().out)
        for name in ("trace.csv", "variance.csv", "final_params.txt", "manifest.json", "timing.csv"):
            assert (out / name).exists()
        assert len(read_csv(out / "trace.csv")) == 200 // 10
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 0
        assert manifest["f_evaluations"] == printed["f_evaluations"] == 200 * (100 * 5 + 1)
        assert manifest["config_hash"] == printed["config_hash"]
        assert np.loadtxt(out / "final_params.txt").shape == (100, 2)

    def test_worker_count_does_not_change_outputs(self, tmp_path):
        for w in (1, 3):
            assert run_cli("run", "experiment=logreg", "T=30", f"workers={w}", "--out", tmp_path / f"w{w}") == EXIT_OK
        for name in ("trace.csv", "variance.csv", "final_params.txt", "manifest.json"):
            assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w3" / name).read_bytes()

    def test_output_dir_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
        assert run_cli("run", "experiment=gauss-fit", "n=3", "T=5") == EXIT_OK
        assert (tmp_path / "env" / "trace.csv").exists()

    def test_config_file_flags_and_overrides(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment=gauss-fit\nseed=3\nK=7\n")
        assert run_cli("print-config", "--config", cfg, "K=9", "--seed", "4") == EXIT_OK
        text = capsys.readouterr().out
        assert "K=9" in text.splitlines() and "seed=4" in text.splitlines()

    def test_sbn_run(self, tmp_path):
        out = tmp_path / "s"
        assert run_cli("run", "experiment=sbn", "T=20", "hidden=4", "pixels=10", "examples=15",
                       "variance_calls=5", "--out", out) == EXIT_OK
        assert np.loadtxt(out / "W.txt").shape == (10, 5)
        assert np.loadtxt(out / "V.txt").shape == (4, 11)
        assert np.loadtxt(out / "reconstructions.csv", delimiter=",").shape == (15, 10)
        rows = read_csv(out / "trace.csv")
        assert len(rows) == 20 and "reconstruction_error" in rows[0]


class TestExitCodes:
    def test_config_error(self, tmp_path, capsys):
        assert run_cli("run", "experiment=sbn", "estimator=regrad", "--out", tmp_path) == EXIT_CONFIG
        assert "estimator" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        assert run_cli("run", "experiment=gauss-fit", "bogus=1") == EXIT_CONFIG
        assert "bogus" in capsys.readouterr().err

    def test_warning_on_stderr(self, capsys):
        assert run_cli("print-config", "experiment=gauss-fit", "S=3") == EXIT_OK
        assert "S is ignored" in capsys.readouterr().err

    def test_divergence(self, tmp_path, capsys):
        assert run_cli("run", "experiment=gauss-fit", "n=5", "T=50", "eta=1e200",
                       "schedule=constant", "--out", tmp_path) == EXIT_DIVERGED
        assert "diverged" in capsys.readouterr().err

    def test_missing_idx_file(self, tmp_path):
        assert run_cli("run", "experiment=logreg", "data=idx", f"images={tmp_path}/none",
                       f"labels={tmp_path}/none", "--out", tmp_path) == EXIT_DATA


class TestVarianceStudy:
    def test_ordering_at_initialization(self, tmp_path):
        out = tmp_path / "v"
        assert run_cli("variance-study", "calls=200", "estimators=legrad,regrad,ldgrad,ldgrad:10000",
                       "--out", out) == EXIT_OK
        rows = read_csv(out / "variance.csv")
        v = {r["estimator"]: float(r["variance"]) for r in rows if r["coordinate"] == "0"}
        assert v["legrad"] < v["regrad_S1"] < v["ldgrad_S500"]
        assert v["ldgrad_S10000"] < 3 * v["legrad"]

    def test_spec_parsing(self):
        assert parse_estimator_spec("ldgrad:10000", 500) == ("ldgrad_S10000", 10000, "ldgrad")
        assert parse_estimator_spec("ldgrad", 500) == ("ldgrad_S500", 500, "ldgrad")
        assert parse_estimator_spec("legrad", 500) == ("legrad", 1, "legrad")


class TestIngest:
    def test_ingest_idx(self, tmp_path, capsys):
        images = np.arange(5 * 4, dtype=np.uint8).reshape(5, 2, 2) * 12
        write_idx(tmp_path / "i.idx", images)
        write_idx(tmp_path / "l.idx", np.array([2, 7, 1, 7, 2], dtype=np.uint8))
        dest = tmp_path / "d.npz"
        assert run_cli("ingest-idx", tmp_path / "i.idx", tmp_path / "l.idx", dest, "--classes", "2,7") == EXIT_OK
        with np.load(dest) as z:
            assert z["images"].shape == (4, 4)
            np.testing.assert_array_equal(z["labels"], [2, 7, 7, 2])

    def test_ingest_bad_magic(self, tmp_path):
        write_idx(tmp_path / "l.idx", np.zeros(3, dtype=np.uint8))
        assert run_cli("ingest-idx", tmp_path / "l.idx", tmp_path / "l.idx", tmp_path / "d.npz") == EXIT_DATA

    def test_logreg_on_idx(self, tmp_path):
        rng = np.random.default_rng(0)
        write_idx(tmp_path / "i.idx", rng.integers(0, 256, size=(30, 3, 3)).astype(np.uint8))
        write_idx(tmp_path / "l.idx", np.array([2, 7, 5] * 10, dtype=np.uint8))
        out = tmp_path / "o"
        assert run_cli("run", "experiment=logreg", "data=idx", f"images={tmp_path / 'i.idx'}",
                       f"labels={tmp_path / 'l.idx'}", "pixels=9", "T=5", "--out", out) == EXIT_OK
        assert np.loadtxt(out / "final_params.txt").shape == (10, 2)


@pytest.mark.parametrize("command", ["run", "variance-study", "print-config"])
def test_flags_mirror_config_keys(command, capsys):
    with pytest.raises(SystemExit):
        main([command, "--help"])
    text = capsys.readouterr().out
    for flag in ("--estimator", "--trace-every", "--prior-variance", "--out", "--workers"):
        assert flag in text
