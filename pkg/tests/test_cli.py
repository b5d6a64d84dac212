"""End-to-end subcommand tests on synthetic inputs in temp directories."""

import numpy as np
import pytest

from wavedae.checkpoint import load_checkpoint
from wavedae.cli import main
from wavedae.data import (
    SignalRecord,
    load_experiment,
    read_csv_signal,
    write_csv_signal,
    write_wfdb_record,
)
from wavedae.synthetic import pseudo_ecg


PREPARE_SMALL = [
    "--records", "synthetic:2:120",
    "--noise", "synthetic:30",
    "--exclude", "",
    "--window-width", "64",
    "--train-per-record", "12",
    "--val-per-record", "4",
    "--test-per-record", "4",
    "--train-snrs", "0",
    "--eval-snrs=-10,0",  # the = form keeps argparse from reading -10 as a flag
]


def prepare(tmp_path, seed="0"):
    out = tmp_path / "data"
    rc = main(["prepare", "--seed", seed, "--out", str(out)] + PREPARE_SMALL)
    assert rc == 0
    return out


def train_small(tmp_path, data_dir, variant="backward", k="1", seed="0"):
    out = tmp_path / f"model-{variant}-{k}"
    rc = main([
        "train", "--data", str(data_dir), "--out", str(out),
        "--variant", variant, "--k", k, "--epochs", "2",
        "--batch-size", "8", "--seed", seed, "--deterministic",
    ])
    assert rc == 0
    return out


class TestDescribe:
    def test_fcn_trace_has_13_rows(self, capsys):
        assert main(["describe", "--variant", "fcn"]) == 0
        lines = capsys.readouterr().out.splitlines()
        row_lines = [line for line in lines if line.startswith("row=")]
        assert len(row_lines) == 13
        assert "out_length=1024 out_channels=1" in row_lines[-1]

    def test_backward_one_places_wavelet_rows(self, capsys):
        assert main(["describe", "--variant", "backward", "--k", "1"]) == 0
        out = capsys.readouterr().out
        assert "row=5 name=encoder_5 kind=dwt" in out
        assert "row=8 name=decoder_1 kind=idwt" in out


class TestPrepare:
    def test_writes_manifest_and_dataset(self, tmp_path):
        out = prepare(tmp_path)
        assert (out / "manifest.txt").exists()
        data = load_experiment(out / "dataset.bin")
        assert len(data.train) == 24
        assert set(data.test) == {-10.0, 0.0}

    def test_rerun_is_byte_identical(self, tmp_path):
        a = prepare(tmp_path / "a", seed="5")
        b = prepare(tmp_path / "b", seed="5")
        assert (a / "manifest.txt").read_bytes() == (b / "manifest.txt").read_bytes()
        assert (a / "dataset.bin").read_bytes() == (b / "dataset.bin").read_bytes()

    def test_corrupt_212_file_reports_byte_offset(self, tmp_path, capsys):
        write_wfdb_record(tmp_path / "r.hea", tmp_path / "r.dat", "r",
                          [np.zeros(4000, dtype=int)], fs=360.0)
        data = (tmp_path / "r.dat").read_bytes()
        (tmp_path / "r.dat").write_bytes(data[:100])
        rc = main([
            "prepare", "--records", str(tmp_path / "r.hea"),
            "--noise", "synthetic:10", "--out", str(tmp_path / "out"),
        ])
        assert rc == 1
        assert "byte 100" in capsys.readouterr().err

    def test_shortage_is_reported(self, tmp_path, capsys):
        rc = main([
            "prepare", "--records", "synthetic:1:60", "--noise", "synthetic:10",
            "--exclude", "", "--window-width", "64",
            "--train-per-record", "100000", "--out", str(tmp_path / "out"),
        ])
        assert rc == 1
        assert "S00" in capsys.readouterr().err


class TestTrain:
    def test_writes_checkpoint_and_history(self, tmp_path):
        data_dir = prepare(tmp_path)
        out = train_small(tmp_path, data_dir)
        assert (out / "checkpoint.ckpt").exists()
        history = (out / "history.csv").read_text().splitlines()
        assert history[0] == "epoch,train_loss,val_loss,seconds"
        assert len([line for line in history if not line.startswith(("epoch", "#"))]) == 2

    def test_checkpoint_structure_matches_variant(self, tmp_path):
        data_dir = prepare(tmp_path)
        out = train_small(tmp_path, data_dir, variant="backward", k="1")
        net = load_checkpoint(out / "checkpoint.ckpt")
        kinds = [row.main.kind for row in net.rows]
        assert kinds[4] == "dwt"       # encoder position 5
        assert kinds[7] == "idwt"      # decoder position 1, the mirror
        assert kinds[0] == "conv"

    def test_missing_dataset_is_an_error(self, tmp_path, capsys):
        rc = main(["train", "--data", str(tmp_path / "nowhere"),
                   "--out", str(tmp_path)])
        assert rc == 1
        assert "nowhere" in capsys.readouterr().err

    def test_deterministic_reruns_match(self, tmp_path):
        data_dir = prepare(tmp_path)
        a = train_small(tmp_path / "a", data_dir, seed="3")
        b = train_small(tmp_path / "b", data_dir, seed="3")
        assert (a / "history.csv").read_bytes() == (b / "history.csv").read_bytes()
        assert (a / "checkpoint.ckpt").read_bytes() == (b / "checkpoint.ckpt").read_bytes()


class TestDenoise:
    def test_length_is_preserved_for_exact_windows(self, tmp_path):
        data_dir = prepare(tmp_path)
        model_dir = train_small(tmp_path, data_dir)
        signal = SignalRecord("x", pseudo_ecg(64, fs=360.0, rng=0), 360.0)
        write_csv_signal(tmp_path / "x.csv", signal)
        rc = main([
            "denoise", "--checkpoint", str(model_dir / "checkpoint.ckpt"),
            "--input", str(tmp_path / "x.csv"),
            "--output", str(tmp_path / "y.csv"),
        ])
        assert rc == 0
        assert len(read_csv_signal(tmp_path / "y.csv").samples) == 64

    def test_partial_window_is_tiled_and_trimmed(self, tmp_path):
        data_dir = prepare(tmp_path)
        model_dir = train_small(tmp_path, data_dir)
        signal = SignalRecord("x", pseudo_ecg(150, fs=360.0, rng=1), 360.0)
        write_csv_signal(tmp_path / "x.csv", signal)
        rc = main([
            "denoise", "--checkpoint", str(model_dir / "checkpoint.ckpt"),
            "--input", str(tmp_path / "x.csv"),
            "--output", str(tmp_path / "y.csv"),
            "--windows-csv", str(tmp_path / "w.csv"),
        ])
        assert rc == 0
        assert len(read_csv_signal(tmp_path / "y.csv").samples) == 150
        assert (tmp_path / "w.csv").read_text().startswith("window,start")

    def test_output_is_reproducible(self, tmp_path):
        data_dir = prepare(tmp_path)
        model_dir = train_small(tmp_path, data_dir)
        signal = SignalRecord("x", pseudo_ecg(200, fs=360.0, rng=2), 360.0)
        write_csv_signal(tmp_path / "x.csv", signal)
        for name in ("y1.csv", "y2.csv"):
            main([
                "denoise", "--checkpoint", str(model_dir / "checkpoint.ckpt"),
                "--input", str(tmp_path / "x.csv"),
                "--output", str(tmp_path / name),
            ])
        assert (tmp_path / "y1.csv").read_bytes() == (tmp_path / "y2.csv").read_bytes()

    def test_too_short_input_fails(self, tmp_path, capsys):
        data_dir = prepare(tmp_path)
        model_dir = train_small(tmp_path, data_dir)
        write_csv_signal(tmp_path / "x.csv", SignalRecord("x", np.ones(10) + np.arange(10), 360.0))
        rc = main([
            "denoise", "--checkpoint", str(model_dir / "checkpoint.ckpt"),
            "--input", str(tmp_path / "x.csv"),
            "--output", str(tmp_path / "y.csv"),
        ])
        assert rc == 1
        assert "needs at least 64" in capsys.readouterr().err


class TestEvaluate:
    def test_two_checkpoints_give_two_rows(self, tmp_path):
        data_dir = prepare(tmp_path)
        fcn_dir = train_small(tmp_path, data_dir, variant="fcn", k="1")
        b1_dir = train_small(tmp_path, data_dir, variant="backward", k="1")
        rc = main([
            "evaluate",
            "--checkpoints",
            f"{fcn_dir / 'checkpoint.ckpt'},{b1_dir / 'checkpoint.ckpt'}",
            "--data", str(data_dir),
            "--out", str(tmp_path / "eval"), "--run-id", "r0",
        ])
        assert rc == 0
        report = (tmp_path / "eval" / "r0" / "report.csv").read_text()
        labels = {line.split(",")[0] for line in report.splitlines()[1:]}
        assert labels == {"fcn", "backward-1"}
        assert (tmp_path / "eval" / "r0" / "rmse.txt").exists()


class TestDecompose:
    def test_band_files_written(self, tmp_path):
        signal = SignalRecord("x", pseudo_ecg(1024, fs=360.0, rng=3), 360.0)
        write_csv_signal(tmp_path / "x.csv", signal)
        rc = main([
            "decompose", "--input", str(tmp_path / "x.csv"),
            "--levels", "3", "--svg",
            "--out", str(tmp_path / "dec"), "--run-id", "r0",
        ])
        assert rc == 0
        run = tmp_path / "dec" / "r0"
        names = sorted(p.name for p in run.iterdir())
        assert names == ["band_A.csv", "band_D1.csv", "band_D2.csv",
                         "band_D3.csv", "bands.svg"]


class TestAblationCommand:
    def test_small_sweep_writes_tables(self, tmp_path):
        rc = main([
            "ablation", "--records", "synthetic:2:120", "--noise", "synthetic:30",
            "--variants", "fcn,backward-1", "--epochs", "1",
            "--batch-size", "8", "--window-width", "64",
            "--train-per-record", "12", "--val-per-record", "4",
            "--test-per-record", "4", "--train-snrs", "0", "--eval-snrs", "0",
            "--out", str(tmp_path / "abl"), "--run-id", "r0", "--deterministic",
        ])
        assert rc == 0
        run = tmp_path / "abl" / "r0"
        assert (run / "report.csv").exists()
        table = (run / "rmse.txt").read_text()
        assert "fcn" in table and "backward-1" in table


class TestConfigFile:
    def test_config_supplies_values_and_flags_override(self, tmp_path, capsys):
        config = tmp_path / "cfg.txt"
        config.write_text("variant = fcn\nk = 2\n# comment\n")
        assert main(["describe", "--config", str(config)]) == 0
        out_fcn = capsys.readouterr().out
        assert "variant=fcn" in out_fcn
        assert main(["describe", "--config", str(config),
                     "--variant", "backward"]) == 0
        out_override = capsys.readouterr().out
        assert "variant=backward" in out_override
        assert "k=2" in out_override

    def test_unknown_key_is_rejected_by_name(self, tmp_path, capsys):
        config = tmp_path / "cfg.txt"
        config.write_text("variannt = fcn\n")
        assert main(["describe", "--config", str(config)]) == 1
        assert "variannt" in capsys.readouterr().err
