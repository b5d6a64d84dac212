"""Command-line workflow: prepare, train, denoise, evaluate, decompose,
describe, ablation.

Every subcommand accepts ``--config FILE`` with line-oriented ``key = value``
entries (``#`` comments, no nesting); keys are the long option names with
dashes or underscores.  Explicit flags override file values, unknown keys
are rejected by name.  ``prepare``/``train``/``denoise`` write fixed file
names directly under ``--out``; ``evaluate``/``decompose``/``ablation``
create a run-stamped subfolder, pinnable with ``--run-id``.

Record sources are explicit paths (``.hea``/``.dat``, ``.csv``, ``.sig``);
the tool never downloads data.  ``synthetic:<count>:<seconds>`` generates
pseudo-ECG records in place of files, and ``synthetic:<seconds>`` does the
same for the three noise records.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import (
    DatasetConfig,
    SignalRecord,
    build_experiment_dataset,
    load_experiment,
    read_manifest,
    read_signal_auto,
    save_experiment,
    write_csv_signal,
    write_manifest,
    write_raw_signal,
    write_wfdb_record,
)
from .evaluation import (
    MetricsReport,
    decomposition_report,
    evaluate_model,
    write_decomposition_csv,
    write_decomposition_svg,
)
from .model import ModelSpec, build_model, describe, init_parameters
from .synthetic import make_noise_records, make_synthetic_records
from .training import (
    AblationConfig,
    TrainConfig,
    run_ablation,
    train,
    write_history,
)

DATASET_FILE = "dataset.bin"
MANIFEST_FILE = "manifest.txt"
CHECKPOINT_FILE = "checkpoint.ckpt"
HISTORY_FILE = "history.csv"


class CliError(ValueError):
    pass


def _parse_config_file(path) -> dict:
    entries = {}
    try:
        lines = open(path, "r", encoding="utf-8").readlines()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"{path}:{line_no}: expected 'key = value', got {line!r}")
        entries[key.strip().replace("-", "_")] = value.strip()
    return entries


def _apply_config(args, parser_keys: set):
    """Fill unset options from the config file; flags keep priority."""
    if not getattr(args, "config", None):
        return
    entries = _parse_config_file(args.config)
    unknown = set(entries) - parser_keys
    if unknown:
        raise CliError(
            f"{args.config}: unknown config key {sorted(unknown)[0]!r} "
            f"(known: {', '.join(sorted(parser_keys))})"
        )
    for key, value in entries.items():
        if getattr(args, key) is None:
            setattr(args, key, value)


def _resolve(args, name, default, convert=str):
    value = getattr(args, name)
    if value is None:
        return default
    return convert(value) if isinstance(value, str) else value


def _float_list(text) -> tuple:
    if isinstance(text, tuple):
        return text
    return tuple(float(part) for part in str(text).split(",") if part.strip())


def _load_clean_records(source: str) -> list[SignalRecord]:
    if source.startswith("synthetic:"):
        parts = source.split(":")
        if len(parts) != 3:
            raise CliError("synthetic records need synthetic:<count>:<seconds>")
        count, seconds = int(parts[1]), float(parts[2])
        return make_synthetic_records(count, duration_s=seconds, seed=0)
    return [read_signal_auto(path) for path in source.split(",") if path]


def _load_noise_records(source: str) -> dict:
    if source.startswith("synthetic:"):
        seconds = float(source.split(":", 1)[1])
        return make_noise_records(duration_s=seconds, seed=1)
    noise = {}
    for part in source.split(","):
        kind, sep, path = part.partition("=")
        if not sep:
            raise CliError(f"noise spec {part!r} must be kind=path")
        noise[kind.strip()] = read_signal_auto(path.strip())
    return noise


def _run_directory(args) -> Path:
    out = Path(_resolve(args, "out", "."))
    run_id = _resolve(args, "run_id", None)
    if run_id is None:
        run_id = time.strftime("run-%Y%m%d-%H%M%S")
    directory = out / run_id
    directory.mkdir(parents=True, exist_ok=True)
    return directory


# ---------------------------------------------------------------------------
# Subcommands


def cmd_prepare(args) -> int:
    seed = _resolve(args, "seed", 0, int)
    out = Path(_resolve(args, "out", "."))
    out.mkdir(parents=True, exist_ok=True)
    records = _load_clean_records(_resolve(args, "records", None) or "")
    if not records:
        raise CliError("prepare needs --records (paths or synthetic:<count>:<seconds>)")
    noise = _load_noise_records(_resolve(args, "noise", None) or "")
    if not noise:
        raise CliError("prepare needs --noise (kind=path pairs or synthetic:<seconds>)")
    exclude = tuple(
        part for part in str(_resolve(args, "exclude", "102,104")).split(",") if part
    )
    test_per = _resolve(args, "test_per_record", None)
    config = DatasetConfig(
        clean_records=tuple(records),
        noise_records=noise,
        exclude=exclude,
        window_width=_resolve(args, "window_width", 1024, int),
        train_windows_per_record=_resolve(args, "train_per_record", 160, int),
        val_windows_per_record=_resolve(args, "val_per_record", 40, int),
        test_windows_per_record=None if test_per in (None, "none") else int(test_per),
        train_snrs_db=_float_list(_resolve(args, "train_snrs", (-2.5, 0.0, 2.5, 5.0, 7.5))),
        eval_snrs_db=_float_list(
            _resolve(args, "eval_snrs", (-10.0, -7.0, -3.0, -1.0, 3.0, 7.0, 10.0))
        ),
        preprocess=not _resolve(args, "no_preprocess", False, lambda v: v == "true"),
    )
    data = build_experiment_dataset(config, seed)
    save_experiment(out / DATASET_FILE, data)
    write_manifest(out / MANIFEST_FILE, data.manifest)
    print(f"prepared {len(data.train)} train / {len(data.validation)} validation / "
          f"{len(data.test[next(iter(data.test))])} test windows per SNR")
    print(f"wrote {out / DATASET_FILE} and {out / MANIFEST_FILE}")
    return 0


def cmd_train(args) -> int:
    data_dir = Path(_resolve(args, "data", "."))
    dataset_path = data_dir / DATASET_FILE
    if not dataset_path.exists():
        raise CliError(f"no prepared dataset at {dataset_path} (run prepare first)")
    data = load_experiment(dataset_path)
    out = Path(_resolve(args, "out", "."))
    out.mkdir(parents=True, exist_ok=True)
    variant = _resolve(args, "variant", "fcn")
    k = _resolve(args, "k", 1, int)
    seed = _resolve(args, "seed", 0, int)
    window_width = data.train.noisy.shape[1]
    spec = ModelSpec(
        variant,
        k=k if variant in ("forward", "backward") else 0,
        input_length=window_width,
        seed=seed,
    )
    net = init_parameters(build_model(spec), seed=seed)
    cfg = TrainConfig(
        epochs=_resolve(args, "epochs", 200, int),
        batch_size=_resolve(args, "batch_size", 200, int),
        seed=seed,
        lr=_resolve(args, "lr", 1e-4, float),
        record_walltime=not args.deterministic,
    )
    net, history = train(net, data, cfg)
    save_checkpoint(net, out / CHECKPOINT_FILE)
    write_history(out / HISTORY_FILE, history)
    print(f"best validation loss {min(history.val_loss):.6g} "
          f"at epoch {history.checkpoint_epoch}")
    print(f"wrote {out / CHECKPOINT_FILE} and {out / HISTORY_FILE}")
    return 0


def _denoise_signal(net, samples: np.ndarray) -> np.ndarray:
    """Min-max normalize, tile, denoise, reassemble, denormalize.

    The final partial window is reflect-padded from the signal tail and
    trimmed after inference.
    """
    width = net.spec.input_length
    n = len(samples)
    if n < width:
        raise CliError(f"input has {n} samples, needs at least {width}")
    lo, hi = float(samples.min()), float(samples.max())
    scale = hi - lo
    if scale == 0:
        raise CliError("input signal is constant")
    normalized = (samples - lo) / scale
    remainder = n % width
    padded = normalized
    if remainder:
        padded = np.pad(normalized, (0, width - remainder), mode="reflect")
    windows = padded.reshape(-1, width)
    restored = np.empty_like(windows)
    for start in range(0, len(windows), 64):
        batch = windows[start:start + 64, :, None]
        restored[start:start + 64] = net.forward(batch, train=False)[..., 0]
    flat = restored.reshape(-1)[:n]
    return flat * scale + lo


def cmd_denoise(args) -> int:
    checkpoint = _resolve(args, "checkpoint", None)
    source = _resolve(args, "input", None)
    output = _resolve(args, "output", None)
    if not checkpoint or not source or not output:
        raise CliError("denoise needs --checkpoint, --input, and --output")
    net = load_checkpoint(checkpoint)
    record = read_signal_auto(source)
    denoised = _denoise_signal(net, record.samples)
    out_record = SignalRecord(record.name + "_denoised", denoised,
                              record.sampling_rate_hz)
    text = str(output)
    if text.endswith(".csv"):
        write_csv_signal(output, out_record)
    elif text.endswith(".sig"):
        write_raw_signal(output, out_record)
    elif text.endswith(".hea") or text.endswith(".dat"):
        stem = text[:-4]
        gain, baseline = 200.0, 1024
        adc = np.clip(np.rint(denoised * gain + baseline), -2048, 2047).astype(int)
        write_wfdb_record(stem + ".hea", stem + ".dat", out_record.name, [adc],
                          record.sampling_rate_hz, gain=gain, baseline=baseline)
    else:
        raise CliError(f"unknown output format for {output} (.csv/.sig/.hea)")
    windows_csv = _resolve(args, "windows_csv", None)
    if windows_csv:
        width = net.spec.input_length
        count = len(record.samples) // width
        with open(windows_csv, "w", encoding="ascii") as fh:
            fh.write("window,start,input_rms_error,output_rms_error\n")
            for i in range(count):
                segment = slice(i * width, (i + 1) * width)
                fh.write(f"{i},{i * width},"
                         f"{float(np.std(record.samples[segment]))!r},"
                         f"{float(np.std(denoised[segment]))!r}\n")
    print(f"denoised {len(record.samples)} samples -> {output}")
    return 0


def cmd_evaluate(args) -> int:
    checkpoints = _resolve(args, "checkpoints", None)
    data_dir = Path(_resolve(args, "data", "."))
    if not checkpoints:
        raise CliError("evaluate needs --checkpoints (comma-separated paths)")
    dataset_path = data_dir / DATASET_FILE
    if not dataset_path.exists():
        raise CliError(f"no prepared dataset at {dataset_path}")
    data = load_experiment(dataset_path)
    run_dir = _run_directory(args)
    report = MetricsReport(snrs=tuple(sorted(data.test)))
    for path in str(checkpoints).split(","):
        net = load_checkpoint(path.strip())
        spec = net.spec
        label = spec.variant if spec.variant in ("fcn", "all") else f"{spec.variant}-{spec.k}"
        row = evaluate_model(net, data.test)
        report.add_run(label, spec.variant, spec.k, row)
    (run_dir / "report.csv").write_text(report.to_csv_text())
    (run_dir / "rmse.txt").write_text(report.to_table_text("rmse"))
    (run_dir / "snr_improvement.txt").write_text(
        report.to_table_text("snr_improvement_db")
    )
    (run_dir / "prd.txt").write_text(report.to_table_text("prd_percent"))
    print(f"evaluated {len(report.labels())} checkpoints -> {run_dir}")
    return 0


def cmd_decompose(args) -> int:
    source = _resolve(args, "input", None)
    if not source:
        raise CliError("decompose needs --input")
    record = read_signal_auto(source)
    levels = _resolve(args, "levels", 3, int)
    usable = (len(record.samples) // 2**levels) * 2**levels
    if usable == 0:
        raise CliError(f"input too short for {levels} levels")
    report = decomposition_report(
        record.samples[:usable], levels=levels,
        sampling_rate_hz=record.sampling_rate_hz,
    )
    run_dir = _run_directory(args)
    files = write_decomposition_csv(report, run_dir)
    if _resolve(args, "svg", False, lambda v: v == "true"):
        write_decomposition_svg(report, run_dir / "bands.svg")
        files.append(str(run_dir / "bands.svg"))
    print(f"wrote {len(files)} band files -> {run_dir}")
    return 0


def cmd_describe(args) -> int:
    variant = _resolve(args, "variant", "fcn")
    k = _resolve(args, "k", 1, int)
    spec = ModelSpec(
        variant,
        k=k if variant in ("forward", "backward") else 0,
        input_length=_resolve(args, "window_width", 1024, int),
    )
    print(describe(spec))
    return 0


def cmd_ablation(args) -> int:
    records = _load_clean_records(_resolve(args, "records", None) or "")
    if not records:
        raise CliError("ablation needs --records")
    noise = _load_noise_records(_resolve(args, "noise", None) or "")
    if not noise:
        raise CliError("ablation needs --noise")
    variants = []
    for token in str(_resolve(args, "variants", "fcn,backward-1")).split(","):
        token = token.strip()
        if token in ("fcn", "all"):
            variants.append((token, 0 if token == "fcn" else 5))
        else:
            name, _, depth = token.partition("-")
            if name not in ("forward", "backward") or not depth.isdigit():
                raise CliError(f"bad variant token {token!r}")
            variants.append((name, int(depth)))
    test_per = _resolve(args, "test_per_record", None)
    dataset = DatasetConfig(
        clean_records=tuple(records),
        noise_records=noise,
        exclude=tuple(
            part for part in str(_resolve(args, "exclude", "")).split(",") if part
        ),
        window_width=_resolve(args, "window_width", 1024, int),
        train_windows_per_record=_resolve(args, "train_per_record", 160, int),
        val_windows_per_record=_resolve(args, "val_per_record", 40, int),
        test_windows_per_record=None if test_per in (None, "none") else int(test_per),
        train_snrs_db=_float_list(_resolve(args, "train_snrs", (-2.5, 0.0, 2.5, 5.0, 7.5))),
        eval_snrs_db=_float_list(
            _resolve(args, "eval_snrs", (-10.0, -7.0, -3.0, -1.0, 3.0, 7.0, 10.0))
        ),
    )
    config = AblationConfig(
        dataset=dataset,
        train=TrainConfig(
            epochs=_resolve(args, "epochs", 200, int),
            batch_size=_resolve(args, "batch_size", 200, int),
            lr=_resolve(args, "lr", 1e-4, float),
            record_walltime=not args.deterministic,
        ),
        variants=tuple(variants),
        repetitions=_resolve(args, "repetitions", 1, int),
        seed=_resolve(args, "seed", 0, int),
    )
    run_dir = _run_directory(args)
    verbose = bool(getattr(args, "verbose", False))
    report = run_ablation(config, progress=print if verbose else None)
    (run_dir / "report.csv").write_text(report.to_csv_text())
    (run_dir / "rmse.txt").write_text(report.to_table_text("rmse"))
    (run_dir / "snr_improvement.txt").write_text(
        report.to_table_text("snr_improvement_db")
    )
    (run_dir / "prd.txt").write_text(report.to_table_text("prd_percent"))
    print(f"ablation over {len(variants)} variants x {config.repetitions} reps "
          f"-> {run_dir}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_common(sub):
    sub.add_argument("--config", help="key = value config file")
    sub.add_argument("--seed", help="master seed (default 0)")
    sub.add_argument("--out", help="output directory (default .)")
    sub.add_argument("--threads", help="worker threads (advisory; default 1)")
    sub.add_argument("--deterministic", action="store_true",
                     help="suppress wall-time in histories for bit-stable outputs")
    sub.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavedae",
        description="Wavelet-integrated convolutional autoencoders for signal denoising",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("prepare", help="build the train/val/test dataset")
    _add_common(p)
    p.add_argument("--records", help="record paths or synthetic:<count>:<seconds>")
    p.add_argument("--noise", help="kind=path pairs or synthetic:<seconds>")
    p.add_argument("--exclude")
    p.add_argument("--window-width", dest="window_width")
    p.add_argument("--train-per-record", dest="train_per_record")
    p.add_argument("--val-per-record", dest="val_per_record")
    p.add_argument("--test-per-record", dest="test_per_record")
    p.add_argument("--train-snrs", dest="train_snrs")
    p.add_argument("--eval-snrs", dest="eval_snrs")
    p.add_argument("--no-preprocess", dest="no_preprocess", action="store_const",
                   const="true")
    p.set_defaults(func=cmd_prepare)

    p = commands.add_parser("train", help="train one variant on a prepared dataset")
    _add_common(p)
    p.add_argument("--data", help="directory holding dataset.bin")
    p.add_argument("--variant", choices=("fcn", "forward", "backward", "all"))
    p.add_argument("--k")
    p.add_argument("--epochs")
    p.add_argument("--batch-size", dest="batch_size")
    p.add_argument("--lr")
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("denoise", help="denoise a signal file with a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--windows-csv", dest="windows_csv")
    p.set_defaults(func=cmd_denoise)

    p = commands.add_parser("evaluate", help="metrics tables for checkpoints")
    _add_common(p)
    p.add_argument("--checkpoints", help="comma-separated checkpoint paths")
    p.add_argument("--data", help="directory holding dataset.bin")
    p.add_argument("--run-id", dest="run_id")
    p.set_defaults(func=cmd_evaluate)

    p = commands.add_parser("decompose", help="subband decomposition exports")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--levels")
    p.add_argument("--svg", action="store_const", const="true")
    p.add_argument("--run-id", dest="run_id")
    p.set_defaults(func=cmd_decompose)

    p = commands.add_parser("describe", help="print a variant's layer trace")
    _add_common(p)
    p.add_argument("--variant", choices=("fcn", "forward", "backward", "all"))
    p.add_argument("--k")
    p.add_argument("--window-width", dest="window_width")
    p.set_defaults(func=cmd_describe)

    p = commands.add_parser("ablation", help="train and compare many variants")
    _add_common(p)
    p.add_argument("--records")
    p.add_argument("--noise")
    p.add_argument("--exclude")
    p.add_argument("--variants", help="e.g. fcn,forward-2,backward-1,all")
    p.add_argument("--repetitions")
    p.add_argument("--epochs")
    p.add_argument("--batch-size", dest="batch_size")
    p.add_argument("--lr")
    p.add_argument("--window-width", dest="window_width")
    p.add_argument("--train-per-record", dest="train_per_record")
    p.add_argument("--val-per-record", dest="val_per_record")
    p.add_argument("--test-per-record", dest="test_per_record")
    p.add_argument("--train-snrs", dest="train_snrs")
    p.add_argument("--eval-snrs", dest="eval_snrs")
    p.add_argument("--run-id", dest="run_id")
    p.set_defaults(func=cmd_ablation)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        threads = _resolve(args, "threads", 1, int)
        if threads < 1:
            raise CliError("--threads must be >= 1")
        keys = {
            key for key in vars(args)
            if key not in ("config", "func", "command", "deterministic", "verbose")
        }
        _apply_config(args, keys)
        return args.func(args)
    except (ValueError, OSError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
