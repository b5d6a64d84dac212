"""Loss, optimizer, the training loop, and the ablation driver.

Randomness is budgeted per purpose so results never depend on evaluation
order: batch shuffling draws from a (seed, epoch) stream and dropout masks
from a (seed, epoch, batch) stream.  With a fixed seed a single-threaded
run is bit-reproducible end to end.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetConfig, ExperimentData, build_experiment_dataset
from .evaluation import MetricsReport, evaluate_model
from .model import ModelSpec, Network, build_model, init_parameters

__all__ = [
    "AdamState",
    "TrainConfig",
    "TrainHistory",
    "AblationConfig",
    "TrainingDivergedError",
    "mse_loss",
    "adam_step",
    "train",
    "run_ablation",
    "write_history",
    "read_history",
    "derive_seed",
]


class TrainingDivergedError(RuntimeError):
    """Loss turned non-finite; message names the epoch and batch."""


def derive_seed(*parts: int) -> int:
    """Deterministic child seed from integer coordinates."""
    return int(np.random.SeedSequence(tuple(parts)).generate_state(1)[0])


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements and its gradient wrt pred."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, target {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff**2))
    return loss, (2.0 / diff.size) * diff


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates plus hyperparameters."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict, lr: float = 1e-4) -> "AdamState":
        state = cls(lr=lr)
        state.m = {name: np.zeros_like(arr) for name, arr in params.items()}
        state.v = {name: np.zeros_like(arr) for name, arr in params.items()}
        return state


def adam_step(params: dict, grads: dict, state: AdamState) -> AdamState:
    """Standard bias-corrected Adam update, applied in place."""
    state.t += 1
    correction1 = 1.0 - state.beta1**state.t
    correction2 = 1.0 - state.beta2**state.t
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m[...] = state.beta1 * m + (1.0 - state.beta1) * grad
        v[...] = state.beta2 * v + (1.0 - state.beta2) * grad**2
        param -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
    return state


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 200
    seed: int = 0
    lr: float = 1e-4
    eval_batch_size: int = 256
    record_walltime: bool = True  # off in deterministic mode so CSVs are stable

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class TrainHistory:
    train_loss: list
    val_loss: list
    seconds: list
    checkpoint_epoch: int

    def __len__(self):
        return len(self.train_loss)


def _as_tensor(windows: np.ndarray) -> np.ndarray:
    return windows[:, :, None]


def _infer_loss(net: Network, noisy, clean, batch_size: int) -> float:
    total = 0.0
    count = 0
    for start in range(0, len(noisy), batch_size):
        xb = _as_tensor(noisy[start:start + batch_size])
        yb = _as_tensor(clean[start:start + batch_size])
        pred = net.forward(xb, train=False)
        total += float(np.sum((pred - yb) ** 2))
        count += yb.size
    return total / count


def train(net: Network, data: ExperimentData, cfg: TrainConfig) -> tuple[Network, TrainHistory]:
    """Mini-batch Adam training with best-on-validation checkpointing.

    Returns the network restored to its best-validation parameters and the
    per-epoch history; ties in validation loss keep the earliest epoch.
    """
    if len(data.train) == 0 or len(data.validation) == 0:
        raise ValueError("training and validation splits must be non-empty")
    params = net.params()
    adam = AdamState.for_params(params, lr=cfg.lr)
    history = TrainHistory([], [], [], checkpoint_epoch=0)
    best_val = np.inf
    best_snap = None
    n = len(data.train)
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        shuffle_rng = np.random.default_rng(derive_seed(cfg.seed, 10, epoch))
        order = shuffle_rng.permutation(n)
        epoch_sse = 0.0
        epoch_count = 0
        for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
            rows = order[start:start + cfg.batch_size]
            xb = _as_tensor(data.train.noisy[rows])
            yb = _as_tensor(data.train.clean[rows])
            net.set_dropout_rng(
                np.random.default_rng(derive_seed(cfg.seed, 20, epoch, batch_index))
            )
            pred = net.forward(xb, train=True)
            loss, grad = mse_loss(pred, yb)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}"
                )
            net.zero_grads()
            net.backward(grad)
            adam_step(params, net.grads(), adam)
            epoch_sse += loss * yb.size
            epoch_count += yb.size
        val_loss = _infer_loss(
            net, data.validation.noisy, data.validation.clean, cfg.eval_batch_size
        )
        history.train_loss.append(epoch_sse / epoch_count)
        history.val_loss.append(val_loss)
        history.seconds.append(
            time.perf_counter() - started if cfg.record_walltime else 0.0
        )
        if val_loss < best_val:
            best_val = val_loss
            best_snap = net.snapshot()
            history.checkpoint_epoch = epoch
    net.restore(best_snap)
    return net, history


def write_history(path, history: TrainHistory):
    with open(path, "w", encoding="ascii") as fh:
        fh.write("epoch,train_loss,val_loss,seconds\n")
        for epoch, (tl, vl, sec) in enumerate(
            zip(history.train_loss, history.val_loss, history.seconds)
        ):
            fh.write(f"{epoch},{tl!r},{vl!r},{sec!r}\n")
        fh.write(f"# checkpoint_epoch={history.checkpoint_epoch}\n")


def read_history(path) -> TrainHistory:
    history = TrainHistory([], [], [], checkpoint_epoch=0)
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("# checkpoint_epoch="):
                history.checkpoint_epoch = int(line.split("=", 1)[1])
                continue
            if not line or line.startswith("epoch,") or line.startswith("#"):
                continue
            _epoch, tl, vl, sec = line.split(",")
            history.train_loss.append(float(tl))
            history.val_loss.append(float(vl))
            history.seconds.append(float(sec))
    return history


@dataclass(frozen=True)
class AblationConfig:
    """Variant sweep: everything needed to reproduce the comparison tables."""

    dataset: DatasetConfig
    train: TrainConfig
    variants: tuple = (
        ("fcn", 0),
        ("forward", 1), ("forward", 2), ("forward", 3), ("forward", 4),
        ("backward", 1), ("backward", 2), ("backward", 3), ("backward", 4),
        ("all", 5),
    )
    repetitions: int = 1
    seed: int = 0


def _variant_label(variant: str, k: int) -> str:
    if variant == "fcn":
        return "fcn"
    if variant == "all":
        return "all-wavelet"
    return f"{variant}-{k}"


def run_ablation(config: AblationConfig, progress=None) -> MetricsReport:
    """Train and evaluate every configured variant over the repetitions.

    Within one repetition all variants see the same dataset realization so
    the comparison is paired; datasets, initializations, and batch order
    all change between repetitions via run-indexed seeds.
    """
    report = MetricsReport(snrs=tuple(float(s) for s in config.dataset.eval_snrs_db))
    for rep in range(config.repetitions):
        data = build_experiment_dataset(
            config.dataset, seed=derive_seed(config.seed, 100, rep)
        )
        for index, (variant, k) in enumerate(config.variants):
            spec = ModelSpec(variant, k=k if variant in ("forward", "backward") else 0,
                             input_length=config.dataset.window_width,
                             seed=derive_seed(config.seed, 300, rep, index))
            net = init_parameters(build_model(spec), seed=spec.seed)
            cfg = TrainConfig(
                epochs=config.train.epochs,
                batch_size=config.train.batch_size,
                seed=derive_seed(config.seed, 200, rep),
                lr=config.train.lr,
                eval_batch_size=config.train.eval_batch_size,
                record_walltime=config.train.record_walltime,
            )
            net, history = train(net, data, cfg)
            label = _variant_label(variant, k)
            if progress is not None:
                progress(
                    f"rep {rep} {label}: best val {min(history.val_loss):.6f} "
                    f"at epoch {history.checkpoint_epoch}"
                )
            row = evaluate_model(net, data.test, batch_size=cfg.eval_batch_size)
            report.add_run(label, variant, k, row)
    return report
