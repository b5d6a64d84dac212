"""Wavelet-integrated convolutional autoencoders for 1D signal denoising.

The package is organized as a small numpy library: ``wavelet`` holds the
db6 filter bank and periodic transforms, ``layers`` the differentiable
layer set, ``model`` the architecture builder, ``data`` the ingestion and
experiment pipeline, ``training`` the optimizer and loops, ``evaluation``
the metrics and reports, and ``cli`` the command-line workflow.
"""

from .wavelet import (
    FilterBank,
    WaveletDecomposition,
    dwt_step,
    idwt_step,
    make_db6_filters,
    wavedec,
    waverec,
)
from .layers import (
    BatchNorm,
    Conv1d,
    Dropout,
    DwtLayer,
    Elu,
    IdwtLayer,
    TransposeConv1d,
    gradient_check,
)
from .model import ModelSpec, Network, build_model, describe, init_parameters, shape_trace
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import (
    DatasetConfig,
    ExperimentData,
    SignalRecord,
    WindowPairs,
    WindowSet,
    build_experiment_dataset,
    extract_windows,
    load_experiment,
    mix_noise,
    normalize_per_record,
    preprocess_reference,
    read_wfdb_record,
    save_experiment,
    snr_db,
    write_wfdb_record,
)
from .synthetic import make_noise_records, make_synthetic_records, make_toy_dataset, pseudo_ecg
from .training import (
    AblationConfig,
    AdamState,
    TrainConfig,
    TrainHistory,
    adam_step,
    mse_loss,
    run_ablation,
    train,
)
from .evaluation import (
    MetricsReport,
    decomposition_report,
    evaluate_model,
    prd,
    rmse,
    snr_improvement,
)

__version__ = "0.1.0"
