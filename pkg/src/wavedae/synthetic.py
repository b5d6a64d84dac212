"""Synthetic pseudo-ECG and noise generators for desk-scale experiments.

Real recordings stay licensing-clean outside the repository; everything the
tests, demos, and toy experiments need is generated here.  The pseudo-ECG
is a sum of Gaussian bumps (P, Q, R, S, T) placed at jittered beat times,
which keeps the signal smooth and effectively band-limited well below the
100 Hz preprocessing cut.
"""

from __future__ import annotations

import numpy as np

from .data import DatasetConfig, ExperimentData, SignalRecord, build_experiment_dataset

__all__ = [
    "pseudo_ecg",
    "make_noise_record",
    "make_synthetic_records",
    "make_noise_records",
    "make_toy_dataset",
]

# (offset as fraction of the beat period, width in seconds, amplitude)
_WAVES = (
    (-0.18, 0.025, 0.12),   # P
    (-0.035, 0.010, -0.14), # Q
    (0.0, 0.012, 1.0),      # R
    (0.035, 0.012, -0.22),  # S
    (0.22, 0.045, 0.28),    # T
)


def pseudo_ecg(n_samples: int, fs: float = 360.0, bpm: float = 72.0, rng=None) -> np.ndarray:
    """Band-limited PQRST-like waveform with slight beat-to-beat jitter."""
    rng = np.random.default_rng(rng)
    duration = n_samples / fs
    out = np.zeros(n_samples)
    period = 60.0 / bpm
    beat = -period
    while beat < duration + period:
        beat_period = period * (1.0 + 0.04 * rng.standard_normal())
        beat_gain = 1.0 + 0.08 * rng.standard_normal()
        for offset, width, amplitude in _WAVES:
            center = beat + offset * beat_period
            # each bump is negligible beyond 6 sigma; touch only that slice
            lo = max(0, int((center - 6 * width) * fs))
            hi = min(n_samples, int((center + 6 * width) * fs) + 1)
            if hi <= lo:
                continue
            t = np.arange(lo, hi) / fs
            out[lo:hi] += beat_gain * amplitude * np.exp(
                -((t - center) ** 2) / (2 * width**2)
            )
        beat += beat_period
    return out


_KIND_CODES = {"bw": 0, "em": 1, "ma": 2}


def make_noise_record(kind: str, n_samples: int, fs: float, seed: int) -> SignalRecord:
    """One synthetic noise recording: bw drift, em wander, or ma white noise."""
    if kind not in _KIND_CODES:
        raise ValueError(f"unknown noise kind {kind!r}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, _KIND_CODES[kind])))
    t = np.arange(n_samples) / fs
    if kind == "bw":
        out = np.zeros(n_samples)
        for _ in range(3):
            freq = rng.uniform(0.1, 0.45)
            phase = rng.uniform(0, 2 * np.pi)
            out += rng.uniform(0.4, 1.0) * np.sin(2 * np.pi * freq * t + phase)
    elif kind == "em":
        walk = np.cumsum(rng.standard_normal(n_samples))
        trend = np.linspace(walk[0], walk[-1], n_samples)
        out = (walk - trend) / np.sqrt(n_samples)
    else:
        out = rng.standard_normal(n_samples)
    return SignalRecord(f"noise_{kind}", out, fs)


def make_synthetic_records(
    count: int, duration_s: float, fs: float = 360.0, seed: int = 0
) -> list[SignalRecord]:
    """Distinct pseudo-patients: heart rates and morphologies vary per record."""
    records = []
    n_samples = int(round(duration_s * fs))
    for index in range(count):
        rng = np.random.default_rng(np.random.SeedSequence((seed, index)))
        bpm = rng.uniform(55.0, 95.0)
        scale = rng.uniform(0.8, 1.3)
        samples = scale * pseudo_ecg(n_samples, fs=fs, bpm=bpm, rng=rng)
        records.append(SignalRecord(f"S{index:02d}", samples, fs))
    return records


def make_noise_records(
    duration_s: float, fs: float = 360.0, seed: int = 0
) -> dict[str, SignalRecord]:
    n_samples = int(round(duration_s * fs))
    return {
        kind: make_noise_record(kind, n_samples, fs, seed) for kind in ("bw", "em", "ma")
    }


def make_toy_dataset(seed: int = 0, snr_db: float = 0.0) -> ExperimentData:
    """200 pseudo-ECG windows mixed with white and low-frequency noise.

    Two ten-minute synthetic records feed the full pipeline; after outlier
    rejection each contributes 70 training, 15 validation, and 15 test
    windows, all mixed at the single given SNR.
    """
    records = make_synthetic_records(2, duration_s=600.0, seed=seed)
    noise = {
        "bw": make_noise_record("bw", 216_000, 360.0, seed + 1),
        "ma": make_noise_record("ma", 216_000, 360.0, seed + 2),
    }
    config = DatasetConfig(
        clean_records=tuple(records),
        noise_records=noise,
        exclude=(),
        train_windows_per_record=70,
        val_windows_per_record=15,
        test_windows_per_record=15,
        train_snrs_db=(snr_db,),
        eval_snrs_db=(snr_db,),
    )
    return build_experiment_dataset(config, seed)
