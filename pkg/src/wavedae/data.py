"""Signal ingestion, preprocessing, windowing, and noise-calibrated mixing.

Supported on-disk formats:

* WFDB format 212: text header (``.hea``) plus packed binary signal
  (``.dat``) holding two 12-bit two's-complement samples per 3 bytes,
  ``s1 = (b1 & 0x0F) << 8 | b0`` and ``s2 = (b1 & 0xF0) << 4 | b2``, samples
  interleaved across channels and converted to physical units via the
  header's per-channel gain and baseline;
* CSV: one sample per line, optional ``# fs=<Hz>`` comment line;
* raw float32: 16-byte header (magic ``WSIG``, version uint32, fs float32,
  length uint32) followed by little-endian float32 samples.

The experiment builder follows a fixed per-record protocol: band-pass the
reference (zero-phase Butterworth, 5th order each way, 0.67 Hz high-pass
and 100 Hz low-pass, then a 5-point moving average), tile into
non-overlapping windows, drop windows whose mean power falls outside the
open (5th, 95th) percentile interval, min-max normalize per record, split
temporally (first 90% of windows to training, of which the last 20% is
validation), then draw the requested number of windows per record at
random and pair each with a noise segment at a calibrated SNR.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np
from scipy import signal as sps

__all__ = [
    "SignalRecord",
    "WindowSet",
    "WindowPairs",
    "ExperimentData",
    "DatasetConfig",
    "NormalizationParams",
    "HeaderParseError",
    "SignalParseError",
    "UnsupportedFormatError",
    "WindowShortageError",
    "read_wfdb_record",
    "write_wfdb_record",
    "read_csv_signal",
    "write_csv_signal",
    "read_raw_signal",
    "write_raw_signal",
    "read_signal_auto",
    "preprocess_reference",
    "extract_windows",
    "normalize_per_record",
    "denormalize",
    "mix_noise",
    "snr_db",
    "build_experiment_dataset",
    "save_experiment",
    "load_experiment",
    "write_manifest",
    "read_manifest",
]

RAW_MAGIC = b"WSIG"
RAW_VERSION = 1
NOISE_KINDS = ("bw", "em", "ma")


class HeaderParseError(ValueError):
    """Malformed WFDB header text."""


class SignalParseError(ValueError):
    """Malformed or truncated WFDB signal payload; names the byte offset."""


class UnsupportedFormatError(HeaderParseError):
    """Header declares a storage format other than 212."""


class WindowShortageError(ValueError):
    """A record cannot supply the requested number of windows."""


@dataclass(frozen=True)
class SignalRecord:
    """A named single-channel recording."""

    name: str
    samples: np.ndarray
    sampling_rate_hz: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sampling_rate_hz <= 0:
            raise ValueError("sampling_rate_hz must be positive")
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1D vector")
        if not np.isfinite(samples).all():
            raise ValueError(f"record {self.name!r} contains non-finite samples")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sampling_rate_hz


@dataclass(frozen=True)
class WindowSet:
    """Fixed-width windows with (record, start-index) provenance."""

    windows: np.ndarray  # (count, width)
    provenance: tuple
    role: str = ""

    def __post_init__(self):
        if self.windows.ndim != 2:
            raise ValueError("windows must be a (count, width) array")
        if len(self.provenance) != len(self.windows):
            raise ValueError("one provenance entry per window required")
        if len(set(self.provenance)) != len(self.provenance):
            raise ValueError("provenance entries must be unique")


@dataclass(frozen=True)
class NormalizationParams:
    minimum: float
    maximum: float


@dataclass(frozen=True)
class WindowPairs:
    """Aligned noisy/clean windows with their mixing SNRs."""

    noisy: np.ndarray
    clean: np.ndarray
    snr_db: np.ndarray
    provenance: tuple

    def __len__(self):
        return len(self.clean)


@dataclass(frozen=True)
class ExperimentData:
    train: WindowPairs
    validation: WindowPairs
    test: dict  # input SNR (float) -> WindowPairs
    manifest: dict  # str -> str


# ---------------------------------------------------------------------------
# WFDB format 212


def _parse_gain_field(field: str):
    """Parse 'gain(baseline)/units'; gain 0 means the WFDB default of 200."""
    units = None
    if "/" in field:
        field, units = field.split("/", 1)
    baseline = None
    if "(" in field:
        if not field.endswith(")"):
            raise ValueError(f"unbalanced baseline parentheses in {field!r}")
        field, inner = field[:-1].split("(", 1)
        baseline = int(inner)
    gain = float(field)
    if gain == 0:
        gain = 200.0
    return gain, baseline, units


def _parse_header(header_path):
    try:
        text = open(header_path, "r", encoding="ascii").read()
    except OSError as exc:
        raise HeaderParseError(f"{header_path}: {exc}") from exc
    lines = [
        line.strip()
        for line in text.splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not lines:
        raise HeaderParseError(f"{header_path}: empty header")
    fields = lines[0].split()
    if len(fields) < 4:
        raise HeaderParseError(
            f"{header_path}: record line needs name, channels, fs, samples; "
            f"got {lines[0]!r}"
        )
    try:
        name = fields[0]
        n_channels = int(fields[1])
        fs = float(fields[2])
        n_samples = int(fields[3])
    except ValueError as exc:
        raise HeaderParseError(f"{header_path}: bad record line {lines[0]!r}") from exc
    if n_channels < 1:
        raise HeaderParseError(f"{header_path}: needs at least one channel")
    if len(lines) < 1 + n_channels:
        raise HeaderParseError(
            f"{header_path}: header declares {n_channels} channels but lists "
            f"{len(lines) - 1} signal lines"
        )
    channels = []
    for idx, line in enumerate(lines[1:1 + n_channels]):
        fields = line.split()
        if len(fields) < 5:
            raise HeaderParseError(
                f"{header_path}: signal line {idx} too short: {line!r}"
            )
        fmt = fields[1]
        if fmt != "212":
            raise UnsupportedFormatError(
                f"{header_path}: signal line {idx} declares format {fmt!r}; "
                f"only format 212 is supported"
            )
        try:
            gain, baseline, _units = _parse_gain_field(fields[2])
            adc_zero = int(fields[4])
        except ValueError as exc:
            raise HeaderParseError(
                f"{header_path}: signal line {idx} malformed: {line!r}"
            ) from exc
        if baseline is None:
            baseline = adc_zero
        description = " ".join(fields[8:]) if len(fields) > 8 else f"ch{idx}"
        channels.append((gain, baseline, description))
    return name, n_channels, fs, n_samples, channels


def _unpack_212(raw: bytes, total_samples: int, path) -> np.ndarray:
    needed = 3 * ((total_samples + 1) // 2)
    if len(raw) < needed:
        raise SignalParseError(
            f"{path}: signal file ends at byte {len(raw)}, "
            f"needs {needed} bytes for {total_samples} samples"
        )
    if len(raw) > needed:
        raise SignalParseError(
            f"{path}: {len(raw) - needed} unexpected bytes from byte {needed}"
        )
    data = np.frombuffer(raw, dtype=np.uint8)
    b0 = data[0::3].astype(np.int32)
    b1 = data[1::3].astype(np.int32)
    b2 = data[2::3].astype(np.int32)
    first = ((b1 & 0x0F) << 8) | b0
    second = ((b1 & 0xF0) << 4) | b2
    samples = np.empty(2 * len(b0), dtype=np.int32)
    samples[0::2] = first
    samples[1::2] = second
    samples[samples >= 2048] -= 4096
    return samples[:total_samples]


def _pack_212(samples: np.ndarray) -> bytes:
    samples = np.asarray(samples, dtype=np.int64)
    if samples.min(initial=0) < -2048 or samples.max(initial=0) > 2047:
        raise ValueError("format 212 holds 12-bit samples in [-2048, 2047]")
    if len(samples) % 2:
        samples = np.concatenate([samples, [0]])
    unsigned = np.where(samples < 0, samples + 4096, samples).astype(np.uint16)
    first = unsigned[0::2]
    second = unsigned[1::2]
    out = np.empty(3 * len(first), dtype=np.uint8)
    out[0::3] = first & 0xFF
    out[1::3] = ((first >> 8) & 0x0F) | (((second >> 8) & 0x0F) << 4)
    out[2::3] = second & 0xFF
    return out.tobytes()


def read_wfdb_record(header_path, signal_path) -> list[SignalRecord]:
    """Read a format-212 record; returns one SignalRecord per channel."""
    name, n_channels, fs, n_samples, channels = _parse_header(header_path)
    try:
        raw = open(signal_path, "rb").read()
    except OSError as exc:
        raise SignalParseError(f"{signal_path}: {exc}") from exc
    flat = _unpack_212(raw, n_channels * n_samples, signal_path)
    records = []
    for ch, (gain, baseline, description) in enumerate(channels):
        adc = flat[ch::n_channels].astype(np.float64)
        physical = (adc - baseline) / gain
        suffix = "" if n_channels == 1 else f":{description}"
        records.append(SignalRecord(f"{name}{suffix}", physical, fs))
    return records


def write_wfdb_record(
    header_path,
    signal_path,
    name: str,
    channels: list[np.ndarray],
    fs: float,
    gain: float = 200.0,
    baseline: int = 1024,
):
    """Write integer ADC channels as a format-212 record (round-trip inverse)."""
    arrays = [np.asarray(c, dtype=np.int64) for c in channels]
    lengths = {len(a) for a in arrays}
    if len(lengths) != 1:
        raise ValueError("all channels must have the same length")
    n_samples = lengths.pop()
    flat = np.empty(len(arrays) * n_samples, dtype=np.int64)
    for ch, arr in enumerate(arrays):
        flat[ch::len(arrays)] = arr
    signal_name = str(signal_path).rsplit("/", 1)[-1]
    lines = [f"{name} {len(arrays)} {fs:g} {n_samples}"]
    for ch in range(len(arrays)):
        lines.append(
            f"{signal_name} 212 {gain:g}({baseline}) 12 {baseline} 0 0 0 ch{ch}"
        )
    with open(header_path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(signal_path, "wb") as fh:
        fh.write(_pack_212(flat))


# ---------------------------------------------------------------------------
# Plain formats


def read_csv_signal(path) -> SignalRecord:
    fs = 360.0
    values = []
    name = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    with open(path, "r", encoding="ascii") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("fs="):
                    fs = float(body[3:])
                continue
            try:
                values.append(float(line))
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: not a number: {line!r}") from exc
    return SignalRecord(name, np.array(values), fs)


def write_csv_signal(path, record: SignalRecord):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# fs={record.sampling_rate_hz:g}\n")
        for value in record.samples:
            fh.write(f"{float(value)!r}\n")


def read_raw_signal(path) -> SignalRecord:
    raw = open(path, "rb").read()
    if len(raw) < 16:
        raise ValueError(f"{path}: shorter than the 16-byte header")
    magic, version, fs, length = struct.unpack("<4sIfI", raw[:16])
    if magic != RAW_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {RAW_MAGIC!r}")
    if version != RAW_VERSION:
        raise ValueError(f"{path}: unsupported raw format version {version}")
    if len(raw) != 16 + 4 * length:
        raise ValueError(
            f"{path}: payload is {len(raw) - 16} bytes, header declares {length} samples"
        )
    samples = np.frombuffer(raw, dtype="<f4", offset=16).astype(np.float64)
    name = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return SignalRecord(name, samples, float(fs))


def write_raw_signal(path, record: SignalRecord):
    header = struct.pack(
        "<4sIfI", RAW_MAGIC, RAW_VERSION, record.sampling_rate_hz, len(record.samples)
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(record.samples.astype("<f4").tobytes())


def read_signal_auto(path) -> SignalRecord:
    """Dispatch on extension: .hea/.dat (WFDB 212), .csv, or .sig (raw)."""
    text = str(path)
    if text.endswith(".hea"):
        return read_wfdb_record(text, text[:-4] + ".dat")[0]
    if text.endswith(".dat"):
        return read_wfdb_record(text[:-4] + ".hea", text)[0]
    if text.endswith(".csv"):
        return read_csv_signal(text)
    if text.endswith(".sig"):
        return read_raw_signal(text)
    raise ValueError(f"{path}: unknown signal format (expected .hea/.dat/.csv/.sig)")


# ---------------------------------------------------------------------------
# Preprocessing and windowing


def preprocess_reference(record: SignalRecord) -> SignalRecord:
    """Band-pass the reference signal and smooth it; length is preserved.

    Zero-phase (forward-backward) Butterworth filters, 5th order per pass:
    high-pass at 0.67 Hz, low-pass at 100 Hz, then a centered 5-point
    moving average with zero-padded edges.
    """
    fs = record.sampling_rate_hz
    if fs <= 200.0:
        raise ValueError(
            f"record {record.name!r}: sampling rate {fs} Hz leaves no room "
            f"for the 100 Hz low-pass"
        )
    hp_b, hp_a = sps.butter(5, 0.67, btype="highpass", fs=fs)
    lp_b, lp_a = sps.butter(5, 100.0, btype="lowpass", fs=fs)
    x = sps.filtfilt(hp_b, hp_a, record.samples)
    x = sps.filtfilt(lp_b, lp_a, x)
    x = np.convolve(x, np.full(5, 0.2), mode="same")
    return replace(record, samples=x)


def extract_windows(
    record: SignalRecord,
    width: int = 1024,
    percentile_reject: tuple[float, float] | None = (5.0, 95.0),
) -> WindowSet:
    """Tile into non-overlapping windows and drop power outliers.

    A window survives only if its mean power lies strictly inside the open
    interval between the two power percentiles (linear interpolation), so
    with n distinct powers and the default (5, 95) cut roughly 10% of the
    windows fall away.
    """
    n = len(record.samples)
    if n < width:
        raise ValueError(
            f"record {record.name!r} has {n} samples, shorter than one "
            f"window of {width}"
        )
    count = n // width
    windows = record.samples[:count * width].reshape(count, width)
    starts = np.arange(count) * width
    if percentile_reject is not None:
        powers = np.mean(windows**2, axis=1)
        low, high = np.percentile(powers, percentile_reject)
        keep = (powers > low) & (powers < high)
        windows = windows[keep]
        starts = starts[keep]
    provenance = tuple((record.name, int(s)) for s in starts)
    return WindowSet(windows=windows, provenance=provenance)


def normalize_per_record(window_set: WindowSet) -> tuple[WindowSet, NormalizationParams]:
    """Min-max scale all of a record's windows to [0, 1] with one shared range."""
    if len(window_set.windows) == 0:
        raise ValueError("cannot normalize an empty window set")
    minimum = float(window_set.windows.min())
    maximum = float(window_set.windows.max())
    if maximum == minimum:
        raise ValueError("degenerate constant record cannot be normalized")
    scaled = (window_set.windows - minimum) / (maximum - minimum)
    params = NormalizationParams(minimum=minimum, maximum=maximum)
    return replace(window_set, windows=scaled), params


def denormalize(windows: np.ndarray, params: NormalizationParams) -> np.ndarray:
    return windows * (params.maximum - params.minimum) + params.minimum


# ---------------------------------------------------------------------------
# Noise mixing


def snr_db(clean: np.ndarray, noisy: np.ndarray) -> float:
    """10 log10 of clean power over additive-error power."""
    clean = np.asarray(clean, dtype=np.float64)
    error = np.asarray(noisy, dtype=np.float64) - clean
    return 10.0 * np.log10(np.mean(clean**2) / np.mean(error**2))


def mix_noise(clean, noise, target_snr_db: float) -> np.ndarray:
    """Add noise scaled so the mixture hits the target SNR exactly."""
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if clean.shape != noise.shape:
        raise ValueError(f"shape mismatch: clean {clean.shape}, noise {noise.shape}")
    noise_power = np.mean(noise**2)
    if noise_power == 0.0:
        raise ValueError("noise has zero power")
    clean_power = np.mean(clean**2)
    alpha = np.sqrt(clean_power / (noise_power * 10.0 ** (target_snr_db / 10.0)))
    return clean + alpha * noise


# ---------------------------------------------------------------------------
# Experiment assembly


@dataclass(frozen=True)
class DatasetConfig:
    """Everything the experiment builder needs besides the seed."""

    clean_records: tuple
    noise_records: dict  # kind -> SignalRecord, kinds from NOISE_KINDS
    exclude: tuple = ("102", "104")
    window_width: int = 1024
    train_windows_per_record: int = 160
    val_windows_per_record: int = 40
    test_windows_per_record: int | None = None  # None keeps the whole test tail
    train_snrs_db: tuple = (-2.5, 0.0, 2.5, 5.0, 7.5)
    eval_snrs_db: tuple = (-10.0, -7.0, -3.0, -1.0, 3.0, 7.0, 10.0)
    test_fraction: float = 0.10
    val_fraction: float = 0.20
    percentile_reject: tuple | None = (5.0, 95.0)
    preprocess: bool = True
    renormalize_noisy: bool = False

    def __post_init__(self):
        if not self.clean_records:
            raise ValueError("at least one clean record is required")
        unknown = set(self.noise_records) - set(NOISE_KINDS)
        if unknown:
            raise ValueError(f"unknown noise kinds {sorted(unknown)}")
        if not self.noise_records:
            raise ValueError("at least one noise record is required")
        if not 0.0 < self.test_fraction < 1.0 or not 0.0 < self.val_fraction < 1.0:
            raise ValueError("split fractions must be in (0, 1)")


def _draw_noise_segment(rng, noise_records, width):
    kinds = sorted(noise_records)
    kind = kinds[rng.integers(len(kinds))]
    noise = noise_records[kind].samples
    if len(noise) < width:
        raise ValueError(
            f"noise record {kind!r} has {len(noise)} samples, needs {width}"
        )
    offset = int(rng.integers(len(noise) - width + 1))
    return noise[offset:offset + width]


def _select(rng, pool_size: int, count: int, record_name: str, role: str):
    if pool_size < count:
        raise WindowShortageError(
            f"record {record_name!r}: {role} pool has {pool_size} windows, "
            f"{count} requested"
        )
    return np.sort(rng.choice(pool_size, size=count, replace=False))


def _mix_pool(rng, windows, provenance, snrs, noise_records, width, renormalize):
    noisy = np.empty_like(windows)
    chosen = np.empty(len(windows))
    for i, clean in enumerate(windows):
        segment = _draw_noise_segment(rng, noise_records, width)
        target = float(snrs[rng.integers(len(snrs))])
        mixed = mix_noise(clean, segment, target)
        if renormalize:
            span = mixed.max() - mixed.min()
            if span > 0:
                mixed = (mixed - mixed.min()) / span
        noisy[i] = mixed
        chosen[i] = target
    return WindowPairs(
        noisy=noisy, clean=windows.copy(), snr_db=chosen, provenance=tuple(provenance)
    )


def build_experiment_dataset(config: DatasetConfig, seed: int) -> ExperimentData:
    """Assemble deterministic train/validation/test noisy-clean pairs.

    Each test window draws one noise segment and is mixed once per
    evaluation SNR, so the test columns differ only in noise amplitude.
    """
    train_clean, train_prov = [], []
    val_clean, val_prov = [], []
    test_clean, test_prov = [], []
    manifest_rows = []

    kept_records = [
        rec for rec in config.clean_records if rec.name not in config.exclude
    ]
    if not kept_records:
        raise ValueError("record exclusions removed every record")

    for index, record in enumerate(kept_records):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 1, index)))
        prepared = preprocess_reference(record) if config.preprocess else record
        window_set = extract_windows(
            prepared, config.window_width, config.percentile_reject
        )
        if len(window_set.windows) == 0:
            raise WindowShortageError(
                f"record {record.name!r}: no windows survive outlier rejection"
            )
        window_set, _params = normalize_per_record(window_set)
        windows, provenance = window_set.windows, window_set.provenance

        n = len(windows)
        n_train_region = int(np.floor((1.0 - config.test_fraction) * n))
        n_val = int(np.floor(config.val_fraction * n_train_region))
        train_pool = slice(0, n_train_region - n_val)
        val_pool = slice(n_train_region - n_val, n_train_region)
        test_pool = slice(n_train_region, n)

        train_idx = _select(
            rng, train_pool.stop, config.train_windows_per_record, record.name, "train"
        )
        val_idx = val_pool.start + _select(
            rng,
            val_pool.stop - val_pool.start,
            config.val_windows_per_record,
            record.name,
            "validation",
        )
        test_size = n - test_pool.start
        if config.test_windows_per_record is None:
            test_idx = np.arange(test_pool.start, n)
        else:
            test_idx = test_pool.start + _select(
                rng, test_size, config.test_windows_per_record, record.name, "test"
            )

        for idx_array, clean_list, prov_list in (
            (train_idx, train_clean, train_prov),
            (val_idx, val_clean, val_prov),
            (test_idx, test_clean, test_prov),
        ):
            for i in idx_array:
                clean_list.append(windows[i])
                prov_list.append(provenance[i])
        manifest_rows.append(
            f"record.{record.name}=windows:{n},train_pool:{train_pool.stop},"
            f"val_pool:{val_pool.stop - val_pool.start},test_pool:{test_size}"
        )

    mix_rng = np.random.default_rng(np.random.SeedSequence((seed, 2)))
    train = _mix_pool(
        mix_rng,
        np.array(train_clean),
        train_prov,
        config.train_snrs_db,
        config.noise_records,
        config.window_width,
        config.renormalize_noisy,
    )
    validation = _mix_pool(
        mix_rng,
        np.array(val_clean),
        val_prov,
        config.train_snrs_db,
        config.noise_records,
        config.window_width,
        config.renormalize_noisy,
    )

    test_clean_arr = np.array(test_clean)
    test_rng = np.random.default_rng(np.random.SeedSequence((seed, 3)))
    segments = np.array(
        [
            _draw_noise_segment(test_rng, config.noise_records, config.window_width)
            for _ in range(len(test_clean_arr))
        ]
    )
    test = {}
    for snr in config.eval_snrs_db:
        noisy = np.array(
            [
                mix_noise(clean, segment, snr)
                for clean, segment in zip(test_clean_arr, segments)
            ]
        )
        test[float(snr)] = WindowPairs(
            noisy=noisy,
            clean=test_clean_arr.copy(),
            snr_db=np.full(len(test_clean_arr), float(snr)),
            provenance=tuple(test_prov),
        )

    manifest = {
        "seed": str(seed),
        "records": ",".join(rec.name for rec in kept_records),
        "excluded": ",".join(config.exclude),
        "window_width": str(config.window_width),
        "train_windows_per_record": str(config.train_windows_per_record),
        "val_windows_per_record": str(config.val_windows_per_record),
        "test_windows_per_record": str(config.test_windows_per_record),
        "train_snrs_db": ",".join(f"{s:g}" for s in config.train_snrs_db),
        "eval_snrs_db": ",".join(f"{s:g}" for s in config.eval_snrs_db),
        "test_fraction": f"{config.test_fraction:g}",
        "val_fraction": f"{config.val_fraction:g}",
        "percentile_reject": (
            "none"
            if config.percentile_reject is None
            else ",".join(f"{p:g}" for p in config.percentile_reject)
        ),
        "preprocess": str(config.preprocess).lower(),
        "renormalize_noisy": str(config.renormalize_noisy).lower(),
        "train_windows": str(len(train)),
        "validation_windows": str(len(validation)),
        "test_windows": str(len(test_clean_arr)),
    }
    for row in manifest_rows:
        key, _, value = row.partition("=")
        manifest[key] = value
    return ExperimentData(train=train, validation=validation, test=test, manifest=manifest)


EXPERIMENT_MAGIC = b"WDEXP\x00"
EXPERIMENT_VERSION = 1


def _write_array(chunks, name: str, arr: np.ndarray):
    encoded = name.encode("utf-8")
    chunks.append(struct.pack("<H", len(encoded)))
    chunks.append(encoded)
    tag = {np.dtype("float64"): 0, np.dtype("int64"): 1}[arr.dtype]
    chunks.append(struct.pack("<BB", tag, arr.ndim))
    chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    chunks.append(np.ascontiguousarray(arr).tobytes())


def save_experiment(path, data: ExperimentData):
    """Persist an experiment to a deterministic binary container.

    Same-seed rebuilds serialize to byte-identical files (no timestamps or
    compression), which keeps the preparation step idempotent.
    """
    names = sorted({name for name, _ in data.train.provenance}
                   | {name for name, _ in data.validation.provenance}
                   | {name for name, _ in next(iter(data.test.values())).provenance})
    index = {name: i for i, name in enumerate(names)}

    def prov_arrays(pairs):
        rec = np.array([index[name] for name, _ in pairs.provenance], dtype=np.int64)
        start = np.array([s for _, s in pairs.provenance], dtype=np.int64)
        return rec, start

    arrays = {}
    for role, pairs in (("train", data.train), ("val", data.validation)):
        arrays[f"{role}_noisy"] = pairs.noisy
        arrays[f"{role}_clean"] = pairs.clean
        arrays[f"{role}_snr"] = pairs.snr_db
        arrays[f"{role}_prov_rec"], arrays[f"{role}_prov_start"] = prov_arrays(pairs)
    snrs = sorted(data.test)
    arrays["test_snrs"] = np.array(snrs, dtype=np.float64)
    reference = data.test[snrs[0]]
    arrays["test_prov_rec"], arrays["test_prov_start"] = prov_arrays(reference)
    for i, snr in enumerate(snrs):
        arrays[f"test_noisy_{i}"] = data.test[snr].noisy
        arrays[f"test_clean_{i}"] = data.test[snr].clean

    manifest_text = "".join(f"{k} = {v}\n" for k, v in data.manifest.items())
    names_text = "\n".join(names)
    chunks = [EXPERIMENT_MAGIC, struct.pack("<I", EXPERIMENT_VERSION)]
    for text in (manifest_text, names_text):
        blob = text.encode("utf-8")
        chunks.append(struct.pack("<I", len(blob)))
        chunks.append(blob)
    chunks.append(struct.pack("<I", len(arrays)))
    for name in arrays:
        _write_array(chunks, name, np.asarray(arrays[name]))
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_experiment(path) -> ExperimentData:
    raw = open(path, "rb").read()
    pos = 0

    def take(count):
        nonlocal pos
        if pos + count > len(raw):
            raise ValueError(f"{path}: truncated experiment file at byte {pos}")
        out = raw[pos:pos + count]
        pos += count
        return out

    def unpack(fmt):
        return struct.unpack(fmt, take(struct.calcsize(fmt)))

    if take(len(EXPERIMENT_MAGIC)) != EXPERIMENT_MAGIC:
        raise ValueError(f"{path}: not an experiment file (bad magic)")
    (version,) = unpack("<I")
    if version != EXPERIMENT_VERSION:
        raise ValueError(f"{path}: unsupported experiment file version {version}")
    (manifest_len,) = unpack("<I")
    manifest_text = take(manifest_len).decode("utf-8")
    (names_len,) = unpack("<I")
    names = take(names_len).decode("utf-8").split("\n") if names_len else []
    manifest = {}
    for line in manifest_text.splitlines():
        key, _, value = line.partition("=")
        manifest[key.strip()] = value.strip()
    (count,) = unpack("<I")
    arrays = {}
    for _ in range(count):
        (name_len,) = unpack("<H")
        name = take(name_len).decode("utf-8")
        tag, ndim = unpack("<BB")
        dims = unpack(f"<{ndim}I")
        dtype = {0: np.float64, 1: np.int64}[tag]
        size = int(np.prod(dims, dtype=np.int64)) * np.dtype(dtype).itemsize
        arrays[name] = np.frombuffer(take(size), dtype=dtype).reshape(dims)

    def pairs(prefix, noisy_key, clean_key, snr_values):
        rec = arrays[f"{prefix}_prov_rec"]
        start = arrays[f"{prefix}_prov_start"]
        provenance = tuple((names[r], int(s)) for r, s in zip(rec, start))
        return WindowPairs(
            noisy=arrays[noisy_key].copy(),
            clean=arrays[clean_key].copy(),
            snr_db=np.asarray(snr_values, dtype=np.float64).copy(),
            provenance=provenance,
        )

    train = pairs("train", "train_noisy", "train_clean", arrays["train_snr"])
    validation = pairs("val", "val_noisy", "val_clean", arrays["val_snr"])
    test = {}
    for i, snr in enumerate(arrays["test_snrs"]):
        snr = float(snr)
        test[snr] = pairs(
            "test", f"test_noisy_{i}", f"test_clean_{i}",
            np.full(len(arrays[f"test_noisy_{i}"]), snr),
        )
    return ExperimentData(train=train, validation=validation, test=test, manifest=manifest)


def write_manifest(path, entries: dict):
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {value}\n")


def read_manifest(path) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{line_no}: expected 'key = value'")
            out[key.strip()] = value.strip()
    return out
