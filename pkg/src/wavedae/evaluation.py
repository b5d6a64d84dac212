"""Denoising metrics, comparison tables, and subband decomposition exports.

Metric definitions (the usual ones, stated here because published tables
rarely spell them out):

* rmse            sqrt(mean((clean - denoised)^2))
* snr_improvement 10*log10(sum clean^2 / sum (denoised - clean)^2)
                  minus the same expression for the noisy input, in dB;
                  a denoised signal exactly equal to clean reports +inf
* prd             100 * sqrt(sum (clean - denoised)^2 / sum clean^2)

All metrics are computed per window in the normalized amplitude domain and
then averaged, so per-window distributions stay available to callers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .wavelet import FilterBank, make_db6_filters, wavedec, waverec

__all__ = [
    "rmse",
    "snr_improvement",
    "prd",
    "evaluate_model",
    "MetricsReport",
    "BandSeries",
    "DecompositionReport",
    "decomposition_report",
    "write_decomposition_csv",
    "write_decomposition_svg",
]

METRIC_NAMES = ("rmse", "snr_improvement_db", "prd_percent")


def rmse(clean, denoised) -> float:
    clean = np.asarray(clean, dtype=np.float64)
    denoised = np.asarray(denoised, dtype=np.float64)
    if clean.shape != denoised.shape:
        raise ValueError(f"shape mismatch: {clean.shape} vs {denoised.shape}")
    return float(np.sqrt(np.mean((clean - denoised) ** 2)))


def _snr(clean, x) -> float:
    error_power = float(np.sum((x - clean) ** 2))
    if error_power == 0.0:
        return np.inf
    return 10.0 * np.log10(float(np.sum(clean**2)) / error_power)


def snr_improvement(clean, noisy, denoised) -> float:
    """Output SNR minus input SNR, both measured against the clean signal."""
    clean = np.asarray(clean, dtype=np.float64)
    noisy = np.asarray(noisy, dtype=np.float64)
    denoised = np.asarray(denoised, dtype=np.float64)
    if not clean.shape == noisy.shape == denoised.shape:
        raise ValueError("clean, noisy, denoised must share a shape")
    if np.array_equal(noisy, clean):
        raise ValueError("noisy input equals the clean signal; input SNR undefined")
    return _snr(clean, denoised) - _snr(clean, noisy)


def prd(clean, denoised) -> float:
    """Percentage root-mean-square difference relative to clean energy."""
    clean = np.asarray(clean, dtype=np.float64)
    denoised = np.asarray(denoised, dtype=np.float64)
    if clean.shape != denoised.shape:
        raise ValueError(f"shape mismatch: {clean.shape} vs {denoised.shape}")
    clean_energy = float(np.sum(clean**2))
    if clean_energy == 0.0:
        raise ValueError("clean signal has zero energy")
    return float(100.0 * np.sqrt(np.sum((clean - denoised) ** 2) / clean_energy))


def evaluate_model(net, test: dict, batch_size: int = 256) -> dict:
    """Denoise every test window and average the metrics per input SNR.

    ``test`` maps input SNR to aligned noisy/clean window pairs; the model
    runs in infer mode.  Returns {snr: {metric: mean-over-windows}}.
    """
    out = {}
    for snr in sorted(test):
        pairs = test[snr]
        if len(pairs) == 0:
            raise ValueError(f"test group at {snr} dB is empty")
        denoised = np.empty_like(pairs.clean)
        for start in range(0, len(pairs), batch_size):
            batch = pairs.noisy[start:start + batch_size, :, None]
            denoised[start:start + batch_size] = net.forward(batch, train=False)[..., 0]
        values = {name: [] for name in METRIC_NAMES}
        for clean, noisy, restored in zip(pairs.clean, pairs.noisy, denoised):
            values["rmse"].append(rmse(clean, restored))
            values["snr_improvement_db"].append(snr_improvement(clean, noisy, restored))
            values["prd_percent"].append(prd(clean, restored))
        out[float(snr)] = {name: float(np.mean(vals)) for name, vals in values.items()}
    return out


@dataclass
class MetricsReport:
    """Rows of (model, variant, k) by input-SNR columns, mean +- std over runs."""

    snrs: tuple
    cells: dict = field(default_factory=dict)  # (label, snr, metric) -> (mean, std, n)
    meta: dict = field(default_factory=dict)   # label -> (variant, k)
    _runs: dict = field(default_factory=dict)  # label -> [run result]

    def add_run(self, label: str, variant: str, k: int, run: dict):
        if set(run) != set(self.snrs):
            raise ValueError(
                f"run covers SNRs {sorted(run)}, report expects {sorted(self.snrs)}"
            )
        self.meta[label] = (variant, k)
        self._runs.setdefault(label, []).append(run)
        for snr in self.snrs:
            for metric in METRIC_NAMES:
                values = [r[snr][metric] for r in self._runs[label]]
                self.cells[(label, snr, metric)] = (
                    float(np.mean(values)),
                    float(np.std(values)),
                    len(values),
                )

    def labels(self):
        return list(self.meta)

    def cell(self, label: str, snr: float, metric: str):
        return self.cells[(label, snr, metric)]

    def __eq__(self, other):
        if not isinstance(other, MetricsReport):
            return NotImplemented
        return (
            self.snrs == other.snrs
            and self.meta == other.meta
            and self.cells == other.cells
        )

    def to_csv_text(self) -> str:
        lines = ["label,variant,k,snr_db,metric,mean,std,runs"]
        for label in self.labels():
            variant, k = self.meta[label]
            for snr in self.snrs:
                for metric in METRIC_NAMES:
                    mean, std, n = self.cells[(label, snr, metric)]
                    lines.append(
                        f"{label},{variant},{k},{snr!r},{metric},{mean!r},{std!r},{n}"
                    )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv_text(cls, text: str) -> "MetricsReport":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines or lines[0] != "label,variant,k,snr_db,metric,mean,std,runs":
            raise ValueError("not a metrics report CSV")
        snrs = []
        report = cls(snrs=())
        for line in lines[1:]:
            label, variant, k, snr, metric, mean, std, n = line.split(",")
            snr = float(snr)
            if snr not in snrs:
                snrs.append(snr)
            report.meta[label] = (variant, int(k))
            report.cells[(label, snr, metric)] = (float(mean), float(std), int(n))
        report.snrs = tuple(snrs)
        return report

    def to_table_text(self, metric: str) -> str:
        """Aligned text table: one row per model, one column per input SNR."""
        if metric not in METRIC_NAMES:
            raise ValueError(f"unknown metric {metric!r}")
        header = ["model".ljust(14)] + [f"{snr:>9g}" for snr in self.snrs]
        lines = [f"{metric} by input SNR (dB)", " ".join(header)]
        for label in self.labels():
            row = [label.ljust(14)]
            for snr in self.snrs:
                mean, _std, _n = self.cells[(label, snr, metric)]
                row.append(f"{mean:9.4f}")
            lines.append(" ".join(row))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class BandSeries:
    """One subband: coefficients, isolated reconstruction, frequency range."""

    name: str
    low_hz: float
    high_hz: float
    coefficients: np.ndarray
    reconstruction: np.ndarray


@dataclass(frozen=True)
class DecompositionReport:
    signal: np.ndarray
    sampling_rate_hz: float
    bands: tuple


def decomposition_report(
    signal,
    levels: int = 3,
    sampling_rate_hz: float = 360.0,
    bank: FilterBank | None = None,
) -> DecompositionReport:
    """Subband view of a window: per-band coefficients and reconstructions.

    Each band's reconstruction inverts the decomposition with every other
    band zeroed, so the reconstructions sum to the input exactly.
    """
    bank = bank if bank is not None else make_db6_filters()
    signal = np.asarray(signal, dtype=np.float64)
    dec = wavedec(signal, levels, bank, sampling_rate_hz=sampling_rate_hz)
    bands = []
    for k in range(1, levels + 1):
        low, high = dec.band_hz(k)
        zeroed = type(dec)(
            approx=np.zeros_like(dec.approx),
            details=tuple(
                d if j == k - 1 else np.zeros_like(d)
                for j, d in enumerate(dec.details)
            ),
            levels=levels,
            original_length=dec.original_length,
            sampling_rate_hz=sampling_rate_hz,
        )
        bands.append(
            BandSeries(
                name=f"D{k}",
                low_hz=low,
                high_hz=high,
                coefficients=dec.details[k - 1],
                reconstruction=waverec(zeroed, bank),
            )
        )
    approx_only = type(dec)(
        approx=dec.approx,
        details=tuple(np.zeros_like(d) for d in dec.details),
        levels=levels,
        original_length=dec.original_length,
        sampling_rate_hz=sampling_rate_hz,
    )
    low, high = dec.approx_band_hz()
    bands.append(
        BandSeries(
            name="A",
            low_hz=low,
            high_hz=high,
            coefficients=dec.approx,
            reconstruction=waverec(approx_only, bank),
        )
    )
    return DecompositionReport(
        signal=signal, sampling_rate_hz=sampling_rate_hz, bands=tuple(bands)
    )


def write_decomposition_csv(report: DecompositionReport, directory) -> list[str]:
    """One CSV per band: sample,reconstruction,coefficient (coefficients are
    shorter than the window, so that column empties out)."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for band in report.bands:
        path = directory / f"band_{band.name}.csv"
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"# band={band.name} low_hz={band.low_hz:g} high_hz={band.high_hz:g}\n")
            fh.write("sample,reconstruction,coefficient\n")
            for i, value in enumerate(band.reconstruction):
                coeff = (
                    repr(float(band.coefficients[i]))
                    if i < len(band.coefficients)
                    else ""
                )
                fh.write(f"{i},{float(value)!r},{coeff}\n")
        written.append(str(path))
    return written


def write_decomposition_svg(report: DecompositionReport, path, width=900, row_height=110):
    """Static stacked line plot of the input and every band reconstruction."""
    series = [("input", report.signal)] + [
        (f"{b.name} ({b.low_hz:g}-{b.high_hz:g} Hz)", b.reconstruction)
        for b in report.bands
    ]
    pad = 30
    height = row_height * len(series) + pad
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for row, (label, values) in enumerate(series):
        top = pad + row * row_height
        mid = top + row_height / 2
        span = float(np.abs(values).max()) or 1.0
        xs = np.linspace(pad, width - pad, len(values))
        ys = mid - (values / span) * (row_height * 0.42)
        points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
        parts.append(
            f'<text x="{pad}" y="{top + 12}" font-family="monospace" '
            f'font-size="12">{label}</text>'
        )
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="black" '
            f'stroke-width="0.8"/>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(parts) + "\n")
