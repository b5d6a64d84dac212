"""Daubechies-6 filter bank and periodic discrete wavelet transforms.

Filter convention
-----------------
Filters are stored in convolution order: the analysis step circularly
convolves the signal with ``dec_lo`` / ``dec_hi`` and keeps samples at
indices ``(2k + 11) mod N`` (the phase offset equals ``len(filter) - 1``).
The synthesis step upsamples each branch by two (coefficients land on even
indices), circularly convolves with ``rec_lo`` / ``rec_hi`` and sums, with
no offset.  With ``rec_* = dec_*[::-1]`` this makes synthesis the exact
transpose of analysis, so the round trip is the identity without any shift.
Other references place the phase in the synthesis step instead; the two
choices differ only by a circular shift of the coefficient vectors.

Boundary handling is periodic (circular), which keeps every level exactly
half the length of its parent and makes reconstruction exact for any even
length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FilterBank",
    "WaveletDecomposition",
    "make_db6_filters",
    "dwt_step",
    "idwt_step",
    "wavedec",
    "waverec",
]

# db6 lowpass decomposition filter, convolution order.  Generated by
# spectral factorization in 60-digit arithmetic and rounded to double
# precision; the test suite regenerates the construction and cross-checks
# these constants against the classical reference table.
_DB6_DEC_LO = (
    -0.0010773010853084796,
    0.0047772575109455106,
    0.0005538422011614961,
    -0.0315820393174860296,
    0.0275228655303057286,
    0.0975016055873230491,
    -0.1297668675672619356,
    -0.2262646939654398201,
    0.3152503517091976291,
    0.7511339080210953507,
    0.4946238903984530857,
    0.1115407433501094636,
)

_INVARIANT_TOL = 1e-10


@dataclass(frozen=True)
class FilterBank:
    """Orthonormal analysis/synthesis filter quadruple (12 taps each)."""

    dec_lo: np.ndarray
    dec_hi: np.ndarray
    rec_lo: np.ndarray
    rec_hi: np.ndarray

    def __post_init__(self):
        for name in ("dec_lo", "dec_hi", "rec_lo", "rec_hi"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            if arr.shape != (12,):
                raise ValueError(f"{name} must have 12 coefficients, got {arr.shape}")
        if abs(self.dec_lo.sum() - np.sqrt(2.0)) > _INVARIANT_TOL:
            raise ValueError("dec_lo must sum to sqrt(2)")
        if abs(self.dec_hi.sum()) > _INVARIANT_TOL:
            raise ValueError("dec_hi must sum to 0")
        if abs(np.dot(self.dec_lo, self.dec_lo) - 1.0) > _INVARIANT_TOL:
            raise ValueError("dec_lo must have unit energy")
        signs = (-1.0) ** np.arange(12)
        if np.abs(self.dec_hi - signs * self.dec_lo[::-1]).max() > _INVARIANT_TOL:
            raise ValueError("dec_hi must satisfy the quadrature mirror relation")
        if np.abs(self.rec_lo - self.dec_lo[::-1]).max() > _INVARIANT_TOL:
            raise ValueError("rec_lo must be the time-reverse of dec_lo")
        if np.abs(self.rec_hi - self.dec_hi[::-1]).max() > _INVARIANT_TOL:
            raise ValueError("rec_hi must be the time-reverse of dec_hi")


@dataclass(frozen=True)
class WaveletDecomposition:
    """Multi-level decomposition: detail bands D1..DL plus final approximation.

    ``details[k-1]`` holds D_k, the band covering (fs/2^(k+1), fs/2^k) Hz;
    D1 is the finest.  ``approx`` is the level-L lowpass residue.
    """

    approx: np.ndarray
    details: tuple
    levels: int
    original_length: int
    sampling_rate_hz: float | None = None

    def __post_init__(self):
        if self.levels != len(self.details):
            raise ValueError("levels must equal len(details)")
        n = self.original_length
        for k, d in enumerate(self.details, start=1):
            if len(d) * 2**k != n:
                raise ValueError(
                    f"detail D{k} has length {len(d)}, expected {n // 2**k}"
                )
        if len(self.approx) * 2**self.levels != n:
            raise ValueError(
                f"approx has length {len(self.approx)}, expected {n // 2**self.levels}"
            )

    def band_hz(self, k: int) -> tuple[float, float]:
        """Frequency band (low, high) in Hz covered by detail D_k."""
        if self.sampling_rate_hz is None:
            raise ValueError("decomposition carries no sampling rate")
        if not 1 <= k <= self.levels:
            raise ValueError(f"k must be in 1..{self.levels}")
        fs = self.sampling_rate_hz
        return fs / 2 ** (k + 1), fs / 2**k

    def approx_band_hz(self) -> tuple[float, float]:
        """Frequency band (low, high) in Hz covered by the approximation."""
        if self.sampling_rate_hz is None:
            raise ValueError("decomposition carries no sampling rate")
        return 0.0, self.sampling_rate_hz / 2 ** (self.levels + 1)


def make_db6_filters() -> FilterBank:
    """Build the orthonormal Daubechies-6 (12-tap) filter bank."""
    dec_lo = np.array(_DB6_DEC_LO, dtype=np.float64)
    signs = (-1.0) ** np.arange(12)
    dec_hi = signs * dec_lo[::-1]
    return FilterBank(
        dec_lo=dec_lo, dec_hi=dec_hi, rec_lo=dec_lo[::-1], rec_hi=dec_hi[::-1]
    )


def _as_length_major(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        raise ValueError(f"{name} must be at least one-dimensional")
    return arr


def _tap_slices(t: int, n: int):
    """Split the circular index set {(2k + t) mod n} into two plain slices.

    The positions wrap around the end at most once after reducing t mod n,
    so each tap touches one head slice and one (possibly empty) tail slice.
    """
    half = n // 2
    shift = t % n
    straight = (n - shift + 1) // 2  # k with 2k + shift < n
    first = slice(shift, shift + 2 * straight, 2)
    second = slice(2 * straight + shift - n, 2 * half + shift - n, 2)
    return first, second, straight


def _circular_convolve_down(x: np.ndarray, filt: np.ndarray) -> np.ndarray:
    """Circular convolution along the last axis, decimated at phase taps-1.

    Equivalent to correlation with the time-reversed filter at even offsets,
    which is the orthogonal analysis operator row by row.
    """
    n = x.shape[-1]
    half = n // 2
    rev = filt[::-1]  # correlation form of the convolution + phase choice
    out = np.zeros(x.shape[:-1] + (half,), dtype=np.float64)
    for t, coeff in enumerate(rev):
        first, second, straight = _tap_slices(t, n)
        out[..., :straight] += coeff * x[..., first]
        if straight < half:
            out[..., straight:] += coeff * x[..., second]
    return out


def _upsample_convolve(c: np.ndarray, filt: np.ndarray) -> np.ndarray:
    """Upsample by two along the last axis then circularly convolve."""
    m = c.shape[-1]
    n = 2 * m
    out = np.zeros(c.shape[:-1] + (n,), dtype=np.float64)
    # u[2k] = c[k]; y[(2k + t) mod n] += filt[t] c[k], the same index set
    # as the analysis gather
    for t, coeff in enumerate(filt):
        first, second, straight = _tap_slices(t, n)
        out[..., first] += coeff * c[..., :straight]
        if straight < m:
            out[..., second] += coeff * c[..., straight:]
    return out


def dwt_step(signal, bank: FilterBank) -> tuple[np.ndarray, np.ndarray]:
    """One analysis level: (approx, detail), each half the input length.

    Accepts any array shape; the transform runs along the last axis, which
    must have even length >= 2.
    """
    x = _as_length_major(signal, "signal")
    n = x.shape[-1]
    if n < 2 or n % 2 != 0:
        raise ValueError(f"signal length must be even and >= 2, got {n}")
    approx = _circular_convolve_down(x, bank.dec_lo)
    detail = _circular_convolve_down(x, bank.dec_hi)
    return approx, detail


def idwt_step(approx, detail, bank: FilterBank) -> np.ndarray:
    """One synthesis level: exact inverse of :func:`dwt_step`."""
    a = _as_length_major(approx, "approx")
    d = _as_length_major(detail, "detail")
    if a.shape != d.shape:
        raise ValueError(f"approx/detail shapes differ: {a.shape} vs {d.shape}")
    if a.shape[-1] < 1:
        raise ValueError("coefficient vectors must be non-empty")
    return _upsample_convolve(a, bank.rec_lo) + _upsample_convolve(d, bank.rec_hi)


def dwt_adjoint(grad_approx, grad_detail, bank: FilterBank) -> np.ndarray:
    """Adjoint of the analysis map; identical to synthesis (orthogonal bank)."""
    return idwt_step(grad_approx, grad_detail, bank)


def idwt_adjoint(grad_out, bank: FilterBank) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint of the synthesis map; identical to analysis (orthogonal bank)."""
    return dwt_step(grad_out, bank)


def wavedec(
    signal,
    levels: int,
    bank: FilterBank,
    sampling_rate_hz: float | None = None,
) -> WaveletDecomposition:
    """Iterated analysis on the approximation branch, L levels deep."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("wavedec expects a 1D signal")
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    n = len(x)
    if n % 2**levels != 0:
        raise ValueError(
            f"signal length {n} is not divisible by 2^{levels}"
        )
    details = []
    approx = x
    for _ in range(levels):
        approx, detail = dwt_step(approx, bank)
        details.append(detail)
    return WaveletDecomposition(
        approx=approx,
        details=tuple(details),
        levels=levels,
        original_length=n,
        sampling_rate_hz=sampling_rate_hz,
    )


def waverec(dec: WaveletDecomposition, bank: FilterBank) -> np.ndarray:
    """Exact inverse of :func:`wavedec` on internally consistent inputs."""
    x = dec.approx
    for detail in reversed(dec.details):
        if len(detail) != len(x):
            raise ValueError(
                f"inconsistent decomposition: detail length {len(detail)} "
                f"does not match approximation length {len(x)}"
            )
        x = idwt_step(x, detail, bank)
    return x
