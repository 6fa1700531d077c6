"""Welch auto/cross spectra, magnitude-squared coherence and Morlet TFDs."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft

from .errors import DataError, NumericalError

log = logging.getLogger(__name__)

COHERENCE_CLAMP = 1e-12
COHERENCE_HARD_LIMIT = 1e-6


@dataclass(frozen=True)
class WelchParams:
    window_len_samples: int = 500
    overlap_fraction: float = 0.5
    window_kind: str = "hann"
    fft_len: int = 512

    def __post_init__(self):
        if self.window_len_samples < 1:
            raise DataError("Welch window must hold at least one sample")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise DataError("overlap_fraction must lie in [0, 1)")
        if self.window_kind not in ("hann", "rectangular"):
            raise DataError(f"unknown window kind {self.window_kind!r}")
        n = self.fft_len
        if n < self.window_len_samples or n & (n - 1):
            raise DataError("fft_len must be a power of two no shorter than the window")

    @property
    def step(self) -> int:
        return max(1, int(round(self.window_len_samples * (1.0 - self.overlap_fraction))))

    def window(self) -> np.ndarray:
        n = self.window_len_samples
        if self.window_kind == "rectangular":
            return np.ones(n)
        # periodic Hann, the usual choice for spectral estimation
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)

    def n_segments(self, n_samples: int) -> int:
        if n_samples < self.window_len_samples:
            return 0
        return (n_samples - self.window_len_samples) // self.step + 1

    def freqs(self, fs: float) -> np.ndarray:
        return np.fft.rfftfreq(self.fft_len, d=1.0 / fs)


@dataclass(frozen=True)
class BandSpec:
    name: str
    f_lo_hz: float
    f_hi_hz: float

    def __post_init__(self):
        if not 0 < self.f_lo_hz < self.f_hi_hz:
            raise DataError(f"band {self.name!r} needs 0 < f_lo < f_hi")

    @classmethod
    def parse(cls, text: str) -> "BandSpec":
        """``"1-8"`` -> BandSpec("1-8", 1, 8)."""
        try:
            lo, hi = (float(v) for v in text.split("-"))
        except ValueError:
            raise DataError(f"band must look like 'lo-hi', got {text!r}") from None
        return cls(text, lo, hi)

    def mask(self, freqs: np.ndarray) -> np.ndarray:
        tol = 1e-9 * max(1.0, self.f_hi_hz)
        return (freqs >= self.f_lo_hz - tol) & (freqs <= self.f_hi_hz + tol)


DEFAULT_BANDS = (BandSpec("1-8", 1.0, 8.0), BandSpec("8-13", 8.0, 13.0))


@dataclass(frozen=True)
class SpectralEstimate:
    freqs_hz: np.ndarray
    pxx: np.ndarray
    pyy: np.ndarray
    pxy: np.ndarray
    n_segments: int


@dataclass(frozen=True)
class TFD:
    times_ms: np.ndarray
    freqs_hz: np.ndarray
    magnitude: np.ndarray


def segment_spectra(x: np.ndarray, p: WelchParams) -> np.ndarray:
    """Windowed FFTs of every Welch segment along the last axis.

    Returns ``(..., n_segments, n_freqs)`` complex coefficients.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    n_seg = p.n_segments(n)
    if n_seg == 0:
        raise DataError(f"signal of {n} samples shorter than the {p.window_len_samples}-sample window")
    starts = np.arange(n_seg) * p.step
    idx = starts[:, None] + np.arange(p.window_len_samples)[None, :]
    segs = x[..., idx] * p.window()
    return sp_fft.rfft(segs, n=p.fft_len, axis=-1)


def _density_scale(p: WelchParams, fs: float) -> np.ndarray:
    """One-sided density factor per bin: doubled except DC and Nyquist."""
    w = p.window()
    scale = np.full(p.fft_len // 2 + 1, 2.0 / (fs * np.sum(w * w)))
    scale[0] /= 2.0
    if p.fft_len % 2 == 0:
        scale[-1] /= 2.0
    return scale


def welch_spectra(x, y, p: WelchParams, fs: float) -> SpectralEstimate:
    """Averaged (cross-)periodograms as one-sided densities.

    ``P_xx`` integrates over ``[0, fs/2]`` to the signal's mean power. The
    cross-spectrum is ``mean(conj(X) * Y)`` so ``P_yx = conj(P_xy)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("welch_spectra needs two 1-D signals of equal length")
    fx = segment_spectra(x, p)
    fy = fx if y is x or np.array_equal(x, y) else segment_spectra(y, p)
    scale = _density_scale(p, fs)
    pxx = (fx.real ** 2 + fx.imag ** 2).mean(axis=0) * scale
    pyy = pxx if fy is fx else (fy.real ** 2 + fy.imag ** 2).mean(axis=0) * scale
    # spelled out so that swapping x and y conjugates P_xy bit for bit
    re = (fx.real * fy.real + fx.imag * fy.imag).mean(axis=0)
    im = (fx.real * fy.imag - fx.imag * fy.real).mean(axis=0)
    pxy = (re + 1j * im) * scale
    if fy is fx:
        pxy = pxx.astype(complex)
    return SpectralEstimate(p.freqs(fs), pxx, pyy, pxy, fx.shape[0])


def coherence_from_spectra(pxx, pyy, pxy) -> np.ndarray:
    """|P_xy|^2 / (P_xx P_yy), 0 where either auto-spectrum vanishes."""
    pxy = np.asarray(pxy)
    num = pxy.real ** 2 + pxy.imag ** 2
    den = np.asarray(pxx) * np.asarray(pyy)
    zero = den <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(zero, 0.0, num / np.where(zero, 1.0, den))
    if np.any(zero):
        log.warning("coherence set to 0 at %d bins with zero auto-power", int(np.count_nonzero(zero)))
    peak = float(np.max(c)) if c.size else 0.0
    if peak > 1.0 + COHERENCE_HARD_LIMIT:
        raise NumericalError(f"coherence estimate {peak!r} exceeds 1")
    return np.clip(c, 0.0, 1.0)


def coherence(x, y, p: WelchParams, fs: float) -> np.ndarray:
    """Magnitude-squared coherence per frequency bin of ``p.freqs(fs)``."""
    est = welch_spectra(x, y, p, fs)
    if est.n_segments < 2:
        raise DataError("coherence needs at least two Welch segments; shorten the window or raise overlap")
    return coherence_from_spectra(est.pxx, est.pyy, est.pxy)


def band_mean(values, freqs, band: BandSpec) -> float:
    values = np.asarray(values, dtype=float)
    mask = band.mask(np.asarray(freqs, dtype=float))
    if not mask.any():
        raise DataError(f"band {band.name} ({band.f_lo_hz}-{band.f_hi_hz} Hz) holds no frequency bins")
    return float(np.mean(values[..., mask], axis=-1))


# ------------------------------------------------------------------ Morlet

MORLET_CYCLES = 6.0
MORLET_SUPPORT_SD = 5.0


def morlet_wavelet(freq: float, fs: float, cycles: float = MORLET_CYCLES) -> np.ndarray:
    """Complex Morlet sampled over +/- 5 temporal SDs, unit energy."""
    sd = cycles / (2.0 * np.pi * freq)
    half = int(np.ceil(MORLET_SUPPORT_SD * sd * fs))
    t = np.arange(-half, half + 1) / fs
    w = np.exp(2j * np.pi * freq * t) * np.exp(-0.5 * (t / sd) ** 2)
    return w / np.sqrt(np.sum(np.abs(w) ** 2))


def morlet_transform(x, fs: float, freqs, cycles: float = MORLET_CYCLES) -> np.ndarray:
    """|x * wavelet| for a batch of signals; returns ``(..., n_freqs, n_times)``."""
    x = np.asarray(x, dtype=float)
    freqs = np.asarray(freqs, dtype=float)
    if freqs.ndim != 1 or freqs.size == 0 or np.any(freqs <= 0) or np.any(freqs >= fs / 2):
        raise DataError("Morlet frequencies must lie inside (0, fs/2)")
    if cycles < 3:
        raise DataError("Morlet wavelets need at least 3 cycles")
    n = x.shape[-1]
    out = np.empty(x.shape[:-1] + (freqs.size, n))
    for k, f in enumerate(freqs):
        w = morlet_wavelet(f, fs, cycles)
        half = (w.size - 1) // 2
        nfft = sp_fft.next_fast_len(n + w.size - 1)
        spec = sp_fft.fft(x, n=nfft, axis=-1) * sp_fft.fft(w, n=nfft)
        full = sp_fft.ifft(spec, axis=-1)
        out[..., k, :] = np.abs(full[..., half:half + n])
    return out


def morlet_tfd(x, fs: float, freqs, cycles: float = MORLET_CYCLES, t0_ms: float = 0.0) -> TFD:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError("morlet_tfd expects a single 1-D signal")
    mag = morlet_transform(x, fs, freqs, cycles)
    times = t0_ms + np.arange(x.size) * 1000.0 / fs
    return TFD(times, np.asarray(freqs, dtype=float), mag)


def mean_tfd(segments, fs: float, freqs, cycles: float = MORLET_CYCLES, t0_ms: float = 0.0) -> TFD:
    """Average of per-segment TFD magnitudes, ``segments`` is ``(n, time)``."""
    segments = np.atleast_2d(np.asarray(segments, dtype=float))
    acc = np.zeros((len(freqs), segments.shape[-1]))
    for start in range(0, segments.shape[0], 64):
        acc += morlet_transform(segments[start:start + 64], fs, freqs, cycles).sum(axis=0)
    times = t0_ms + np.arange(segments.shape[-1]) * 1000.0 / fs
    return TFD(times, np.asarray(freqs, dtype=float), acc / segments.shape[0])


def default_tfd_freqs() -> np.ndarray:
    return np.arange(1.0, 30.0 + 1e-9, 0.5)
