"""Trial averaging and P300 peak measurement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .montage import P300_ELECTRODES
from .preprocess import EpochSet

_TIME_TOL_MS = 1e-6


@dataclass(frozen=True)
class ErpWaveform:
    samples: np.ndarray
    t0_offset_ms: float
    n_trials_averaged: int
    sample_rate_hz: float
    channel_labels: tuple[str, ...]

    @property
    def times_ms(self) -> np.ndarray:
        return self.t0_offset_ms + np.arange(self.samples.shape[1]) * 1000.0 / self.sample_rate_hz


@dataclass(frozen=True)
class P300Measure:
    amplitude_uv: float
    latency_ms: float
    electrodes_used: tuple[str, ...]


def average_epochs(es: EpochSet, condition: str = "target") -> ErpWaveform:
    sel = es.select(condition) if condition is not None else es
    if len(sel) == 0:
        raise DataError(f"no surviving {condition} epochs to average")
    return ErpWaveform(sel.data.mean(axis=0), sel.window_ms[0], len(sel),
                       sel.sample_rate_hz, sel.channel_labels)


def _peak_and_mean(wave: np.ndarray, times: np.ndarray, search_ms, halfwidth_ms) -> tuple[float, float]:
    lo, hi = search_ms
    in_search = np.flatnonzero((times >= lo - _TIME_TOL_MS) & (times <= hi + _TIME_TOL_MS))
    # np.argmax returns the earliest maximum, which is the documented tie-break
    peak = in_search[int(np.argmax(wave[in_search]))]
    t_peak = times[peak]
    window = (times >= t_peak - halfwidth_ms - _TIME_TOL_MS) & (times <= t_peak + halfwidth_ms + _TIME_TOL_MS)
    return float(np.mean(wave[window])), float(t_peak)


def p300_amplitude(erp: ErpWaveform, search_ms=(300.0, 500.0), mean_halfwidth_ms: float = 10.0,
                   electrodes=P300_ELECTRODES, per_electrode: bool = False) -> P300Measure:
    """Largest positive peak in ``search_ms`` and the mean over peak +/- halfwidth.

    By default the listed electrodes are averaged first and a single peak is
    picked on that waveform. With ``per_electrode`` each electrode is measured
    separately and amplitudes and latencies are then averaged.
    """
    electrodes = tuple(electrodes)
    missing = [e for e in electrodes if e not in erp.channel_labels]
    if missing:
        raise DataError(f"ERP lacks P300 electrodes: {', '.join(missing)}")
    times = erp.times_ms
    if search_ms[0] < times[0] - _TIME_TOL_MS or search_ms[1] > times[-1] + _TIME_TOL_MS:
        raise DataError(f"search window {search_ms} ms outside the epoch ({times[0]:g}..{times[-1]:g} ms)")
    idx = [erp.channel_labels.index(e) for e in electrodes]
    if per_electrode:
        pairs = [_peak_and_mean(erp.samples[i], times, search_ms, mean_halfwidth_ms) for i in idx]
        amps, lats = zip(*pairs)
        return P300Measure(float(np.mean(amps)), float(np.mean(lats)), electrodes)
    wave = erp.samples[idx].mean(axis=0)
    amp, lat = _peak_and_mean(wave, times, search_ms, mean_halfwidth_ms)
    return P300Measure(amp, lat, electrodes)
