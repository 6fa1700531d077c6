"""Re-referencing, zero-phase band-pass filtering, epoching and artifact rejection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import DataError, NumericalError
from .headmodel import Leadfield
from .ingest import EventList, Recording

log = logging.getLogger(__name__)

CONDITIONS = ("rest", "target", "standard")
FILTER_ORDER = 4
PINV_RCOND = 1e-8


@dataclass(frozen=True)
class Epoch:
    samples: np.ndarray
    t0_offset_ms: float
    condition: str


@dataclass(frozen=True)
class EpochSet:
    """Stack of equally shaped epochs, ``data`` is ``(epochs, channels, time)``."""

    data: np.ndarray = field(repr=False)
    conditions: tuple[str, ...]
    window_ms: tuple[float, float]
    sample_rate_hz: float
    channel_labels: tuple[str, ...]
    event_indices: tuple[int, ...] = ()

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 3:
            raise DataError("epoch data must be (epochs, channels, time)")
        if data.shape[0] != len(self.conditions):
            raise DataError("one condition label per epoch required")
        if data.shape[1] != len(self.channel_labels):
            raise DataError("channel label count does not match epoch data")
        if not self.window_ms[1] > self.window_ms[0]:
            raise DataError("epoch window end must exceed its start")
        bad = sorted(set(self.conditions) - set(CONDITIONS))
        if bad:
            raise DataError(f"unknown epoch conditions {bad}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "conditions", tuple(self.conditions))
        object.__setattr__(self, "channel_labels", tuple(self.channel_labels))
        object.__setattr__(self, "window_ms", (float(self.window_ms[0]), float(self.window_ms[1])))
        if not self.event_indices:
            object.__setattr__(self, "event_indices", tuple(range(data.shape[0])))

    def __len__(self):
        return self.data.shape[0]

    @property
    def n_times(self) -> int:
        return self.data.shape[2]

    @property
    def times_ms(self) -> np.ndarray:
        return self.window_ms[0] + np.arange(self.n_times) * 1000.0 / self.sample_rate_hz

    @property
    def epochs(self) -> list[Epoch]:
        return [Epoch(self.data[i], self.window_ms[0], c) for i, c in enumerate(self.conditions)]

    def subset(self, keep) -> "EpochSet":
        keep = list(keep)
        return EpochSet(self.data[keep], tuple(self.conditions[i] for i in keep), self.window_ms,
                        self.sample_rate_hz, self.channel_labels,
                        tuple(self.event_indices[i] for i in keep))

    def select(self, condition: str) -> "EpochSet":
        return self.subset(i for i, c in enumerate(self.conditions) if c == condition)

    def pick(self, labels) -> "EpochSet":
        idx = [self.channel_labels.index(lab) for lab in labels]
        return EpochSet(self.data[:, idx], self.conditions, self.window_ms,
                        self.sample_rate_hz, tuple(labels), self.event_indices)


# ------------------------------------------------------------- referencing

def rereference_average(rec: Recording) -> Recording:
    if rec.n_channels < 2:
        raise DataError("average reference needs at least two channels")
    data = rec.samples - rec.samples.mean(axis=0, keepdims=True)
    return rec.with_samples(data, reference="average")


def rest_transform(lf: Leadfield) -> np.ndarray:
    """Matrix mapping average-referenced data to the infinity reference."""
    g = lf.gain
    g_ar = g - g.mean(axis=0, keepdims=True)
    u, s, vt = np.linalg.svd(g_ar, full_matrices=False)
    if s.size == 0 or s[0] <= 0:
        raise NumericalError("average-referenced leadfield is entirely singular")
    keep = s > PINV_RCOND * s[0]
    pinv = (vt[keep].T / s[keep]) @ u[:, keep].T
    return g @ pinv


def rereference_rest(rec: Recording, lf: Leadfield, keep=None) -> Recording:
    """Reference electrode standardization to a point at infinity.

    The data are average-referenced, then mapped through
    ``G @ pinv(G_ar)`` where ``G_ar`` is the leadfield with its channel mean
    removed from every column. ``keep`` optionally limits the output to a
    subset of channels (all channels still enter the transform).
    """
    if lf.gain.shape[0] != rec.n_channels:
        raise DataError(f"leadfield has {lf.gain.shape[0]} rows for {rec.n_channels} channels")
    if lf.labels is not None and tuple(lf.labels) != rec.channel_labels:
        raise DataError("leadfield row order does not match the recording channels")
    t = rest_transform(lf)
    if keep is None:
        labels = rec.channel_labels
    else:
        labels = tuple(keep)
        missing = [lab for lab in labels if lab not in rec.channel_labels]
        if missing:
            raise DataError(f"cannot keep channels absent from the recording: {missing}")
        t = t[[rec.index(lab) for lab in labels]]
    # T @ (V - mean) == (T - rowsum(T) / n) @ V, which avoids a centred copy of V
    t_ar = t - t.sum(axis=1, keepdims=True) / rec.n_channels
    return Recording(labels, rec.sample_rate_hz, t_ar @ rec.samples, "rest_infinity")


# --------------------------------------------------------------- filtering

def zero_phase_cutoffs(f_lo: float, f_hi: float, fs: float, order: int = FILTER_ORDER) -> tuple[float, float]:
    """Design cutoffs whose forward-backward response is -3 dB at ``f_lo``, ``f_hi``.

    A single Butterworth pass is -3 dB at its cutoffs, so running it twice
    puts the band edges at -6 dB. In the prewarped analog domain the band is
    widened about its geometric centre until the squared response reaches
    1/sqrt(2) at the requested edges.
    """
    w1, w2 = (2 * fs * np.tan(np.pi * f / fs) for f in (f_lo, f_hi))
    x = (np.sqrt(2.0) - 1.0) ** (1.0 / (2 * order))  # prototype frequency of the -3 dB point
    bw = (w2 - w1) / x
    wh = 0.5 * (bw + np.sqrt(bw * bw + 4 * w1 * w2))
    wl = wh - bw
    return tuple(float(fs / np.pi * np.arctan(w / (2 * fs))) for w in (wl, wh))


def butter_bandpass(f_lo: float, f_hi: float, fs: float, order: int = FILTER_ORDER) -> np.ndarray:
    """Second-order sections for the forward-backward band-pass ``f_lo``-``f_hi``."""
    if not 0 < f_lo < f_hi < fs / 2:
        raise DataError(f"invalid band {f_lo}-{f_hi} Hz for sample rate {fs} Hz")
    return signal.butter(order, zero_phase_cutoffs(f_lo, f_hi, fs, order), btype="bandpass",
                         fs=fs, output="sos")


def bandpass_filter(rec: Recording, f_lo: float, f_hi: float, order: int = FILTER_ORDER) -> Recording:
    """Forward-backward Butterworth band-pass (zero phase, squared magnitude)."""
    return rec.with_samples(filter_array(rec.samples, f_lo, f_hi, rec.sample_rate_hz, order))


def filter_array(x: np.ndarray, f_lo: float, f_hi: float, fs: float, order: int = FILTER_ORDER) -> np.ndarray:
    sos = butter_bandpass(f_lo, f_hi, fs, order)
    padlen = 3 * (2 * order)
    if x.shape[-1] <= padlen:
        raise DataError(f"signal of {x.shape[-1]} samples too short to filter (needs > {padlen})")
    forward = signal.sosfiltfilt(sos, x, axis=-1, padtype="odd", padlen=padlen)
    backward = signal.sosfiltfilt(sos, x[..., ::-1], axis=-1, padtype="odd", padlen=padlen)[..., ::-1]
    # forward-backward and backward-forward differ only in edge transients;
    # their mean makes the output exactly equivariant under time reversal
    return 0.5 * (forward + backward)


# --------------------------------------------------------------- epoching

def _window_samples(window_ms, fs) -> tuple[int, int]:
    start = int(round(window_ms[0] * fs / 1000.0))
    length = int(round((window_ms[1] - window_ms[0]) * fs / 1000.0))
    if length <= 0:
        raise DataError(f"empty epoch window {window_ms}")
    return start, length


def segment_epochs(rec: Recording, events: EventList, window_ms=(-200.0, 800.0),
                   conditions=("target",)) -> EpochSet:
    """Cut one epoch per selected event, ``window_ms`` relative to the event."""
    fs = rec.sample_rate_hz
    start, length = _window_samples(window_ms, fs)
    chosen = [(k, int(i), c) for k, (i, c) in enumerate(zip(events.sample_index, events.kind))
              if c in set(conditions)]
    data = np.empty((len(chosen), rec.n_channels, length))
    for row, (k, onset, _) in enumerate(chosen):
        a = onset + start
        if a < 0 or a + length > rec.n_samples:
            raise DataError(f"window {window_ms} ms around event {k} (sample {onset}) "
                            "exceeds the recording")
        data[row] = rec.samples[:, a:a + length]
    return EpochSet(data, tuple(c for _, _, c in chosen), tuple(window_ms), fs,
                    rec.channel_labels, tuple(k for k, _, _ in chosen))


def segment_rest(rec: Recording, length_ms: float = 2250.0) -> EpochSet:
    """Consecutive non-overlapping windows; the trailing remainder is dropped."""
    fs = rec.sample_rate_hz
    _, length = _window_samples((0.0, length_ms), fs)
    n = rec.n_samples // length
    if n == 0:
        raise DataError(f"recording of {rec.duration_s:.3f} s is shorter than one {length_ms} ms window")
    data = rec.samples[:, :n * length].reshape(rec.n_channels, n, length).transpose(1, 0, 2)
    return EpochSet(np.ascontiguousarray(data), ("rest",) * n, (0.0, float(length_ms)), fs,
                    rec.channel_labels)


def baseline_correct(es: EpochSet, window_ms=(-200.0, 0.0)) -> EpochSet:
    """Subtract the per-epoch, per-channel mean over ``[start, end)`` ms."""
    lo, hi = window_ms
    if lo < es.window_ms[0] or hi > es.window_ms[1] or hi <= lo:
        raise DataError(f"baseline {window_ms} ms outside epoch window {es.window_ms} ms")
    t = es.times_ms
    mask = (t >= lo - 1e-9) & (t < hi - 1e-9)
    if not mask.any():
        raise DataError(f"baseline {window_ms} ms contains no samples")
    base = es.data[:, :, mask].mean(axis=2, keepdims=True)
    return EpochSet(es.data - base, es.conditions, es.window_ms, es.sample_rate_hz,
                    es.channel_labels, es.event_indices)


def reject_artifacts(es: EpochSet, threshold_uv: float = 75.0, channels=None):
    """Drop epochs with any ``|sample| > threshold_uv``.

    Returns the surviving EpochSet and the positions (within ``es``) of the
    rejected epochs. ``channels`` restricts the check to a label subset.
    """
    if not threshold_uv > 0:
        raise DataError("artifact threshold must be positive")
    data = es.data if channels is None else es.pick(channels).data
    if len(es) == 0:
        return es, []
    peak = np.abs(data).max(axis=(1, 2))
    bad = np.flatnonzero(peak > threshold_uv)
    keep = np.flatnonzero(peak <= threshold_uv)
    if bad.size:
        log.info("rejected %d of %d epochs above %g uV", bad.size, len(es), threshold_uv)
    return es.subset(keep), bad.tolist()
