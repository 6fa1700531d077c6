"""Band-limited coherence networks and rest-vs-task edge statistics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .errors import DataError
from .preprocess import EpochSet
from .spectral import BandSpec, WelchParams, _density_scale, coherence_from_spectra, segment_spectra

log = logging.getLogger(__name__)

DIRECTIONS = ("increased", "decreased", "none")


@dataclass(frozen=True)
class CoherenceMatrix:
    band: BandSpec
    condition: str
    values: np.ndarray = field(repr=False)
    n_segments_averaged: int
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DataError("coherence matrix must be square")
        if self.condition not in ("rest", "task"):
            raise DataError(f"unknown condition {self.condition!r}")
        if not np.array_equal(v, v.T):
            raise DataError("coherence matrix must be exactly symmetric")
        object.__setattr__(self, "values", v)


def edge_list(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


COHERENCE_MODES = ("per_segment", "concatenated")


def _epoch_band_coherence(data: np.ndarray, bands, wp: WelchParams, fs: float,
                          pooled: bool = False) -> np.ndarray:
    """Per-epoch band-mean coherence, ``(bands, epochs, ch, ch)``.

    With ``pooled`` the cross-spectra of all epochs are averaged first and a
    single coherence matrix per band is returned (epoch axis of length 1).
    """
    n_ep, n_ch, n_t = data.shape
    n_seg = wp.n_segments(n_t)
    if n_seg < 2:
        raise DataError(f"epochs of {n_t} samples give {n_seg} Welch segment(s); "
                        "coherence needs at least 2 - shorten window_len_samples or raise the overlap")
    freqs = wp.freqs(fs)
    masks = [b.mask(freqs) for b in bands]
    for b, m in zip(bands, masks):
        if not m.any():
            raise DataError(f"band {b.name} holds no frequency bins")
    used = np.flatnonzero(np.any(masks, axis=0))
    scale = _density_scale(wp, fs)[used]
    out = np.empty((len(bands), 1 if pooled else n_ep, n_ch, n_ch))
    iu = np.triu_indices(n_ch, 1)
    total = None
    for start in range(0, n_ep, 32):
        chunk = data[start:start + 32]
        spec = segment_spectra(chunk, wp)[..., used]           # (e, ch, seg, f)
        cross = np.einsum("ecsf,edsf->ecdf", np.conj(spec), spec) / n_seg
        cross *= scale
        if pooled:
            part = cross.sum(axis=0)
            total = part if total is None else total + part
            continue
        auto = cross[:, np.arange(n_ch), np.arange(n_ch), :].real   # (e, ch, f)
        pxy = cross[:, iu[0], iu[1], :]                              # (e, pairs, f)
        coh = coherence_from_spectra(auto[:, iu[0], :], auto[:, iu[1], :], pxy)
        for k, m in enumerate(masks):
            sel = m[used]
            upper = coh[..., sel].mean(axis=-1)
            mat = np.ones((chunk.shape[0], n_ch, n_ch))
            mat[:, iu[0], iu[1]] = upper
            mat[:, iu[1], iu[0]] = upper
            out[k, start:start + chunk.shape[0]] = mat
    if pooled:
        cross = (total / n_ep)[None]
        auto = cross[:, np.arange(n_ch), np.arange(n_ch), :].real
        coh = coherence_from_spectra(auto[:, iu[0], :], auto[:, iu[1], :], cross[:, iu[0], iu[1], :])
        for k, m in enumerate(masks):
            mat = np.ones((1, n_ch, n_ch))
            upper = coh[..., m[used]].mean(axis=-1)
            mat[:, iu[0], iu[1]] = upper
            mat[:, iu[1], iu[0]] = upper
            out[k] = mat
    return out


def condition_matrices(es: EpochSet, bands, wp: WelchParams, condition: str,
                       mode: str = "per_segment") -> dict[str, CoherenceMatrix]:
    """Per-band network of one subject in one condition.

    Each epoch gives a band-averaged coherence matrix; the final matrix is
    the arithmetic mean over epochs. ``mode="concatenated"`` instead pools
    the Welch segments of all epochs into one spectral estimate.
    """
    if mode not in COHERENCE_MODES:
        raise DataError(f"unknown coherence mode {mode!r}; choose from {COHERENCE_MODES}")
    if len(es) < 2:
        raise DataError(f"need at least two {condition} epochs, got {len(es)}")
    per_epoch = _epoch_band_coherence(es.data, bands, wp, es.sample_rate_hz, pooled=mode == "concatenated")
    result = {}
    for k, band in enumerate(bands):
        mean = np.mean(per_epoch[k], axis=0)
        mean = 0.5 * (mean + mean.T)
        np.fill_diagonal(mean, 1.0)
        result[band.name] = CoherenceMatrix(band, condition, mean, len(es), es.channel_labels)
    return result


def subject_condition_matrix(es: EpochSet, band: BandSpec, wp: WelchParams,
                             condition: str = "task", mode: str = "per_segment") -> CoherenceMatrix:
    return condition_matrices(es, [band], wp, condition, mode)[band.name]


def check_segment_balance(n_rest: int, n_task: int, subject_id: str = "") -> bool:
    """Warn when one condition has more than twice the segments of the other."""
    lo, hi = sorted((n_rest, n_task))
    if lo == 0 or hi > 2 * lo:
        log.warning("%srest/task segment counts %d/%d differ by more than 2x",
                    f"{subject_id}: " if subject_id else "", n_rest, n_task)
        return False
    return True


@dataclass(frozen=True)
class EdgeComparison:
    edges: tuple[tuple[int, int], ...]
    t_statistic: np.ndarray
    p_value: np.ndarray
    p_corrected: np.ndarray
    mean_difference: np.ndarray
    direction: tuple[str, ...]
    alpha: float
    correction: str
    labels: tuple[str, ...] = ()

    @property
    def n_edges_tested(self) -> int:
        return len(self.edges)

    @property
    def threshold(self) -> float:
        return self.alpha / self.n_edges_tested if self.correction == "bonferroni" else self.alpha

    def edges_with(self, direction: str) -> tuple[tuple[int, int], ...]:
        return tuple(e for e, d in zip(self.edges, self.direction) if d == direction)

    @property
    def increased_edges(self):
        return self.edges_with("increased")

    @property
    def decreased_edges(self):
        return self.edges_with("decreased")

    def edge_label(self, edge) -> str:
        i, j = edge
        return f"{self.labels[i]}-{self.labels[j]}" if self.labels else f"{i}-{j}"

    def to_records(self) -> list[dict]:
        rows = []
        for k, (i, j) in enumerate(self.edges):
            rows.append({
                "labels": [self.labels[i], self.labels[j]] if self.labels else [i, j],
                "t": float(self.t_statistic[k]),
                "p": float(self.p_value[k]),
                "p_corrected": float(self.p_corrected[k]),
                "mean_difference": float(self.mean_difference[k]),
                "direction": self.direction[k],
            })
        return rows


def _stack(mats, what) -> np.ndarray:
    arr = np.stack([m.values if isinstance(m, CoherenceMatrix) else np.asarray(m, dtype=float) for m in mats])
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise DataError(f"{what} matrices must be square")
    return arr


def compare_conditions(rest, task, alpha: float = 0.05, correction: str = "bonferroni") -> EdgeComparison:
    """Edge-wise paired two-sided t-test of task - rest across subjects."""
    if len(rest) != len(task):
        raise DataError(f"{len(rest)} rest matrices but {len(task)} task matrices")
    if len(rest) < 3:
        raise DataError("compare_conditions needs at least three subjects")
    if correction not in ("bonferroni", "none"):
        raise DataError(f"unknown correction {correction!r}")
    r = _stack(rest, "rest")
    t = _stack(task, "task")
    if r.shape != t.shape:
        raise DataError("rest and task matrices differ in size")
    n_ch = r.shape[1]
    edges = edge_list(n_ch)
    tvals, pvals, diffs = [], [], []
    for i, j in edges:
        res = stats.paired_t_test(t[:, i, j], r[:, i, j])
        tvals.append(res.statistic)
        pvals.append(res.p_value)
        diffs.append(float(np.mean(t[:, i, j] - r[:, i, j])))
    pvals = np.asarray(pvals)
    m = len(edges)
    if correction == "bonferroni":
        significant, _ = stats.bonferroni(pvals, alpha)
        p_corr = stats.bonferroni_adjust(pvals)
    else:
        significant = pvals < alpha
        p_corr = pvals.copy()
    direction = []
    for sig, d in zip(significant, diffs):
        if sig and d > 0:
            direction.append("increased")
        elif sig and d < 0:
            direction.append("decreased")
        else:
            direction.append("none")
    labels = ()
    first = rest[0]
    if isinstance(first, CoherenceMatrix) and first.labels:
        labels = tuple(first.labels)
    log.debug("compared %d edges, %d significant", m, int(np.count_nonzero(significant)))
    return EdgeComparison(tuple(edges), np.asarray(tvals), pvals, p_corr, np.asarray(diffs),
                          tuple(direction), alpha, correction, labels)


def reconfig_strength(subject_rest, subject_task, edges) -> float:
    """Mean task - rest coupling over ``edges``."""
    edges = list(edges)
    if not edges:
        raise DataError("reconfig_strength needs a non-empty edge set")
    r = subject_rest.values if isinstance(subject_rest, CoherenceMatrix) else np.asarray(subject_rest)
    t = subject_task.values if isinstance(subject_task, CoherenceMatrix) else np.asarray(subject_task)
    ii = [e[0] for e in edges]
    jj = [e[1] for e in edges]
    return float(np.mean(t[ii, jj] - r[ii, jj]))


@dataclass(frozen=True)
class ReconfigResult:
    increased_edges: tuple[tuple[int, int], ...]
    decreased_edges: tuple[tuple[int, int], ...]
    mean_increase: np.ndarray | None
    mean_decrease: np.ndarray | None


def reconfigure(rest, task, comparison: EdgeComparison) -> ReconfigResult:
    """Per-subject mean coupling change over the significant edge sets.

    A strength is ``None`` when its edge set is empty.
    """
    inc = comparison.increased_edges
    dec = comparison.decreased_edges
    mean_inc = np.array([reconfig_strength(r, t, inc) for r, t in zip(rest, task)]) if inc else None
    mean_dec = np.array([reconfig_strength(r, t, dec) for r, t in zip(rest, task)]) if dec else None
    return ReconfigResult(inc, dec, mean_inc, mean_dec)
