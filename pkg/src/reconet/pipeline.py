"""Run configuration, per-subject processing and cohort-level analysis."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, classify, stats
from .erp import P300Measure, average_epochs, p300_amplitude
from .errors import ConfigError, DataError, ReconetError
from .headmodel import leadfield_for
from .ingest import EventList, Recording, SubjectRecordings, apply_montage, load_subject
from .montage import EOG_LABELS, MONTAGES, P300_ELECTRODES, get_montage
from .network import COHERENCE_MODES, CoherenceMatrix, check_segment_balance, EdgeComparison, ReconfigResult, compare_conditions, condition_matrices, reconfigure
from .preprocess import (EpochSet, baseline_correct, bandpass_filter, reject_artifacts, rereference_rest,
                         segment_epochs, segment_rest)
from .spectral import TFD, BandSpec, WelchParams, default_tfd_freqs, mean_tfd

log = logging.getLogger(__name__)

TASK_NETWORK_WINDOW_MS = (-750.0, 1500.0)
TFD_CHANNEL = "Pz"


@dataclass(frozen=True)
class RunConfig:
    inputs: tuple[str, ...] = ()
    montage: str = "standard_21"
    bands: tuple[str, ...] = ("1-8", "8-13")
    welch_window_samples: int = 500
    welch_overlap: float = 0.5
    welch_fft_len: int = 512
    welch_window: str = "hann"
    erp_band_hz: tuple[float, float] = (1.0, 13.0)
    network_band_hz: tuple[float, float] = (1.0, 30.0)
    erp_window_ms: tuple[float, float] = (-200.0, 800.0)
    baseline_ms: tuple[float, float] = (-200.0, 0.0)
    p300_search_ms: tuple[float, float] = (300.0, 500.0)
    p300_halfwidth_ms: float = 10.0
    segment_ms: float = 2250.0
    artifact_threshold_uv: float = 75.0
    reject_network_segments: bool = True
    alpha: float = 0.05
    correction: str = "bonferroni"
    outlier_fraction: float = 0.10
    group_size: int = 9
    classifier: str = "both"
    standardize: bool = False
    resubstitution: bool = False
    compute_tfd: bool = True
    coherence_mode: str = "per_segment"
    per_electrode_amplitudes: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("inputs", "bands"):
            object.__setattr__(self, name, tuple(str(v) for v in getattr(self, name)))
        for name in ("erp_band_hz", "network_band_hz", "erp_window_ms", "baseline_ms", "p300_search_ms"):
            value = getattr(self, name)
            try:
                pair = tuple(float(v) for v in value)
            except (TypeError, ValueError):
                raise ConfigError(f"{name} must be a pair of numbers") from None
            if len(pair) != 2:
                raise ConfigError(f"{name} must be a pair of numbers")
            object.__setattr__(self, name, pair)

    # -------------------------------------------------------------- parsing
    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data.update(overrides or {})
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    # ----------------------------------------------------------- validation
    def band_specs(self) -> tuple[BandSpec, ...]:
        return tuple(BandSpec.parse(b) for b in self.bands)

    def welch(self) -> WelchParams:
        return WelchParams(self.welch_window_samples, self.welch_overlap, self.welch_window, self.welch_fft_len)

    def validate(self, fs: float | None = None) -> None:
        """Check every module precondition that can be checked without data."""
        try:
            if self.montage not in MONTAGES:
                raise ConfigError(f"unknown montage {self.montage!r}; known: {sorted(MONTAGES)}")
            bands = self.band_specs()
            if len({b.name for b in bands}) != len(bands) or not bands:
                raise ConfigError("bands must be non-empty and distinct")
            wp = self.welch()
            if self.correction not in ("bonferroni", "none"):
                raise ConfigError("correction must be 'bonferroni' or 'none'")
            if not 0.0 < self.alpha < 1.0:
                raise ConfigError("alpha must lie in (0, 1)")
            if not 0.0 <= self.outlier_fraction < 1.0:
                raise ConfigError("outlier_fraction must lie in [0, 1)")
            if self.group_size < 2:
                raise ConfigError("group_size must be at least 2")
            if self.coherence_mode not in COHERENCE_MODES:
                raise ConfigError(f"coherence_mode must be one of {COHERENCE_MODES}")
            if self.classifier not in ("lda", "svm", "both"):
                raise ConfigError("classifier must be 'lda', 'svm' or 'both'")
            if not self.artifact_threshold_uv > 0:
                raise ConfigError("artifact threshold must be positive")
            if self.segment_ms <= 0 or self.p300_halfwidth_ms < 0:
                raise ConfigError("segment length must be positive and halfwidth non-negative")
            for name in ("erp_band_hz", "network_band_hz"):
                lo, hi = getattr(self, name)
                if not 0 < lo < hi:
                    raise ConfigError(f"{name} must satisfy 0 < lo < hi")
                if fs is not None and hi >= fs / 2:
                    raise ConfigError(f"{name} upper edge {hi} Hz is not below Nyquist ({fs / 2} Hz)")
            ew, bw, sw = self.erp_window_ms, self.baseline_ms, self.p300_search_ms
            if not (ew[0] <= bw[0] < bw[1] <= ew[1]):
                raise ConfigError("baseline window must lie inside the ERP window")
            if not (ew[0] <= sw[0] < sw[1] <= ew[1]):
                raise ConfigError("P300 search window must lie inside the ERP window")
            if fs is not None:
                n_seg = wp.n_segments(int(round(self.segment_ms * fs / 1000.0)))
                if n_seg < 2:
                    raise ConfigError(f"{self.segment_ms} ms segments give {n_seg} Welch segment(s); need 2")
                for b in bands:
                    if not b.mask(wp.freqs(fs)).any():
                        raise ConfigError(f"band {b.name} holds no frequency bins")
        except ConfigError:
            raise
        except ReconetError as exc:
            raise ConfigError(str(exc)) from None


# ------------------------------------------------------------ per subject

@dataclass(frozen=True)
class SubjectResult:
    subject_id: str
    p300: P300Measure
    erp_times_ms: np.ndarray
    erp_wave: np.ndarray
    rest: dict[str, CoherenceMatrix]
    task: dict[str, CoherenceMatrix]
    rejections: dict
    tfd_rest: TFD | None = None
    tfd_task: TFD | None = None


class StageError(ReconetError):
    """A stage failed for one subject; wraps the original error."""

    def __init__(self, stage: str, subject_id: str, cause: ReconetError):
        super().__init__(f"stage {stage} failed for subject {subject_id}: {cause}")
        self.stage = stage
        self.subject_id = subject_id
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)


def _stage(name, subject_id, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except ReconetError as exc:
        raise StageError(name, subject_id, exc) from exc


def erp_path(subject: SubjectRecordings, cfg: RunConfig):
    """REST on all scalp channels, 1-13 Hz, epochs, baseline, rejection, average."""
    montage = get_montage(cfg.montage)
    sid = subject.subject_id
    epochs = []
    rejected = []
    total = 0
    for run, (rec, events) in enumerate(subject.task, start=1):
        scalp = tuple(lab for lab in rec.channel_labels if lab not in EOG_LABELS)
        missing = [e for e in P300_ELECTRODES if e not in scalp]
        if missing:
            raise StageError("ingest", sid, DataError(f"run {run} lacks P300 electrodes {missing}"))
        needed = tuple(dict.fromkeys(P300_ELECTRODES + montage.labels))
        rec = _stage("rereference", sid, rereference_rest, rec.pick(scalp), leadfield_for(scalp), needed)
        rec = _stage("filter", sid, bandpass_filter, rec, *cfg.erp_band_hz)
        es = _stage("epoch", sid, segment_epochs, rec, events, cfg.erp_window_ms, ("target",))
        es = _stage("baseline", sid, baseline_correct, es, cfg.baseline_ms)
        keep_es, bad = _stage("reject", sid, reject_artifacts, es, cfg.artifact_threshold_uv, montage.labels)
        total += len(es)
        rejected += [{"run": run, "event": int(es.event_indices[i])} for i in bad]
        epochs.append(keep_es.pick(P300_ELECTRODES))
    data = np.concatenate([e.data for e in epochs], axis=0)
    conds = sum((e.conditions for e in epochs), ())
    merged = EpochSet(data, conds, epochs[0].window_ms, epochs[0].sample_rate_hz, P300_ELECTRODES)
    erp = _stage("erp", sid, average_epochs, merged, "target")
    measure = _stage("p300", sid, p300_amplitude, erp, cfg.p300_search_ms, cfg.p300_halfwidth_ms,
                     per_electrode=cfg.per_electrode_amplitudes)
    return measure, erp, {"erp_epochs": total, "erp_rejected": rejected}


def _network_epochs(rec: Recording, cfg: RunConfig, montage, events: EventList | None, sid: str,
                    run_name: str):
    rec = _stage("montage", sid, apply_montage, rec, montage)
    rec = _stage("rereference", sid, rereference_rest, rec, leadfield_for(montage.labels))
    rec = _stage("filter", sid, bandpass_filter, rec, *cfg.network_band_hz)
    if events is None:
        es = _stage("segment", sid, segment_rest, rec, cfg.segment_ms)
    else:
        lo = TASK_NETWORK_WINDOW_MS[0]
        es = _stage("segment", sid, segment_epochs, rec, events, (lo, lo + cfg.segment_ms),
                    ("target", "standard"))
    rejected = []
    if cfg.reject_network_segments:
        n_in = len(es)
        es, bad = reject_artifacts(es, cfg.artifact_threshold_uv)
        rejected = [{"run": run_name, "segment": int(i)} for i in bad]
        log.debug("%s %s: %d/%d segments kept", sid, run_name, len(es), n_in)
    return rec, es, rejected


def network_path(subject: SubjectRecordings, cfg: RunConfig):
    montage = get_montage(cfg.montage)
    sid = subject.subject_id
    bands = cfg.band_specs()
    wp = cfg.welch()
    rest_rec, rest_es, rej_rest = _network_epochs(subject.rest, cfg, montage, None, sid, "rest")
    task_sets, rej_task, task_recs = [], [], []
    for run, (rec, events) in enumerate(subject.task, start=1):
        filtered, es, bad = _network_epochs(rec, cfg, montage, events, sid, f"task_run{run}")
        task_sets.append(es)
        rej_task += bad
        task_recs.append((filtered, events))
    task_es = EpochSet(np.concatenate([e.data for e in task_sets], axis=0),
                       sum((e.conditions for e in task_sets), ()), task_sets[0].window_ms,
                       task_sets[0].sample_rate_hz, task_sets[0].channel_labels)
    check_segment_balance(len(rest_es), len(task_es), sid)
    rest = _stage("coherence", sid, condition_matrices, rest_es, bands, wp, "rest", cfg.coherence_mode)
    task = _stage("coherence", sid, condition_matrices, task_es, bands, wp, "task", cfg.coherence_mode)
    info = {"rest_segments": len(rest_es) + len(rej_rest), "rest_rejected": rej_rest,
            "task_segments": len(task_es) + len(rej_task), "task_rejected": rej_task}
    tfds = (None, None)
    if cfg.compute_tfd and TFD_CHANNEL in montage.labels:
        c = montage.labels.index(TFD_CHANNEL)
        freqs = default_tfd_freqs()
        freqs = freqs[freqs < rest_es.sample_rate_hz / 2]
        tfd_rest = mean_tfd(rest_es.data[:, c], rest_es.sample_rate_hz, freqs, t0_ms=0.0)
        tfd_task = mean_tfd(task_es.data[:, c], task_es.sample_rate_hz, freqs, t0_ms=task_es.window_ms[0])
        tfds = (tfd_rest, tfd_task)
    return rest, task, info, tfds


def process_subject(subject: SubjectRecordings, cfg: RunConfig, erp: bool = True) -> SubjectResult:
    if erp:
        measure, wave, erp_info = erp_path(subject, cfg)
        times, samples = wave.times_ms, wave.samples.mean(axis=0)
    else:
        measure, times, samples, erp_info = P300Measure(float("nan"), float("nan"), ()), np.zeros(0), np.zeros(0), {}
    rest, task, net_info, tfds = network_path(subject, cfg)
    return SubjectResult(subject.subject_id, measure, times, samples, rest, task,
                         {**erp_info, **net_info}, *tfds)


def _process_dir(args):
    path, cfg = args
    subject = _stage("ingest", Path(path).name, load_subject, path)
    return process_subject(subject, cfg)


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        env = os.environ.get("RECONET_JOBS")
        if env:
            try:
                jobs = int(env)
            except ValueError:
                raise ConfigError(f"RECONET_JOBS must be an integer, got {env!r}") from None
        else:
            jobs = 1
    if jobs < 1:
        raise ConfigError("jobs must be at least 1")
    return jobs


def process_cohort_dirs(subject_dirs, cfg: RunConfig, jobs: int = 1) -> list[SubjectResult]:
    tasks = [(str(p), cfg) for p in subject_dirs]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_process_dir, tasks))
    return [_process_dir(t) for t in tasks]


# ------------------------------------------------------------ cohort level

@dataclass(frozen=True)
class CohortAnalysis:
    subject_ids: tuple[str, ...]
    comparisons: dict[str, EdgeComparison]
    reconfig: dict[str, ReconfigResult]
    features: classify.FeatureTable | None
    outliers: stats.OutlierReport | None
    correlations: dict
    group_tests: dict
    classification: dict
    notes: tuple[str, ...] = ()


def feature_columns(subject_ids, reconfig: dict[str, ReconfigResult], amplitudes, bands):
    """mean_increase from the first band and mean_decrease from the second."""
    inc_band, dec_band = bands[0].name, bands[1].name if len(bands) > 1 else bands[0].name
    inc = reconfig[inc_band].mean_increase
    dec = reconfig[dec_band].mean_decrease
    return inc, dec


def analyse_cohort(results: list[SubjectResult], cfg: RunConfig) -> CohortAnalysis:
    bands = cfg.band_specs()
    ids = tuple(r.subject_id for r in results)
    comparisons, reconfig = {}, {}
    for b in bands:
        rest = [r.rest[b.name] for r in results]
        task = [r.task[b.name] for r in results]
        cmp_ = _stage("stats", "cohort", compare_conditions, rest, task, cfg.alpha, cfg.correction)
        comparisons[b.name] = cmp_
        reconfig[b.name] = reconfigure(rest, task, cmp_)
    amps = np.array([r.p300.amplitude_uv for r in results])
    inc, dec = feature_columns(ids, reconfig, amps, bands)
    notes = []
    correlations, group_tests, classification = {}, {}, {}
    features = outliers = None
    if inc is None or dec is None:
        notes.append("no significant increased edges in the first band or decreased edges in the "
                     "second band; features, correlations and classification skipped")
        return CohortAnalysis(ids, comparisons, reconfig, None, None, {}, {}, {}, tuple(notes))
    table = classify.FeatureTable(ids, inc, dec, amps)
    points = np.column_stack([inc, dec, amps])
    outliers = _stage("outliers", "cohort", stats.mahalanobis_outliers, points, cfg.outlier_fraction)
    kept = table.subset(outliers.kept_indices)
    for name, col in (("increase_vs_amplitude", kept.increase_1_8), ("decrease_vs_amplitude", kept.decrease_8_13)):
        res = _stage("stats", "cohort", stats.pearson, col, kept.p300_amplitude_uv)
        correlations[name] = {"r": res.statistic, "p": res.p_value, "n": len(kept)}
    try:
        grouped = classify.form_groups(kept, cfg.group_size)
    except DataError as exc:
        notes.append(f"groups not formed: {exc}")
        return CohortAnalysis(ids, comparisons, reconfig, kept, outliers, correlations, {}, {}, tuple(notes))
    hi = [i for i, g in enumerate(grouped.group) if g == "high"]
    lo = [i for i, g in enumerate(grouped.group) if g == "low"]
    for name, col in (("p300_amplitude_uv", grouped.p300_amplitude_uv), ("increase_1_8", grouped.increase_1_8),
                      ("decrease_8_13", grouped.decrease_8_13)):
        res = stats.independent_t_test(col[hi], col[lo])
        group_tests[name] = {"t": res.statistic, "p": res.p_value, "dof": res.dof,
                             "mean_high": float(np.mean(col[hi])), "mean_low": float(np.mean(col[lo])),
                             "sd_high": float(np.std(col[hi], ddof=1)), "sd_low": float(np.std(col[lo], ddof=1))}
    kinds = ("lda", "svm") if cfg.classifier == "both" else (cfg.classifier,)
    for kind in kinds:
        cv = _stage("classify", "cohort", classify.loocv_accuracy, grouped, kind,
                    cfg.standardize, cfg.resubstitution)
        classification[kind] = {"accuracy": cv.accuracy, "scheme": cv.scheme,
                                "accuracy_percent": round(100.0 * cv.accuracy, 2),
                                "predictions": cv.records(grouped)}
    return CohortAnalysis(ids, comparisons, reconfig, grouped, outliers, correlations, group_tests,
                          classification, tuple(notes))
