"""Synthetic resting / oddball EEG cohorts with a ground-truth manifest.

Every channel is built in the frequency domain from complex white noise
shaped to a design spectrum (1/f background plus a posterior-weighted alpha
peak). Coupling between two channels is injected by letting them share a
fraction ``sqrt(c)`` of their spectral content inside a band, which makes the
population coherence of the pair equal to ``c`` at every bin of that band
while leaving each channel's power spectrum unchanged.

The designed scalp potentials are projected onto the subspace where the REST
common-mode term of the 21- and 64-channel montages vanishes, so REST
re-referencing returns them unchanged.

Random numbers come from the Philox-4x64 counter-based generator seeded
through ``numpy.random.SeedSequence``. Each noise stream is keyed by
(subject seed, recording, purpose, label), so a channel's samples do not
depend on which other channels are generated.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import fft as sp_fft

from .errors import ConfigError, DataError
from .headmodel import leadfield_for
from .ingest import EventList, Recording, SubjectRecordings, _atomic_write, write_subject
from .montage import EOG_LABELS, P300_ELECTRODES, SCALP_64, STANDARD_21, cartesian

log = logging.getLogger(__name__)

MANIFEST_VERSION = "1.0"
REFERENCE_LABEL = "FCz"

INCREASE_EDGES = (("Fp1", "P3"), ("Fp2", "P4"), ("Fz", "Pz"), ("F3", "P7"), ("F4", "P8"))
DECREASE_EDGES = (("P3", "O1"), ("P4", "O2"), ("Pz", "Oz"), ("P7", "T7"), ("P8", "T8"))

TRIAL_MS = 2250.0
STIMULUS_OFFSET_MS = 750.0  # 250 ms alert + 500 ms cue precede the stimulus

# Shared-source bands: (flat start, flat end, taper width) in Hz. They sit
# inside 1-8 and 8-13 Hz with enough guard that Hann leakage stays in band.
_THETA_SHARE = (1.0, 6.5, 0.5)
_ALPHA_SHARE = (9.25, 11.75, 0.5)
_ALPHA_PEAK_HZ = 10.0
_ALPHA_WIDTH_HZ = 1.0
_PINK_KNEE_HZ = 0.5


@dataclass(frozen=True)
class GeneratorSettings:
    """Cohort-level knobs of the generator (all amplitudes in µV)."""

    sample_rate_hz: float = 500.0
    rest_duration_s: float = 240.0
    n_runs: int = 3
    n_standard: int = 120
    n_target: int = 30
    lead_s: float = 2.0
    effect_coupling: float = 0.15
    coupling_sd: float = 0.05
    coupling_correlation: float = 0.4
    rest_alpha_coupling: float = 0.45
    link_strength: float = 0.9
    group_gap: float = 0.0
    p300_mean_uv: float = 16.0
    p300_sd_uv: float = 3.5
    p300_latency_mean_ms: float = 350.0
    p300_latency_sd_ms: float = 20.0
    noise_scale_uv: float = 6.0
    alpha_power_uv: float = 7.0
    alpha_power_sd_uv: float = 1.5
    task_alpha_scale: float = 1.0
    eog_scale_uv: float = 20.0
    spike_probability: float = 0.0
    spike_amplitude_uv: float = 100.0

    def __post_init__(self):
        if not self.sample_rate_hz > 2 * 30:
            raise ConfigError("sample rate must exceed 60 Hz")
        if self.rest_duration_s <= 0:
            raise ConfigError("rest duration must be positive")
        if self.n_runs < 1 or self.n_standard < 0 or self.n_target < 1:
            raise ConfigError("need at least one run and one target trial")
        if not 0.0 <= self.effect_coupling <= 1.0:
            raise ConfigError("effect_coupling must lie in [0, 1]")
        if not 0.0 <= self.rest_alpha_coupling <= 1.0:
            raise ConfigError("rest_alpha_coupling must lie in [0, 1]")
        if not -1.0 < self.coupling_correlation < 1.0 or not 0.0 <= self.link_strength <= 1.0:
            raise ConfigError("correlations must lie in (-1, 1) and link_strength in [0, 1]")
        if not 0.0 <= self.spike_probability <= 1.0:
            raise ConfigError("spike_probability must lie in [0, 1]")
        for name in ("coupling_sd", "p300_sd_uv", "p300_latency_sd_ms", "noise_scale_uv",
                     "alpha_power_uv", "alpha_power_sd_uv", "task_alpha_scale", "eog_scale_uv",
                     "group_gap", "lead_s"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")

    @property
    def trials_per_run(self) -> int:
        return self.n_standard + self.n_target

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSettings":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown generator settings: {unknown}")
        return cls(**data)


@dataclass(frozen=True)
class SubjectParams:
    subject_id: str
    seed: int
    alpha_power: float
    p300_amp_uv: float
    p300_latency_ms: float
    coupling_increase_1_8: float
    coupling_decrease_8_13: float
    noise_scale_uv: float

    def __post_init__(self):
        for name in ("coupling_increase_1_8", "coupling_decrease_8_13"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise DataError(f"{name} must lie in [0, 1]")
        if self.alpha_power < 0 or self.p300_amp_uv < 0 or self.noise_scale_uv < 0:
            raise DataError("amplitudes must be non-negative")


@dataclass(frozen=True)
class CohortManifest:
    master_seed: int
    settings: GeneratorSettings
    subjects: tuple[SubjectParams, ...]
    trial_schedule: tuple[tuple[str, ...], ...]
    injected_increase_edges: tuple[tuple[str, str], ...] = INCREASE_EDGES
    injected_decrease_edges: tuple[tuple[str, str], ...] = DECREASE_EDGES

    def subject(self, subject_id: str) -> SubjectParams:
        for sp in self.subjects:
            if sp.subject_id == subject_id:
                return sp
        raise DataError(f"subject {subject_id!r} not in manifest")

    def to_dict(self) -> dict:
        return {
            "manifest_version": MANIFEST_VERSION,
            "generator": "reconet.synth",
            "prng": "numpy Philox4x64 via SeedSequence",
            "master_seed": self.master_seed,
            "montage": "standard_21",
            "reference": REFERENCE_LABEL,
            "settings": asdict(self.settings),
            "injected_increase_edges": [list(e) for e in self.injected_increase_edges],
            "injected_decrease_edges": [list(e) for e in self.injected_decrease_edges],
            "trial_schedule": [
                {"run": r + 1, "kinds": list(kinds),
                 "sample_index": task_events(kinds, self.settings).sample_index.tolist()}
                for r, kinds in enumerate(self.trial_schedule)
            ],
            "subjects": [asdict(sp) for sp in self.subjects],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "CohortManifest":
        try:
            settings = GeneratorSettings.from_dict(data["settings"])
            subjects = tuple(SubjectParams(**s) for s in data["subjects"])
            schedule = tuple(tuple(run["kinds"]) for run in data["trial_schedule"])
            inc = tuple(tuple(e) for e in data["injected_increase_edges"])
            dec = tuple(tuple(e) for e in data["injected_decrease_edges"])
            return cls(int(data["master_seed"]), settings, subjects, schedule, inc, dec)
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed manifest: {exc}") from None


def read_manifest(path) -> CohortManifest:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None
    return CohortManifest.from_dict(data)


def manifest_hash(manifest: CohortManifest) -> str:
    return hashlib.sha256(manifest.to_json().encode("utf-8")).hexdigest()


# ------------------------------------------------------------------ seeding

def _words(value: int) -> list[int]:
    value = int(value)
    if value < 0:
        raise ConfigError("seeds must be non-negative")
    out = []
    while True:
        out.append(value & 0xFFFFFFFF)
        value >>= 32
        if not value:
            return out


def stream(seed: int, *keys: str) -> np.random.Generator:
    """Independent Philox stream for ``seed`` and a tuple of string keys."""
    entropy = _words(seed) + [zlib.crc32(k.encode("utf-8")) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def subject_seed(master_seed: int, index: int) -> int:
    digest = hashlib.sha256(f"{int(master_seed)}:{int(index)}".encode("ascii")).digest()
    return int.from_bytes(digest[:8], "little")


# --------------------------------------------------------------- parameters

def trial_schedule(master_seed: int, settings: GeneratorSettings) -> tuple[tuple[str, ...], ...]:
    """Per-run random order of standard and target trials."""
    rng = stream(master_seed, "schedule")
    runs = []
    for _ in range(settings.n_runs):
        kinds = np.array(["standard"] * settings.n_standard + ["target"] * settings.n_target)
        runs.append(tuple(rng.permutation(kinds).tolist()))
    return tuple(runs)


def draw_subjects(n: int, master_seed: int, settings: GeneratorSettings) -> tuple[SubjectParams, ...]:
    """Subject parameters with P300 amplitude linked to both coupling changes.

    ``z_inc`` and ``z_dec`` are correlated standard normals driving the two
    coupling changes; the amplitude loads on their sum with weight
    ``link_strength`` so that a larger theta increase and a larger alpha
    decrease both go with a larger P300.
    """
    s = settings
    rng = stream(master_seed, "cohort")
    rho = s.coupling_correlation
    z1 = rng.standard_normal(n)
    z2 = rho * z1 + math.sqrt(1.0 - rho * rho) * rng.standard_normal(n)
    eps = rng.standard_normal(n)
    lat = rng.standard_normal(n)
    alpha = rng.standard_normal(n)
    if s.group_gap > 0:
        # wide-margin mode: half the cohort is shifted up, half down
        shift = np.where(rng.permutation(n) < n // 2, 0.5, -0.5) * s.group_gap
        z1 = z1 + shift
        z2 = z2 + shift
    drive = (z1 + z2) / math.sqrt(2.0 + 2.0 * rho)
    amp_z = s.link_strength * drive + math.sqrt(1.0 - s.link_strength ** 2) * eps
    hi_dec = max(0.0, s.rest_alpha_coupling - 0.02)
    subjects = []
    for i in range(n):
        subjects.append(SubjectParams(
            subject_id=f"sub-{i + 1:02d}",
            seed=subject_seed(master_seed, i),
            alpha_power=float(max(0.0, s.alpha_power_uv + s.alpha_power_sd_uv * alpha[i])),
            p300_amp_uv=float(max(1.0, s.p300_mean_uv + s.p300_sd_uv * amp_z[i])),
            p300_latency_ms=float(np.clip(s.p300_latency_mean_ms + s.p300_latency_sd_ms * lat[i], 320.0, 460.0)),
            coupling_increase_1_8=float(np.clip(s.effect_coupling + s.coupling_sd * z1[i], 0.0, 0.9)),
            coupling_decrease_8_13=float(np.clip(s.effect_coupling + s.coupling_sd * z2[i], 0.0, hi_dec)),
            noise_scale_uv=s.noise_scale_uv,
        ))
    return tuple(subjects)


def default_subject(seed: int = 0, settings: GeneratorSettings | None = None, **overrides) -> SubjectParams:
    """Subject at the cohort means, with a given noise seed."""
    s = settings or GeneratorSettings()
    sp = SubjectParams(
        subject_id="sub-01", seed=int(seed), alpha_power=s.alpha_power_uv,
        p300_amp_uv=s.p300_mean_uv, p300_latency_ms=s.p300_latency_mean_ms,
        coupling_increase_1_8=s.effect_coupling, coupling_decrease_8_13=s.effect_coupling,
        noise_scale_uv=s.noise_scale_uv)
    return replace(sp, **overrides)


# ----------------------------------------------------------------- spectra

def _taper(freqs: np.ndarray, spec) -> np.ndarray:
    """1 on [lo, hi], raised-cosine to 0 over ``width`` on either side."""
    lo, hi, width = spec
    out = np.zeros_like(freqs)
    out[(freqs >= lo) & (freqs <= hi)] = 1.0
    left = (freqs > lo - width) & (freqs < lo)
    out[left] = 0.5 - 0.5 * np.cos(np.pi * (freqs[left] - (lo - width)) / width)
    right = (freqs > hi) & (freqs < hi + width)
    out[right] = 0.5 + 0.5 * np.cos(np.pi * (freqs[right] - hi) / width)
    return out


def posterior_weight(labels) -> np.ndarray:
    """Alpha weight from 0.3 (frontal pole) to 1.0 (occipital pole)."""
    y = cartesian(labels)[:, 1]
    return 0.3 + 0.7 * (1.0 - y) / 2.0


def dog_bump(t_ms: np.ndarray, amplitude: float, latency_ms: float) -> np.ndarray:
    """P300 waveform: narrow Gaussian minus a wide one, zero mean, peak = amplitude."""
    s1, s2 = 40.0, 80.0
    k = s1 / s2  # equal areas, so the waveform has no DC content
    u = t_ms - latency_ms
    return amplitude * (np.exp(-0.5 * (u / s1) ** 2) - k * np.exp(-0.5 * (u / s2) ** 2)) / (1.0 - k)


class _Spectra:
    """Frequency grid and normalized spectral shapes for one recording length."""

    def __init__(self, n_samples: int, fs: float):
        self.n = n_samples
        self.nfft = sp_fft.next_fast_len(n_samples, real=True)
        self.fs = fs
        self.freqs = np.fft.rfftfreq(self.nfft, d=1.0 / fs)
        df = fs / self.nfft
        pink = 1.0 / np.maximum(self.freqs, _PINK_KNEE_HZ)
        pink[0] = 0.0
        self.pink = pink / (pink.sum() * df)
        alpha = np.exp(-0.5 * ((self.freqs - _ALPHA_PEAK_HZ) / _ALPHA_WIDTH_HZ) ** 2)
        self.alpha = alpha / (alpha.sum() * df)
        self.share = {"1-8": _taper(self.freqs, _THETA_SHARE), "8-13": _taper(self.freqs, _ALPHA_SHARE)}
        # |X_k|^2 = S_k * fs * nfft / 2 gives a one-sided PSD of S (numpy irfft scaling)
        self.gain = math.sqrt(fs * self.nfft / 2.0)

    def white(self, rng: np.random.Generator) -> np.ndarray:
        m = self.freqs.size
        w = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / math.sqrt(2.0)
        w[0] = 0.0
        if self.nfft % 2 == 0:
            w[-1] = w[-1].real * math.sqrt(2.0)
        return w

    def to_time(self, spectrum: np.ndarray) -> np.ndarray:
        return sp_fft.irfft(spectrum, n=self.nfft)[: self.n]


def _recording_couplings(sp: SubjectParams, settings: GeneratorSettings, condition: str):
    """``[(band, edge, coherence)]`` for a rest or task recording."""
    out = []
    rest_alpha = settings.rest_alpha_coupling
    for edge in DECREASE_EDGES:
        c = rest_alpha if condition == "rest" else max(0.0, rest_alpha - sp.coupling_decrease_8_13)
        out.append(("8-13", edge, c))
    if condition == "task":
        for edge in INCREASE_EDGES:
            out.append(("1-8", edge, sp.coupling_increase_1_8))
    return out


def _true_signals(sp: SubjectParams, settings: GeneratorSettings, recording: str, condition: str,
                  labels, n_samples: int) -> dict[str, np.ndarray]:
    """Reference-free scalp signals for ``labels`` (EOG handled separately)."""
    fs = settings.sample_rate_hz
    spec = _Spectra(n_samples, fs)
    alpha_scale = 1.0 if condition == "rest" else settings.task_alpha_scale
    weights = dict(zip(labels, posterior_weight(labels)))
    couplings = [c for c in _recording_couplings(sp, settings, condition) if c[2] > 0]
    shared = {}
    for band, edge, c in couplings:
        w = spec.white(stream(sp.seed, recording, "edge", f"{band}:{edge[0]}-{edge[1]}"))
        shared[(band, edge)] = (np.sqrt(math.sqrt(c) * spec.share[band]), w)
    out = {}
    for lab in labels:
        design = (sp.noise_scale_uv ** 2) * spec.pink \
            + (sp.alpha_power * weights[lab] * alpha_scale) ** 2 * spec.alpha
        mix = spec.white(stream(sp.seed, recording, "channel", lab))
        own = np.ones_like(spec.freqs)
        extra = np.zeros(spec.freqs.size, dtype=complex)
        for (band, edge), (root_phi, w) in shared.items():
            if lab in edge:
                own -= root_phi ** 2
                extra += root_phi * w
        coeffs = np.sqrt(design) * spec.gain * (np.sqrt(np.clip(own, 0.0, 1.0)) * mix + extra)
        out[lab] = spec.to_time(coeffs)
    return out


def rest_common_row(labels) -> np.ndarray:
    """Row ``r`` with REST(v) = v + r.v for reference-free potentials ``v``.

    The REST output of a montage equals the reference-free signal plus a
    common-mode term ``r . v``, identical on every channel.
    """
    from .preprocess import rest_transform

    labels = tuple(labels)
    n = len(labels)
    t = rest_transform(leadfield_for(labels))
    return (t @ (np.eye(n) - 1.0 / n))[0] - np.eye(n)[0]


@lru_cache(maxsize=8)
def _constraints(scalp: tuple[str, ...]) -> np.ndarray:
    """Common-mode rows of the 21-channel and 64-channel REST, embedded in ``scalp``."""
    rows = []
    for montage in (STANDARD_21, SCALP_64):
        row = np.zeros(len(scalp))
        row[[scalp.index(lab) for lab in montage]] = rest_common_row(montage)
        rows.append(row)
    return np.vstack(rows)


def _project(block: np.ndarray, scalp: tuple[str, ...]) -> np.ndarray:
    """Remove the REST common-mode components of both montages.

    Afterwards ``r . v = 0`` for each montage, so REST reproduces the
    designed potentials exactly instead of adding a shared term to every
    channel (which would couple all pairs and change with task state).
    """
    a = _constraints(scalp)
    coef = np.linalg.solve(a @ a.T, a @ block)
    return block - a.T @ coef


P300_CENTRE = "CPz"
P300_SPREAD_DEG = 10.0


@lru_cache(maxsize=8)
def p300_topography(scalp: tuple[str, ...]) -> np.ndarray:
    """Centro-parietal weights peaking at CPz, head-model consistent.

    A spatial Gaussian (10 degree SD of great-circle distance from CPz),
    projected like the background and scaled so that the mean over the five
    P300 electrodes is exactly 1.
    """
    pos = cartesian(scalp)
    centre = cartesian([P300_CENTRE])[0]
    angle = np.degrees(np.arccos(np.clip(pos @ centre, -1.0, 1.0)))
    e = np.exp(-0.5 * (angle / P300_SPREAD_DEG) ** 2)[:, None]
    e = _project(e, scalp)[:, 0]
    idx = [scalp.index(lab) for lab in P300_ELECTRODES]
    return e / e[idx].mean()


def task_events(kinds, settings: GeneratorSettings) -> EventList:
    fs = settings.sample_rate_hz
    onsets = [int(round((settings.lead_s + k * TRIAL_MS / 1000.0 + STIMULUS_OFFSET_MS / 1000.0) * fs))
              for k in range(len(kinds))]
    return EventList(np.asarray(onsets, dtype=np.int64), tuple(kinds))


def _task_length(settings: GeneratorSettings, n_trials: int) -> int:
    return int(round((2.0 * settings.lead_s + n_trials * TRIAL_MS / 1000.0) * settings.sample_rate_hz))


def _build(sp, settings, recording, condition, scalp, n, erp=None) -> dict[str, np.ndarray]:
    """Projected scalp potentials (plus the unprojected reference) for one recording."""
    raw = _true_signals(sp, settings, recording, condition, list(scalp) + [REFERENCE_LABEL], n)
    block = np.vstack([raw[lab] for lab in scalp])
    if erp is not None:
        block += p300_topography(scalp)[:, None] * erp[None, :]
    block = _project(block, scalp)
    out = dict(zip(scalp, block))
    out[REFERENCE_LABEL] = raw[REFERENCE_LABEL]
    return out


def _assemble(signals: dict[str, np.ndarray], labels, sp, settings, recording: str, n: int) -> Recording:
    ref = signals[REFERENCE_LABEL]
    rows = []
    for lab in labels:
        if lab in EOG_LABELS:
            spec = _Spectra(n, settings.sample_rate_hz)
            coeffs = settings.eog_scale_uv * np.sqrt(spec.pink) * spec.gain \
                * spec.white(stream(sp.seed, recording, "eog", lab))
            rows.append(spec.to_time(coeffs))
        else:
            rows.append(signals[lab] - ref)
    return Recording(tuple(labels), settings.sample_rate_hz, np.vstack(rows), "original")


def _scalp(labels) -> tuple[str, ...]:
    """The 64 amplifier sites plus any extra requested scalp labels."""
    extra = [lab for lab in labels if lab not in EOG_LABELS and lab not in SCALP_64]
    return tuple(SCALP_64) + tuple(extra)


def default_labels() -> tuple[str, ...]:
    return tuple(SCALP_64) + tuple(EOG_LABELS)


def _check_labels(labels):
    labels = tuple(labels)
    if REFERENCE_LABEL in labels:
        raise DataError(f"{REFERENCE_LABEL} is the recording reference and cannot be generated as a channel")
    if len(set(labels)) != len(labels) or not labels:
        raise DataError("channel labels must be unique and non-empty")
    return labels


def gen_rest(sp: SubjectParams, settings: GeneratorSettings | None = None, labels=None,
             duration_s: float | None = None) -> Recording:
    """Resting recording: background, posterior alpha and coupled alpha edges."""
    settings = settings or GeneratorSettings()
    labels = _check_labels(labels or default_labels())
    duration = settings.rest_duration_s if duration_s is None else duration_s
    if duration <= 0:
        raise DataError("duration must be positive")
    n = int(round(duration * settings.sample_rate_hz))
    signals = _build(sp, settings, "rest", "rest", _scalp(labels), n)
    return _assemble(signals, labels, sp, settings, "rest", n)


def gen_task(sp: SubjectParams, kinds, settings: GeneratorSettings | None = None, labels=None,
             run: int = 1) -> tuple[Recording, EventList]:
    """One oddball run following ``kinds`` (one entry per 2250 ms trial)."""
    settings = settings or GeneratorSettings()
    labels = _check_labels(labels or default_labels())
    kinds = tuple(kinds)
    if not kinds:
        raise DataError("a task run needs at least one trial")
    events = task_events(kinds, settings)
    n = _task_length(settings, len(kinds))
    name = f"task_run{run}"
    fs = settings.sample_rate_hz
    erp = None
    targets = events.sample_index[np.array([k == "target" for k in kinds])]
    if targets.size and sp.p300_amp_uv > 0:
        t_ms = np.arange(n) * 1000.0 / fs
        half = int(math.ceil(0.9 * fs))  # bump support: +/- 900 ms around the peak
        lat_samples = sp.p300_latency_ms * fs / 1000.0
        erp = np.zeros(n)
        for onset in targets:
            centre = onset + lat_samples
            lo = max(0, int(centre) - half)
            hi = min(n, int(centre) + half + 1)
            erp[lo:hi] += dog_bump(t_ms[lo:hi], sp.p300_amp_uv, centre * 1000.0 / fs)
    signals = _build(sp, settings, name, "task", _scalp(labels), n, erp)
    rec = _assemble(signals, labels, sp, settings, name, n)
    if settings.spike_probability > 0:
        rec = _add_spikes(rec, events, sp, settings, name)
    return rec, events


def _add_spikes(rec: Recording, events: EventList, sp, settings, recording: str) -> Recording:
    """Uniform-probability +/-amplitude pulses (20 ms) on a random montage channel."""
    rng = stream(sp.seed, recording, "spikes")
    data = rec.samples.copy()
    candidates = [rec.index(lab) for lab in STANDARD_21 if lab in rec.channel_labels]
    if not candidates:
        return rec
    fs = settings.sample_rate_hz
    width = max(1, int(round(0.02 * fs)))
    trial = int(round(TRIAL_MS * fs / 1000.0))
    stim = int(round(STIMULUS_OFFSET_MS * fs / 1000.0))
    for onset in events.sample_index:
        hit, chan, sign, pos = rng.random(), rng.integers(len(candidates)), rng.random(), rng.random()
        if hit >= settings.spike_probability:
            continue
        start = int(onset - stim + pos * (trial - width))
        ch = candidates[int(chan)]
        data[ch, start:start + width] += settings.spike_amplitude_uv * (1.0 if sign < 0.5 else -1.0)
    return rec.with_samples(data)


def simulate_subject(sp: SubjectParams, schedule, settings: GeneratorSettings | None = None,
                     labels=None) -> SubjectRecordings:
    settings = settings or GeneratorSettings()
    rest = gen_rest(sp, settings, labels)
    runs = tuple(gen_task(sp, kinds, settings, labels, run=r + 1) for r, kinds in enumerate(schedule))
    return SubjectRecordings(sp.subject_id, rest, runs)


# ------------------------------------------------------------------ cohort

def make_manifest(n: int, master_seed: int, settings: GeneratorSettings | None = None) -> CohortManifest:
    settings = settings or GeneratorSettings()
    if n < 4:
        raise ConfigError(f"a cohort needs at least 4 subjects, got {n}")
    return CohortManifest(int(master_seed), settings, draw_subjects(n, master_seed, settings),
                          trial_schedule(master_seed, settings))


def _write_one(args) -> str:
    out_dir, sp, schedule, settings = args
    subject = simulate_subject(sp, schedule, settings)
    write_subject(Path(out_dir) / sp.subject_id, subject)
    return sp.subject_id


def gen_cohort(out_dir, n: int = 24, master_seed: int = 0, effect_coupling: float | None = None,
               settings: GeneratorSettings | None = None, jobs: int = 1) -> CohortManifest:
    """Write ``<out_dir>/<subject_id>/...`` for ``n`` subjects plus ``manifest.json``."""
    settings = settings or GeneratorSettings()
    if effect_coupling is not None:
        settings = replace(settings, effect_coupling=effect_coupling)
    manifest = make_manifest(n, master_seed, settings)
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {out_dir}: {exc}") from None
    tasks = [(str(out_dir), sp, manifest.trial_schedule, settings) for sp in manifest.subjects]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for sid in pool.map(_write_one, tasks):
                log.info("wrote %s", sid)
    else:
        for t in tasks:
            log.info("wrote %s", _write_one(t))
    _atomic_write(out_dir / "manifest.json", manifest.to_json().encode("utf-8"))
    return manifest
