"""Recording container and readers/writers for EDF, CSV and event sidecars."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError, ScalingError
from .montage import Montage

REFERENCES = ("original", "average", "rest_infinity")
EVENT_KINDS = ("target", "standard", "rest_marker")

_UNIT_TO_UV = {"uv": 1.0, "µv": 1.0, "mv": 1e3, "v": 1e6, "nv": 1e-3}
_ANNOTATION_LABELS = ("edf annotations", "bdf annotations")


@dataclass(frozen=True)
class Recording:
    channel_labels: tuple[str, ...]
    sample_rate_hz: float
    samples: np.ndarray = field(repr=False)
    reference: str = "original"

    def __post_init__(self):
        labels = tuple(str(lab) for lab in self.channel_labels)
        data = np.asarray(self.samples, dtype=float)
        if data.ndim != 2:
            raise DataError("samples must be a channels x time matrix")
        if data.shape[0] != len(labels):
            raise DataError(f"{len(labels)} labels for {data.shape[0]} channels")
        if len(set(labels)) != len(labels):
            dupes = sorted({lab for lab in labels if labels.count(lab) > 1})
            raise DataError(f"duplicate channel labels: {dupes}")
        if not self.sample_rate_hz > 0:
            raise DataError("sample_rate_hz must be positive")
        if self.reference not in REFERENCES:
            raise DataError(f"unknown reference {self.reference!r}")
        if not np.all(np.isfinite(data)):
            raise DataError("recording contains NaN or Inf samples")
        object.__setattr__(self, "channel_labels", labels)
        object.__setattr__(self, "samples", data)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def index(self, label: str) -> int:
        return self.channel_labels.index(label)

    def with_samples(self, samples, reference=None) -> "Recording":
        return replace(self, samples=samples,
                       reference=self.reference if reference is None else reference)

    def pick(self, labels) -> "Recording":
        idx = [self.index(lab) for lab in labels]
        return Recording(tuple(labels), self.sample_rate_hz, self.samples[idx], self.reference)


@dataclass(frozen=True)
class EventList:
    sample_index: np.ndarray
    kind: tuple[str, ...]

    def __post_init__(self):
        idx = np.asarray(self.sample_index, dtype=np.int64).reshape(-1)
        kinds = tuple(self.kind)
        if len(kinds) != idx.size:
            raise DataError("event index/kind length mismatch")
        bad = sorted(set(kinds) - set(EVENT_KINDS))
        if bad:
            raise DataError(f"unknown event kinds: {bad}")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
            raise DataError("event sample indices must be non-negative and strictly increasing")
        object.__setattr__(self, "sample_index", idx)
        object.__setattr__(self, "kind", kinds)

    def __len__(self):
        return len(self.kind)

    def select(self, kinds) -> "EventList":
        keep = [i for i, k in enumerate(self.kind) if k in set(kinds)]
        return EventList(self.sample_index[keep], tuple(self.kind[i] for i in keep))

    def check_bounds(self, n_samples: int) -> None:
        if len(self) and self.sample_index[-1] >= n_samples:
            raise DataError(f"event at sample {self.sample_index[-1]} beyond recording length {n_samples}")


# --------------------------------------------------------------------- EDF

def _field(raw: bytes, start: int, width: int, what: str) -> str:
    chunk = raw[start:start + width]
    if len(chunk) < width:
        raise ParseError(f"EDF header truncated while reading {what}", offset=start)
    try:
        return chunk.decode("ascii").strip()
    except UnicodeDecodeError:
        raise ParseError(f"non-ASCII bytes in EDF field {what}", offset=start) from None


def _number(text: str, start: int, what: str, cast=float):
    try:
        return cast(text)
    except ValueError:
        raise ParseError(f"EDF field {what} is not a number: {text!r}", offset=start) from None


def read_edf(path) -> Recording:
    """Read a 16-bit EDF file into a Recording in microvolts.

    Annotation signals are skipped. All remaining signals must share one
    sampling rate.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 256:
        raise ParseError("file shorter than the 256-byte EDF main header", offset=len(raw))
    version = _field(raw, 0, 8, "version")
    if version != "0":
        raise ParseError(f"not an EDF file (version field {version!r})", offset=0)
    header_bytes = _number(_field(raw, 184, 8, "header bytes"), 184, "header bytes", int)
    n_records = _number(_field(raw, 236, 8, "record count"), 236, "record count", int)
    record_duration = _number(_field(raw, 244, 8, "record duration"), 244, "record duration")
    ns = _number(_field(raw, 252, 4, "signal count"), 252, "signal count", int)
    if ns <= 0:
        raise ParseError("EDF declares no signals", offset=252)
    if header_bytes != 256 * (ns + 1):
        raise ParseError(f"header size {header_bytes} inconsistent with {ns} signals", offset=184)
    if record_duration <= 0:
        raise ParseError("record duration must be positive", offset=244)

    widths = [("label", 16), ("transducer", 80), ("physdim", 8), ("physmin", 8),
              ("physmax", 8), ("digmin", 8), ("digmax", 8), ("prefilter", 80),
              ("spr", 8), ("reserved", 32)]
    sig: dict[str, list] = {}
    pos = 256
    for name, width in widths:
        values = []
        for i in range(ns):
            text = _field(raw, pos, width, f"{name}[{i}]")
            if name in ("physmin", "physmax"):
                text = _number(text, pos, f"{name}[{i}]")
            elif name in ("digmin", "digmax", "spr"):
                text = _number(text, pos, f"{name}[{i}]", int)
            values.append(text)
            pos += width
        sig[name] = values

    spr = np.asarray(sig["spr"], dtype=np.int64)
    if np.any(spr <= 0):
        raise ParseError("samples-per-record must be positive", offset=256 + ns * 216)
    record_samples = int(spr.sum())
    data_bytes = len(raw) - header_bytes
    record_bytes = 2 * record_samples
    if n_records == -1:
        if data_bytes % record_bytes:
            raise ParseError("data section is not a whole number of records", offset=header_bytes)
        n_records = data_bytes // record_bytes
    if n_records < 0 or n_records * record_bytes != data_bytes:
        raise ParseError(
            f"header declares {n_records} records of {record_bytes} bytes but data section "
            f"holds {data_bytes} bytes", offset=236)

    keep = [i for i in range(ns) if sig["label"][i].lower() not in _ANNOTATION_LABELS]
    if not keep:
        raise ParseError("EDF contains only annotation signals", offset=256)
    rates = {int(spr[i]) for i in keep}
    if len(rates) != 1:
        raise ParseError("signals with different sampling rates are not supported", offset=256 + ns * 216)

    digital = np.frombuffer(raw, dtype="<i2", offset=header_bytes).reshape(n_records, record_samples)
    starts = np.concatenate([[0], np.cumsum(spr)])
    out = np.empty((len(keep), n_records * int(spr[keep[0]])))
    for row, i in enumerate(keep):
        dmin, dmax = sig["digmin"][i], sig["digmax"][i]
        pmin, pmax = sig["physmin"][i], sig["physmax"][i]
        if dmax == dmin:
            raise ScalingError(f"channel {sig['label'][i]!r} has digital min == digital max ({dmin})")
        if pmax == pmin:
            raise ScalingError(f"channel {sig['label'][i]!r} has physical min == physical max ({pmin})")
        unit = _UNIT_TO_UV.get(sig["physdim"][i].lower())
        if unit is None:
            raise ParseError(f"unsupported physical unit {sig['physdim'][i]!r} on {sig['label'][i]!r}")
        gain = (pmax - pmin) / (dmax - dmin)
        chunk = digital[:, starts[i]:starts[i + 1]].reshape(-1).astype(float)
        out[row] = ((chunk - dmin) * gain + pmin) * unit
    fs = float(spr[keep[0]]) / record_duration
    return Recording(tuple(sig["label"][i] for i in keep), fs, out)


_LSB_LADDER = tuple(m * 10.0 ** e for e in range(-4, 4) for m in (1, 2, 5))


def _choose_lsb(samples: np.ndarray) -> float:
    peak = float(np.max(np.abs(samples))) if samples.size else 0.0
    for lsb in _LSB_LADDER:
        if peak <= 32767 * lsb:
            return lsb
    raise DataError(f"signal peak {peak:g} uV exceeds the 16-bit EDF range")


def _fmt(value, width: int) -> bytes:
    if isinstance(value, float):
        text = repr(value)
        if text.endswith(".0"):
            text = text[:-2]
        if len(text) > width:
            text = f"{value:.{width}g}"
            while len(text) > width:
                text = f"{value:.{max(1, len(text) - width - 1)}g}"
    else:
        text = str(value)
    if len(text) > width:
        raise DataError(f"value {text!r} does not fit a {width}-byte EDF field")
    return text.ljust(width).encode("ascii")


def _record_layout(n_samples: int, fs: float) -> tuple[int, float]:
    """Largest samples-per-record <= 1 s of data dividing ``n_samples``."""
    cap = int(round(fs)) if fs >= 1 else 1
    for spr in range(max(1, min(cap, n_samples)), 0, -1):
        if n_samples % spr == 0:
            duration = spr / fs
            text = _fmt(float(duration), 8).decode()
            if math.isclose(float(text), duration, rel_tol=1e-12):
                return spr, duration
    raise DataError("cannot find an EDF record layout representable in 8 characters")


def write_edf(path, rec: Recording, lsb_uv=None) -> None:
    """Write ``rec`` as a 16-bit EDF file.

    Each channel is scaled with ``physical = digital * lsb`` where ``lsb`` is
    picked from a 1-2-5 ladder (or forced with ``lsb_uv``), so values that are
    already multiples of the step survive a read/write cycle exactly.
    """
    n = rec.n_samples
    if n == 0:
        raise DataError("refusing to write an empty recording")
    spr, duration = _record_layout(n, rec.sample_rate_hz)
    n_records = n // spr
    ns = rec.n_channels
    lsbs = [float(lsb_uv) if lsb_uv is not None else _choose_lsb(rec.samples[i]) for i in range(ns)]

    head = io.BytesIO()
    head.write(_fmt("0", 8))
    head.write(_fmt("X X X X", 80))
    head.write(_fmt("Startdate 01-JAN-2000 X reconet X", 80))
    head.write(_fmt("01.01.00", 8))
    head.write(_fmt("00.00.00", 8))
    head.write(_fmt(256 * (ns + 1), 8))
    head.write(_fmt("", 44))
    head.write(_fmt(n_records, 8))
    head.write(_fmt(float(duration), 8))
    head.write(_fmt(ns, 4))
    fields = {
        "label": [(lab, 16) for lab in rec.channel_labels],
        "transducer": [("", 80)] * ns,
        "physdim": [("uV", 8)] * ns,
        "physmin": [(-32768 * lsb, 8) for lsb in lsbs],
        "physmax": [(32767 * lsb, 8) for lsb in lsbs],
        "digmin": [(-32768, 8)] * ns,
        "digmax": [(32767, 8)] * ns,
        "prefilter": [("", 80)] * ns,
        "spr": [(spr, 8)] * ns,
        "reserved": [("", 32)] * ns,
    }
    parsed_gain = []
    for name, items in fields.items():
        texts = [_fmt(v, w) for v, w in items]
        if name == "physmin":
            pmins = [float(t) for t in texts]
        if name == "physmax":
            pmaxs = [float(t) for t in texts]
        head.write(b"".join(texts))
    for pmin, pmax in zip(pmins, pmaxs):
        parsed_gain.append(((pmax - pmin) / 65535.0, pmin))

    digital = np.empty((ns, n), dtype="<i2")
    for i, (gain, pmin) in enumerate(parsed_gain):
        d = np.rint((rec.samples[i] - pmin) / gain) - 32768
        digital[i] = np.clip(d, -32768, 32767).astype("<i2")
    body = digital.reshape(ns, n_records, spr).transpose(1, 0, 2).tobytes()
    _atomic_write(path, head.getvalue() + body)


def _atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


# --------------------------------------------------------------------- CSV

def read_csv_recording(path, sample_rate_hz: float) -> Recording:
    """Read a channel-per-column CSV (first row = labels) into a Recording."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty CSV file", row=1)
    labels = [c.strip() for c in rows[0]]
    if len(set(labels)) != len(labels):
        dupes = sorted({lab for lab in labels if labels.count(lab) > 1})
        raise ParseError(f"duplicate channel labels {dupes}", row=1)
    values = np.empty((len(rows) - 1, len(labels)))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(labels):
            raise ParseError(f"expected {len(labels)} columns, found {len(row)}", row=r)
        try:
            values[r - 2] = [float(c) for c in row]
        except ValueError:
            raise ParseError("non-numeric cell", row=r) from None
    return Recording(tuple(labels), sample_rate_hz, values.T, "original")


def write_csv(path, rec: Recording) -> None:
    buf = io.StringIO()
    buf.write(",".join(rec.channel_labels) + "\n")
    np.savetxt(buf, rec.samples.T, delimiter=",", fmt="%.17g")
    _atomic_write(path, buf.getvalue().encode("utf-8"))


# ------------------------------------------------------------------ events

def read_events(path) -> EventList:
    idx, kinds = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or (lineno == 1 and line.replace(" ", "") == "sample_index,kind"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ParseError("event line must be 'sample_index,kind'", row=lineno)
            try:
                idx.append(int(parts[0]))
            except ValueError:
                raise ParseError(f"bad sample index {parts[0]!r}", row=lineno) from None
            kinds.append(parts[1].strip())
    return EventList(np.asarray(idx, dtype=np.int64), tuple(kinds))


def write_events(path, events: EventList) -> None:
    lines = ["sample_index,kind"]
    lines += [f"{i},{k}" for i, k in zip(events.sample_index.tolist(), events.kind)]
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


# ----------------------------------------------------------------- montage

def apply_montage(rec: Recording, montage: Montage) -> Recording:
    """Keep only the montage channels, in montage order."""
    absent = [lab for lab in montage.labels if lab not in rec.channel_labels]
    if absent:
        raise DataError(f"recording lacks montage channels: {', '.join(absent)}")
    if tuple(montage.labels) == rec.channel_labels:
        return rec
    return rec.pick(montage.labels)


# ----------------------------------------------------------------- subject

@dataclass(frozen=True)
class SubjectRecordings:
    """One subject's resting recording and task runs with their events."""

    subject_id: str
    rest: Recording
    task: tuple[tuple[Recording, EventList], ...]


def subject_files(subject_dir) -> tuple[Path, list[tuple[Path, Path]]]:
    """Locate ``rest.edf`` and the ``task_runN.edf`` / ``events_runN.csv`` pairs."""
    subject_dir = Path(subject_dir)
    rest = subject_dir / "rest.edf"
    if not rest.is_file():
        raise DataError(f"missing {rest}")
    runs = []
    k = 1
    while (subject_dir / f"task_run{k}.edf").exists():
        ev = subject_dir / f"events_run{k}.csv"
        if not ev.is_file():
            raise DataError(f"missing {ev}")
        runs.append((subject_dir / f"task_run{k}.edf", ev))
        k += 1
    if not runs:
        raise DataError(f"no task_run*.edf files in {subject_dir}")
    return rest, runs


def load_subject(subject_dir) -> SubjectRecordings:
    rest, runs = subject_files(subject_dir)
    task = []
    for edf, ev in runs:
        rec = read_edf(edf)
        events = read_events(ev)
        events.check_bounds(rec.n_samples)
        task.append((rec, events))
    return SubjectRecordings(Path(subject_dir).name, read_edf(rest), tuple(task))


def write_subject(subject_dir, subject: SubjectRecordings) -> None:
    subject_dir = Path(subject_dir)
    write_edf(subject_dir / "rest.edf", subject.rest)
    for k, (rec, events) in enumerate(subject.task, start=1):
        write_edf(subject_dir / f"task_run{k}.edf", rec)
        write_events(subject_dir / f"events_run{k}.csv", events)
