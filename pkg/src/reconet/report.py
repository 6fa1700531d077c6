"""Run directories: intermediates, the JSON report, and figure regeneration.

Layout of a run directory::

    report.json          numbers of every stage plus provenance
    run_log.json         rejected epochs/segments and timing (not hashed)
    intermediates/       per-subject matrices, ERP waves, cohort TFDs (CSV)
    figures/             f2..f6 SVG files, each with its CSV
    partial/             whatever was finished when a stage failed

Figures are drawn from ``report.json`` and ``intermediates/`` only, so
``reconet report`` never recomputes anything.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import shutil
import time
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, plotting
from .errors import DataError, ReconetError
from .ingest import _atomic_write, read_edf, subject_files
from .montage import get_montage
from .pipeline import (TFD_CHANNEL, CohortAnalysis, RunConfig, StageError, SubjectResult, analyse_cohort,
                       process_cohort_dirs)

log = logging.getLogger(__name__)

REPORT_VERSION = "1.0"
FIGURES = ("f2", "f3", "f4", "f5", "f6")


# ------------------------------------------------------------------ helpers

def load_schema(name: str) -> dict:
    """``name`` is "report" or "manifest"."""
    text = resources.files("reconet.schemas").joinpath(f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_document(doc: dict, name: str) -> None:
    try:
        jsonschema.validate(doc, load_schema(name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise DataError(f"{name} JSON fails its schema at {where}: {exc.message}") from None


def clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(doc) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")


def content_hash(report: dict) -> str:
    """sha256 of the report without its timestamps and without the hash itself."""
    doc = json.loads(json.dumps(report))
    doc.pop("content_hash", None)
    doc.get("provenance", {}).pop("timestamps", None)
    return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _utc() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


# ----------------------------------------------------------------- inputs

def subject_dirs(inputs) -> list[Path]:
    """Expand inputs: a subject directory holds rest.edf, a cohort directory holds subjects."""
    if not inputs:
        raise DataError("no input directories given")
    out = []
    for raw in inputs:
        p = Path(raw)
        if not p.is_dir():
            raise DataError(f"input {p} is not a directory")
        if (p / "rest.edf").exists():
            out.append(p)
            continue
        found = sorted(d for d in p.iterdir() if d.is_dir() and (d / "rest.edf").exists())
        if not found:
            raise DataError(f"input {p} holds no subject directories (none contains rest.edf)")
        out.extend(found)
    names = [d.name for d in out]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise DataError(f"duplicate subject ids across inputs: {dup}")
    return out


def input_hash(dirs) -> str:
    h = hashlib.sha256()
    for d in dirs:
        rest, runs = subject_files(d)
        for f in [rest] + [p for pair in runs for p in pair]:
            h.update(f"{d.name}/{f.name}\n".encode())
            with open(f, "rb") as fh:
                for block in iter(lambda: fh.read(1 << 20), b""):
                    h.update(block)
    return h.hexdigest()


# ------------------------------------------------------------- intermediates

def _matrix_path(sid, condition, band) -> str:
    return f"matrices/{sid}_{condition}_{band}.csv"


def write_subject_intermediates(root: Path, res: SubjectResult) -> dict:
    files = {}
    for cond, mats in (("rest", res.rest), ("task", res.task)):
        for band, m in mats.items():
            rel = _matrix_path(res.subject_id, cond, band)
            plotting.write_grid_csv(root / rel, m.labels, m.labels, m.values, "label")
            files.setdefault(band, {})[cond] = f"intermediates/{rel}"
    summary = {"id": res.subject_id,
               "p300": {"amplitude_uv": res.p300.amplitude_uv, "latency_ms": res.p300.latency_ms,
                        "electrodes": list(res.p300.electrodes_used)},
               "matrices": files}
    _atomic_write(root / "subjects" / f"{res.subject_id}.json", dumps(clean(summary)))
    return summary


def _write_erp_waves(root: Path, results) -> str | None:
    usable = [r for r in results if r.erp_wave.size]
    if not usable:
        return None
    times = usable[0].erp_times_ms
    grid = np.column_stack([r.erp_wave for r in usable])
    plotting.write_grid_csv(root / "erp_waves.csv", [repr(float(t)) for t in times],
                            [r.subject_id for r in usable], grid, "time_ms")
    return "intermediates/erp_waves.csv"


def _write_tfds(root: Path, results) -> dict | None:
    files = {}
    for cond in ("rest", "task"):
        tfds = [getattr(r, f"tfd_{cond}") for r in results]
        if any(t is None for t in tfds):
            return None
        mag = np.mean([t.magnitude for t in tfds], axis=0)
        ref = tfds[0]
        plotting.write_grid_csv(root / f"tfd_{cond}.csv", [repr(float(f)) for f in ref.freqs_hz],
                                ref.times_ms, mag, "freq_hz\\time_ms")
        files[cond] = f"intermediates/tfd_{cond}.csv"
    return {"channel": TFD_CHANNEL, **files}


def _rejections(results) -> dict:
    out = {}
    for r in results:
        rej = r.rejections
        out[r.subject_id] = {k: rej[k] for k in ("erp_rejected", "rest_rejected", "task_rejected") if k in rej}
    return out


# -------------------------------------------------------------------- report

def build_report(cfg: RunConfig, results: list[SubjectResult], analysis: CohortAnalysis,
                 summaries: list[dict], files: dict, provenance: dict) -> dict:
    montage = get_montage(cfg.montage)
    subjects = []
    for res, summ in zip(results, summaries):
        rej = res.rejections
        subjects.append({
            **summ,
            "erp_epochs": rej.get("erp_epochs", 0), "erp_rejected": len(rej.get("erp_rejected", [])),
            "rest_segments": rej.get("rest_segments", 0), "rest_rejected": len(rej.get("rest_rejected", [])),
            "task_segments": rej.get("task_segments", 0), "task_rejected": len(rej.get("task_rejected", [])),
        })
    comparisons, reconfig = {}, {}
    for band, cmp_ in analysis.comparisons.items():
        comparisons[band] = {"alpha": cmp_.alpha, "correction": cmp_.correction,
                             "n_edges_tested": cmp_.n_edges_tested, "threshold": cmp_.threshold,
                             "edges": cmp_.to_records()}
        rc = analysis.reconfig[band]
        lab = cmp_.labels
        reconfig[band] = {
            "increased_edges": [[lab[i], lab[j]] for i, j in rc.increased_edges],
            "decreased_edges": [[lab[i], lab[j]] for i, j in rc.decreased_edges],
            "mean_increase": None if rc.mean_increase is None else list(rc.mean_increase),
            "mean_decrease": None if rc.mean_decrease is None else list(rc.mean_decrease),
        }
    features = outliers = None
    if analysis.features is not None:
        bands = cfg.band_specs()
        inc = analysis.reconfig[bands[0].name].mean_increase
        dec = analysis.reconfig[bands[-1].name if len(bands) > 1 else bands[0].name].mean_decrease
        kept_groups = dict(zip(analysis.features.subject_ids, analysis.features.group))
        features = {
            "subject_ids": list(analysis.subject_ids),
            "increase_1_8": list(inc), "decrease_8_13": list(dec),
            "p300_amplitude_uv": [r.p300.amplitude_uv for r in results],
            "group": [kept_groups.get(sid, "excluded") for sid in analysis.subject_ids],
        }
        ids = analysis.subject_ids
        outliers = {"excluded_ids": [ids[i] for i in analysis.outliers.excluded_indices],
                    "kept_ids": [ids[i] for i in analysis.outliers.kept_indices],
                    "distances": list(analysis.outliers.distances)}
    report = {
        "report_version": REPORT_VERSION,
        "provenance": provenance,
        "config": cfg.to_dict(),
        "montage": {"name": cfg.montage, "labels": list(montage.labels),
                    "coordinates": montage.planar_coordinates.tolist()},
        "bands": [{"name": b.name, "f_lo_hz": b.f_lo_hz, "f_hi_hz": b.f_hi_hz} for b in cfg.band_specs()],
        "subjects": subjects,
        "comparisons": comparisons,
        "reconfiguration": reconfig,
        "features": features,
        "outliers": outliers,
        "correlations": analysis.correlations,
        "group_tests": analysis.group_tests,
        "classification": analysis.classification,
        "files": files,
        "notes": list(analysis.notes),
    }
    report = clean(report)
    report["content_hash"] = content_hash(report)
    return report


def run_pipeline(cfg: RunConfig, out_dir, jobs: int = 1) -> dict:
    """Full pipeline into ``out_dir``; returns the report dict.

    On a stage error the finished intermediates stay under ``partial/``
    together with ``partial/error.json`` and the error is re-raised.
    """
    started = _utc()
    t0 = time.perf_counter()
    cfg.validate()
    dirs = subject_dirs(cfg.inputs)
    first = read_edf(subject_files(dirs[0])[0])
    cfg.validate(first.sample_rate_hz)
    out = Path(out_dir)
    partial = out / "partial"
    if partial.exists():
        shutil.rmtree(partial)
    partial.mkdir(parents=True)
    results, summaries = [], []
    try:
        for res in process_cohort_dirs(dirs, cfg, jobs):
            results.append(res)
            summaries.append(write_subject_intermediates(partial, res))
        analysis = analyse_cohort(results, cfg)
    except ReconetError as exc:
        info = {"message": str(exc), "type": type(exc).__name__,
                "stage": getattr(exc, "stage", None), "subject_id": getattr(exc, "subject_id", None),
                "completed_subjects": [r.subject_id for r in results]}
        _atomic_write(partial / "error.json", dumps(clean(info)))
        raise
    files = {"erp_waves": _write_erp_waves(partial, results), "tfd": _write_tfds(partial, results)}
    final = out / "intermediates"
    if final.exists():
        shutil.rmtree(final)
    partial.rename(final)
    provenance = {"tool": "reconet", "tool_version": __version__, "config_hash": cfg.config_hash(),
                  "input_hash": input_hash(dirs), "timestamps": {"started_utc": started, "finished_utc": _utc()}}
    report = build_report(cfg, results, analysis, summaries, files, provenance)
    validate_document(report, "report")
    _atomic_write(out / "report.json", dumps(report))
    run_log = {"started_utc": started, "finished_utc": provenance["timestamps"]["finished_utc"],
               "elapsed_s": round(time.perf_counter() - t0, 3), "jobs": jobs,
               "subjects": [d.name for d in dirs], "rejections": clean(_rejections(results)),
               "notes": list(analysis.notes)}
    _atomic_write(out / "run_log.json", dumps(run_log))
    render_figures(out)
    return report


# ------------------------------------------------------------------- figures

def load_report(run_dir) -> dict:
    path = Path(run_dir) / "report.json"
    if not path.exists():
        raise DataError(f"missing intermediate: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"corrupt intermediate {path}: {exc}") from None
    validate_document(doc, "report")
    if doc["content_hash"] != content_hash(doc):
        raise DataError(f"corrupt intermediate {path}: content hash mismatch")
    return doc


def _grid(run_dir: Path, rel: str):
    path = run_dir / rel
    if not path.exists():
        raise DataError(f"missing intermediate: {path}")
    try:
        return plotting.read_grid_csv(path)
    except (ValueError, OSError) as exc:
        raise DataError(f"corrupt intermediate {path}: {exc}") from None


def render_figures(run_dir, figure: str | None = None, band: str | None = None) -> list[Path]:
    """Regenerate figures (all, or one figure / one band) from stored intermediates."""
    run_dir = Path(run_dir)
    if figure is not None and figure not in FIGURES:
        raise DataError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    doc = load_report(run_dir)
    band_names = [b["name"] for b in doc["bands"]]
    if band is not None and band not in band_names:
        raise DataError(f"band {band!r} is not in the report (bands: {', '.join(band_names)})")
    fig_dir = run_dir / "figures"
    wanted = FIGURES if figure is None else (figure,)
    written: list[Path] = []

    if "f2" in wanted and doc["files"]["tfd"] is not None:
        tfd = doc["files"]["tfd"]
        for cond in ("rest", "task"):
            freqs, times, mag = _grid(run_dir, tfd[cond])
            written += plotting.tfd_heatmap(fig_dir / f"f2_tfd_{cond}", [float(t) for t in times],
                                            [float(f) for f in freqs], mag,
                                            f"{cond} TFD at {tfd['channel']}")
    if "f3" in wanted:
        for b in band_names:
            if band is not None and b != band:
                continue
            for rec in doc["subjects"]:  # every referenced matrix must still exist
                for cond in ("rest", "task"):
                    rel = rec["matrices"][b][cond]
                    if not (run_dir / rel).exists():
                        raise DataError(f"missing intermediate: {run_dir / rel}")
            written += plotting.topology(fig_dir / f"f3_topology_{b}", doc["montage"]["labels"],
                                         doc["montage"]["coordinates"], doc["comparisons"][b]["edges"],
                                         f"{b} Hz: task vs rest")
    feats = doc["features"]
    if "f4" in wanted and feats is not None and doc["correlations"]:
        keep = [i for i, g in enumerate(feats["group"]) if g != "excluded"]
        ids = [feats["subject_ids"][i] for i in keep]
        amp = [feats["p300_amplitude_uv"][i] for i in keep]
        for key, col, label in (("increase_vs_amplitude", "increase_1_8", "mean increase, 1-8 Hz"),
                                ("decrease_vs_amplitude", "decrease_8_13", "mean decrease, 8-13 Hz")):
            c = doc["correlations"][key]
            written += plotting.amplitude_scatter(fig_dir / f"f4_{key}", ids, [feats[col][i] for i in keep],
                                                  amp, label, c["r"], c["p"])
    if "f5" in wanted and doc["group_tests"]:
        rows = [{"measure": k, **v} for k, v in sorted(doc["group_tests"].items())]
        written += plotting.group_bars(fig_dir / "f5_groups", rows)
    if "f6" in wanted:
        for kind, res in sorted(doc["classification"].items()):
            written += plotting.feature_scatter(fig_dir / f"f6_features_{kind}", res["predictions"],
                                                f"{kind.upper()} {res['scheme']}: {res['accuracy_percent']:.2f} %")
    return written
