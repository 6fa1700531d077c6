"""SVG figures (with their CSV data) for the report stage.

Every figure writer takes plain arrays, writes ``<stem>.csv`` with the
numbers it draws and ``<stem>.svg`` next to it.  Output is byte-stable:
the SVG id salt is fixed and the date metadata is dropped.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .ingest import _atomic_write

SVG_SALT = "reconet"
EDGE_COLORS = {"increased": "#d62728", "decreased": "#1f77b4"}
GROUP_COLORS = {"high": "#d62728", "low": "#1f77b4"}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if np.isfinite(v) else ""
    return str(v)


def write_csv_rows(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    _atomic_write(path, buf.getvalue().encode("utf-8"))


def write_grid_csv(path, row_values, col_values, grid, corner: str) -> None:
    """Matrix CSV: first column holds ``row_values``, header holds ``col_values``."""
    header = [corner] + [_fmt(float(c)) if not isinstance(c, str) else c for c in col_values]
    rows = [[r] + list(g) for r, g in zip(row_values, np.asarray(grid))]
    write_csv_rows(path, header, rows)


def read_grid_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or len(rows[0]) < 2:
        raise ValueError(f"{path} holds no grid")
    header = rows[0][1:]
    names = [r[0] for r in rows[1:]]
    if any(len(r) != len(rows[0]) for r in rows[1:]):
        raise ValueError(f"{path} has ragged rows")
    return names, header, np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def _save(fig: Figure, path) -> None:
    buf = io.BytesIO()
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "path"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    _atomic_write(path, buf.getvalue())


# ------------------------------------------------------------------ figures

def tfd_heatmap(stem, times_ms, freqs_hz, magnitude, title="") -> list[Path]:
    """Time-frequency magnitude heatmap (rows = frequency)."""
    stem = Path(stem)
    times_ms = np.asarray(times_ms, dtype=float)
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    magnitude = np.asarray(magnitude, dtype=float)
    write_grid_csv(stem.with_suffix(".csv"), [_fmt(f) for f in freqs_hz], times_ms, magnitude, "freq_hz\\time_ms")
    fig = Figure(figsize=(6.0, 3.6))
    ax = fig.add_subplot()
    mesh = ax.pcolormesh(times_ms, freqs_hz, magnitude, shading="nearest", cmap="viridis", rasterized=False)
    fig.colorbar(mesh, ax=ax, label="magnitude (µV)")
    ax.set_xlabel("time (ms)")
    ax.set_ylabel("frequency (Hz)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, stem.with_suffix(".svg"))
    return [stem.with_suffix(".csv"), stem.with_suffix(".svg")]


def topology(stem, labels, coords, edges, title="") -> list[Path]:
    """Electrode layout with significant edges: red increased, blue decreased.

    ``edges`` holds dicts with ``labels``, ``direction``, ``mean_difference``
    and ``p_corrected``; edges with direction "none" are skipped.
    """
    stem = Path(stem)
    coords = np.asarray(coords, dtype=float)
    index = {lab: i for i, lab in enumerate(labels)}
    rows = [["electrode", lab, "", x, y, "", "", "", "", ""] for lab, (x, y) in zip(labels, coords)]
    drawn = [e for e in edges if e["direction"] in EDGE_COLORS]
    for e in drawn:
        a, b = e["labels"]
        (xa, ya), (xb, yb) = coords[index[a]], coords[index[b]]
        rows.append(["edge", a, b, xa, ya, xb, yb, e["direction"], e["mean_difference"], e["p_corrected"]])
    write_csv_rows(stem.with_suffix(".csv"),
                   ["kind", "label_a", "label_b", "x_a", "y_a", "x_b", "y_b", "direction",
                    "mean_difference", "p_corrected"], rows)

    fig = Figure(figsize=(4.6, 4.8))
    ax = fig.add_subplot()
    theta = np.linspace(0, 2 * np.pi, 361)
    ax.plot(np.cos(theta), np.sin(theta), color="0.4", lw=1.0)
    ax.plot([-0.09, 0.0, 0.09], [0.995, 1.08, 0.995], color="0.4", lw=1.0)  # nose
    for e in drawn:
        a, b = e["labels"]
        pa, pb = coords[index[a]], coords[index[b]]
        ax.plot([pa[0], pb[0]], [pa[1], pb[1]], color=EDGE_COLORS[e["direction"]], lw=2.0, alpha=0.85)
    ax.scatter(coords[:, 0], coords[:, 1], s=90, color="white", edgecolor="black", zorder=3)
    for lab, (x, y) in zip(labels, coords):
        ax.text(x, y, lab, ha="center", va="center", fontsize=6, zorder=4)
    n_inc = sum(e["direction"] == "increased" for e in drawn)
    n_dec = len(drawn) - n_inc
    ax.plot([], [], color=EDGE_COLORS["increased"], label=f"increased ({n_inc})")
    ax.plot([], [], color=EDGE_COLORS["decreased"], label=f"decreased ({n_dec})")
    ax.legend(loc="lower center", bbox_to_anchor=(0.5, -0.12), ncol=2, frameon=False, fontsize=8)
    ax.set_aspect("equal")
    ax.set_xlim(-1.15, 1.15)
    ax.set_ylim(-1.15, 1.15)
    ax.axis("off")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, stem.with_suffix(".svg"))
    return [stem.with_suffix(".csv"), stem.with_suffix(".svg")]


def regression_line(x, y) -> tuple[float, float]:
    """Least-squares slope and intercept."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - x.mean()
    denom = float(dx @ dx)
    slope = float(dx @ (y - y.mean())) / denom if denom > 0 else 0.0
    return slope, float(y.mean() - slope * x.mean())


def amplitude_scatter(stem, subject_ids, strength, amplitude, xlabel, r=None, p=None, title="") -> list[Path]:
    """P300 amplitude against a coupling strength with the fitted line."""
    stem = Path(stem)
    strength = np.asarray(strength, dtype=float)
    amplitude = np.asarray(amplitude, dtype=float)
    slope, intercept = regression_line(strength, amplitude)
    fitted = slope * strength + intercept
    write_csv_rows(stem.with_suffix(".csv"), ["subject_id", "strength", "p300_amplitude_uv", "fitted_amplitude_uv"],
                   zip(subject_ids, strength, amplitude, fitted))
    fig = Figure(figsize=(4.4, 3.6))
    ax = fig.add_subplot()
    ax.scatter(strength, amplitude, color="black", s=18)
    if strength.size:
        xs = np.array([strength.min(), strength.max()])
        ax.plot(xs, slope * xs + intercept, color="#d62728", lw=1.5)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("P300 amplitude (µV)")
    if r is not None and p is not None:
        ax.text(0.03, 0.95, f"r = {r:.3f}, p = {p:.3g}", transform=ax.transAxes, va="top", fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, stem.with_suffix(".svg"))
    return [stem.with_suffix(".csv"), stem.with_suffix(".svg")]


def group_bars(stem, rows) -> list[Path]:
    """High vs low group means with SD whiskers, one panel per measure.

    ``rows``: dicts with measure, mean_high, sd_high, mean_low, sd_low, p.
    """
    stem = Path(stem)
    out = []
    for r in rows:
        for g in ("high", "low"):
            out.append([r["measure"], g, r[f"mean_{g}"], r[f"sd_{g}"], r.get("p")])
    write_csv_rows(stem.with_suffix(".csv"), ["measure", "group", "mean", "sd", "p"], out)
    fig = Figure(figsize=(3.0 * max(1, len(rows)), 3.4))
    for k, r in enumerate(rows, start=1):
        ax = fig.add_subplot(1, max(1, len(rows)), k)
        means = [r["mean_high"], r["mean_low"]]
        sds = [r["sd_high"], r["sd_low"]]
        ax.bar([0, 1], means, yerr=sds, color=[GROUP_COLORS["high"], GROUP_COLORS["low"]], capsize=4, width=0.6)
        ax.set_xticks([0, 1], ["high", "low"])
        ax.set_title(r["measure"], fontsize=9)
        if r.get("p") is not None:
            ax.text(0.5, 0.97, f"p = {r['p']:.3g}", transform=ax.transAxes, ha="center", va="top", fontsize=8)
        ax.axhline(0.0, color="0.5", lw=0.8)
    fig.tight_layout()
    _save(fig, stem.with_suffix(".svg"))
    return [stem.with_suffix(".csv"), stem.with_suffix(".svg")]


def feature_scatter(stem, predictions, title="") -> list[Path]:
    """Feature plane coloured by true group; misclassified subjects get an X."""
    stem = Path(stem)
    rows = []
    for rec in predictions:
        inc, dec = rec["features"]
        rows.append([rec["id"], inc, dec, rec["group"], rec["predicted"], int(rec["group"] != rec["predicted"])])
    write_csv_rows(stem.with_suffix(".csv"),
                   ["subject_id", "increase_1_8", "decrease_8_13", "group", "predicted", "misclassified"], rows)
    fig = Figure(figsize=(4.4, 3.8))
    ax = fig.add_subplot()
    for g, color in GROUP_COLORS.items():
        pts = np.array([[r[1], r[2]] for r in rows if r[3] == g]).reshape(-1, 2)
        ax.scatter(pts[:, 0], pts[:, 1], color=color, s=28, label=f"{g} P300")
    wrong = np.array([[r[1], r[2]] for r in rows if r[5]]).reshape(-1, 2)
    ax.scatter(wrong[:, 0], wrong[:, 1], marker="x", color="black", s=70, label=f"misclassified ({len(wrong)})")
    ax.set_xlabel("mean increase, 1-8 Hz")
    ax.set_ylabel("mean decrease, 8-13 Hz")
    ax.legend(fontsize=7, frameon=False)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, stem.with_suffix(".svg"))
    return [stem.with_suffix(".csv"), stem.with_suffix(".svg")]
