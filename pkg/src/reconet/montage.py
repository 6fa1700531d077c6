"""Electrode layouts for the 10-20 / 10-10 systems on an idealised spherical head.

Positions are stored as ``(theta, psi)`` in degrees: ``theta`` is the polar
angle from the vertex (Cz) and ``psi`` the azimuth measured clockwise from the
nose, so right-hemisphere sites have positive ``psi``. The planar coordinates
used for topology plots are the azimuthal-equidistant projection of the same
angles, scaled so that the 72 degree ring (Fpz, T7, Oz, T8) sits on radius 0.8.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

# Midline polar angle of each coronal row (positive = anterior).
_ROW_AP = {
    "Fp": 72.0, "AF": 54.0, "F": 36.0, "FC": 18.0, "C": 0.0,
    "CP": -18.0, "P": -36.0, "PO": -54.0, "O": -72.0,
}
# Azimuth of the row's outermost (7/8) electrode on the 72 degree ring.
_ROW_RING_PSI = {
    "Fp": 18.0, "AF": 36.0, "F": 54.0, "FC": 72.0, "C": 90.0,
    "CP": 108.0, "P": 126.0, "PO": 144.0, "O": 162.0,
}
_ROW_LABEL_OUTER = {"FC": "FT", "C": "T", "CP": "TP"}
_ROW_LABEL = {"Fp": "Fp", "AF": "AF", "F": "F", "FC": "FC", "C": "C",
              "CP": "CP", "P": "P", "PO": "PO", "O": "O"}

#: 21 canonical 10-20 sites used as network nodes.
STANDARD_21 = (
    "Fp1", "Fpz", "Fp2",
    "F7", "F3", "Fz", "F4", "F8",
    "T7", "C3", "Cz", "C4", "T8",
    "P7", "P3", "Pz", "P4", "P8",
    "O1", "Oz", "O2",
)

#: Posterior sites averaged for the P300 amplitude.
P300_ELECTRODES = ("CPz", "CP1", "CP2", "Cz", "Pz")

#: 64 scalp sites of the synthetic amplifier (FCz is the online reference,
#: AFz the ground, so neither is recorded).
SCALP_64 = (
    "Fp1", "Fpz", "Fp2",
    "AF7", "AF3", "AF4", "AF8",
    "F7", "F5", "F3", "F1", "Fz", "F2", "F4", "F6", "F8",
    "FT9", "FT7", "FC5", "FC3", "FC1", "FC2", "FC4", "FC6", "FT8", "FT10",
    "T7", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "T8",
    "TP9", "TP7", "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "TP8", "TP10",
    "P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8",
    "PO7", "PO3", "POz", "PO4", "PO8",
    "O1", "Oz", "O2", "Iz",
)

EOG_LABELS = ("VEOG", "HEOG")


def _polar_to_ap_lat(theta: float, psi: float) -> tuple[float, float]:
    rad = np.deg2rad(psi)
    return theta * np.cos(rad), theta * np.sin(rad)


def _ap_lat_to_polar(ap: float, lat: float) -> tuple[float, float]:
    return float(np.hypot(ap, lat)), float(np.rad2deg(np.arctan2(lat, ap)))


def _build_positions() -> dict[str, tuple[float, float]]:
    pos: dict[str, tuple[float, float]] = {}
    for row, ap in _ROW_AP.items():
        name = _ROW_LABEL[row]
        ring = _polar_to_ap_lat(72.0, _ROW_RING_PSI[row])
        # midline electrode
        pos["Fpz" if row == "Fp" else "Oz" if row == "O" else name + "z"] = (abs(ap), 0.0 if ap >= 0 else 180.0)
        if row in ("Fp", "O"):
            pos[name + "1"] = (72.0, -_ROW_RING_PSI[row])
            pos[name + "2"] = (72.0, _ROW_RING_PSI[row])
            continue
        outer = _ROW_LABEL_OUTER.get(row, name)
        steps = {1: 0.25, 3: 0.5, 5: 0.75, 7: 1.0}
        if row in ("AF", "PO"):
            steps = {3: 0.5, 7: 1.0}
        for num, frac in steps.items():
            a = ap + frac * (ring[0] - ap)
            lat = frac * ring[1]
            theta, psi = _ap_lat_to_polar(a, lat)
            left = (outer if num == 7 else name) + str(num)
            right = (outer if num == 7 else name) + str(num + 1)
            pos[left] = (theta, -psi)
            pos[right] = (theta, psi)
    # inferior ring at 90 degrees
    pos["FT9"] = (90.0, -72.0)
    pos["FT10"] = (90.0, 72.0)
    pos["TP9"] = (90.0, -108.0)
    pos["TP10"] = (90.0, 108.0)
    pos["Iz"] = (90.0, 180.0)
    return pos


@lru_cache(maxsize=None)
def electrode_positions() -> dict[str, tuple[float, float]]:
    """Return ``{label: (theta_deg, psi_deg)}`` for every known scalp site."""
    text = resources.files("reconet.data").joinpath("electrodes.json").read_text()
    return {k: (float(v[0]), float(v[1])) for k, v in json.loads(text).items()}


def cartesian(labels, radius: float = 1.0) -> np.ndarray:
    """Unit-sphere (x right, y anterior, z up) coordinates, shape ``(n, 3)``."""
    table = electrode_positions()
    out = np.empty((len(labels), 3))
    for i, lab in enumerate(labels):
        theta, psi = np.deg2rad(table[lab])
        out[i] = (np.sin(theta) * np.sin(psi), np.sin(theta) * np.cos(psi), np.cos(theta))
    return radius * out


def planar(labels) -> np.ndarray:
    """2-D plotting coordinates (x right, y anterior), shape ``(n, 2)``."""
    table = electrode_positions()
    out = np.empty((len(labels), 2))
    for i, lab in enumerate(labels):
        theta, psi = table[lab]
        r = 0.8 * theta / 72.0
        out[i] = (r * np.sin(np.deg2rad(psi)), r * np.cos(np.deg2rad(psi)))
    return out


@dataclass(frozen=True)
class Montage:
    """Ordered selection of 21 scalp sites with plotting coordinates."""

    selected_labels: tuple[str, ...]
    planar_coordinates: np.ndarray = field(compare=False, repr=False)

    def __post_init__(self):
        labels = tuple(self.selected_labels)
        if len(labels) != 21:
            raise ValueError(f"montage needs exactly 21 labels, got {len(labels)}")
        if len(set(labels)) != 21:
            raise ValueError("montage labels must be unique")
        coords = np.asarray(self.planar_coordinates, dtype=float)
        if coords.shape != (21, 2) or not np.all(np.isfinite(coords)):
            raise ValueError("planar_coordinates must be a finite (21, 2) array")
        object.__setattr__(self, "selected_labels", labels)
        object.__setattr__(self, "planar_coordinates", coords)

    @classmethod
    def from_labels(cls, labels) -> "Montage":
        labels = tuple(labels)
        known = electrode_positions()
        unknown = [lab for lab in labels if lab not in known]
        if unknown:
            raise ValueError(f"labels outside the 10-20/10-10 set: {unknown}")
        return cls(labels, planar(labels))

    @property
    def labels(self) -> tuple[str, ...]:
        return self.selected_labels


def standard_montage() -> Montage:
    return Montage.from_labels(STANDARD_21)


MONTAGES = {"standard_21": standard_montage}


def get_montage(name: str) -> Montage:
    try:
        return MONTAGES[name]()
    except KeyError:
        raise ValueError(f"unknown montage {name!r}; choose from {sorted(MONTAGES)}") from None
