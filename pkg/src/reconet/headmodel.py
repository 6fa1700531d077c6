"""Three-shell spherical head model and the default REST leadfield.

Potentials are computed from the Legendre expansion of a point source inside
concentric shells. For each expansion order the shell boundary conditions
(continuous potential and normal current, no current leaving the scalp) are
propagated outward as a function affine in the single unknown reflection
coefficient of the innermost sphere, which is then fixed by the outer
boundary condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataError
from .montage import STANDARD_21, cartesian

DEFAULT_RADII = (0.87, 0.92, 1.0)
DEFAULT_CONDUCTIVITY = (1.0, 1.0 / 80.0, 1.0)
N_SOURCE_POSITIONS = 1000
SOURCE_RADIUS = 0.8
N_TERMS = 160


@dataclass(frozen=True)
class Leadfield:
    gain: np.ndarray = field(repr=False)
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        g = np.asarray(self.gain, dtype=float)
        if g.ndim != 2:
            raise DataError("leadfield gain must be a 2-D matrix")
        if not np.all(np.isfinite(g)):
            raise DataError("leadfield contains non-finite entries")
        if not np.any(g):
            raise DataError("leadfield has rank 0")
        if self.labels is not None and len(self.labels) != g.shape[0]:
            raise DataError("leadfield label count does not match its rows")
        object.__setattr__(self, "gain", g)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def source_count(self) -> int:
        return self.gain.shape[1]


def shell_transfer(n_terms=N_TERMS, radii=DEFAULT_RADII, sigma=DEFAULT_CONDUCTIVITY) -> np.ndarray:
    """Scalp value of the layered solution for each order ``n = 1..n_terms``.

    The returned ``t[n-1]`` replaces ``r**-(n+1)`` of the infinite-medium
    expansion when the source sits inside the innermost sphere.
    """
    radii = np.asarray(radii, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if radii.shape != sigma.shape or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must increase and match the conductivities")
    out = np.empty(n_terms)
    for n in range(1, n_terms + 1):
        # coefficients (of r**n, of r**-(n+1)) as affine functions u + A*v
        u = np.array([0.0, 1.0])
        v = np.array([1.0, 0.0])
        for k in range(len(radii) - 1):
            r = radii[k]
            basis = np.array([[r ** n, r ** -(n + 1)],
                              [n * r ** (n - 1), -(n + 1) * r ** -(n + 2)]])
            inner = np.diag([1.0, sigma[k]])
            outer_inv = np.linalg.inv(np.diag([1.0, sigma[k + 1]]) @ basis)
            step = outer_inv @ inner @ basis
            u, v = step @ u, step @ v
        R = radii[-1]
        deriv = np.array([n * R ** (n - 1), -(n + 1) * R ** -(n + 2)])
        a = -(deriv @ u) / (deriv @ v)
        coef = u + a * v
        out[n - 1] = coef[0] * R ** n + coef[1] * R ** -(n + 1)
    return out


def dipole_potentials(electrodes: np.ndarray, positions: np.ndarray,
                      radii=DEFAULT_RADII, sigma=DEFAULT_CONDUCTIVITY,
                      n_terms=N_TERMS) -> np.ndarray:
    """Scalp potential per unit dipole, shape ``(n_electrodes, 3 * n_positions)``.

    Column ``3*j + a`` is the dipole at ``positions[j]`` oriented along axis
    ``a``. Electrodes are projected onto the outer sphere.
    """
    electrodes = np.asarray(electrodes, dtype=float)
    positions = np.asarray(positions, dtype=float)
    e_hat = electrodes / np.linalg.norm(electrodes, axis=1, keepdims=True)
    r0 = np.linalg.norm(positions, axis=1)
    if np.any(r0 >= radii[0]):
        raise ValueError("sources must lie inside the innermost shell")
    s_hat = np.zeros_like(positions)
    nz = r0 > 0
    s_hat[nz] = positions[nz] / r0[nz, None]
    c = np.clip(e_hat @ s_hat.T, -1.0, 1.0)          # (E, S)
    t = shell_transfer(n_terms, radii, sigma)

    # Legendre recurrences for P_n and P_n', accumulated order by order.
    p_prev, p_cur = np.ones_like(c), c.copy()
    dp_prev, dp_cur = np.zeros_like(c), np.ones_like(c)
    rpow = np.ones_like(r0)                            # r0 ** (n - 1)
    radial = np.zeros_like(c)
    tangential = np.zeros_like(c)
    for n in range(1, n_terms + 1):
        w = t[n - 1] * rpow[None, :]
        radial += w * n * p_cur
        tangential += w * dp_cur
        p_next = ((2 * n + 1) * c * p_cur - n * p_prev) / (n + 1)
        dp_next = dp_prev + (2 * n + 1) * p_cur
        p_prev, p_cur = p_cur, p_next
        dp_prev, dp_cur = dp_cur, dp_next
        rpow = rpow * r0
    radial -= tangential * c
    grad = radial[:, :, None] * s_hat[None, :, :] + tangential[:, :, None] * e_hat[:, None, :]
    return grad.reshape(len(electrodes), -1) / (4.0 * np.pi * sigma[0])


def fibonacci_sphere(n: int, radius: float) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = np.pi * (1.0 + 5.0 ** 0.5) * i
    rho = np.sqrt(1.0 - z * z)
    return radius * np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def compute_leadfield(labels, n_positions=N_SOURCE_POSITIONS, source_radius=SOURCE_RADIUS) -> Leadfield:
    """Leadfield of ``3 * n_positions`` dipoles for the given electrode labels."""
    gain = dipole_potentials(cartesian(labels), fibonacci_sphere(n_positions, source_radius))
    return Leadfield(gain, tuple(labels))


def read_leadfield(path, labels=None) -> Leadfield:
    """Read a text leadfield: header line ``channels sources`` then one row per channel."""
    with open(path, encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}: first line must be 'channels sources'")
        n_ch, n_src = int(header[0]), int(header[1])
        gain = np.loadtxt(fh, ndmin=2)
    if gain.shape != (n_ch, n_src):
        raise DataError(f"{path}: header says {n_ch}x{n_src}, body is {gain.shape[0]}x{gain.shape[1]}")
    return Leadfield(gain, labels)


def write_leadfield(path, lf: Leadfield) -> None:
    path = Path(path)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{lf.gain.shape[0]} {lf.gain.shape[1]}\n")
        np.savetxt(fh, lf.gain, fmt="%.10e")


def default_leadfield() -> Leadfield:
    """The shipped 21 x 3000 leadfield in standard-21 montage order."""
    ref = resources.files("reconet.data").joinpath("leadfield_standard21.txt")
    with resources.as_file(ref) as path:
        return read_leadfield(path, STANDARD_21)


@lru_cache(maxsize=16)
def leadfield_for(labels: tuple[str, ...]) -> Leadfield:
    """Shipped matrix for the standard montage, model-computed otherwise."""
    labels = tuple(labels)
    if labels == STANDARD_21:
        return default_leadfield()
    return compute_leadfield(labels)
