"""Paired/independent t-tests, Pearson correlation, Bonferroni and Mahalanobis outliers.

Student-t tail probabilities come from the regularized incomplete beta
function, evaluated with a modified-Lentz continued fraction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError

log = logging.getLogger(__name__)

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAX_ITER = 10000


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    dof: int

    __test__ = False  # keep pytest from collecting this as a test class


@dataclass(frozen=True)
class OutlierReport:
    kept_indices: tuple[int, ...]
    excluded_indices: tuple[int, ...]
    distances: np.ndarray


def _beta_cf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _CF_TINY else _CF_TINY)
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _CF_TINY else _CF_TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _CF_TINY else _CF_TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _CF_TINY else _CF_TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _CF_TINY else _CF_TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise NumericalError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc needs a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, dof: float) -> float:
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    p = betainc(dof / 2.0, 0.5, dof / (dof + t * t))
    return min(1.0, max(0.0, p))


def paired_t_test(a, b) -> TestResult:
    """Two-sided paired Student t-test on ``a - b``.

    A zero-variance difference gives p = 1 when its mean is 0 and p = 0
    otherwise (t is then reported as 0 or +/-inf).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError("paired_t_test needs two 1-D samples of equal length")
    n = a.size
    if n < 2:
        raise DataError("paired_t_test needs at least two pairs")
    d = a - b
    scale = float(max(np.max(np.abs(a)), np.max(np.abs(b))))
    return _one_sample(d, n, scale)


# differences below this fraction of the data magnitude are rounding noise
_DEGENERATE_RTOL = 1e-12


def _one_sample(d: np.ndarray, n: int, scale: float = 0.0) -> TestResult:
    mean = float(np.mean(d))
    sd = float(np.std(d, ddof=1))
    tol = _DEGENERATE_RTOL * scale
    if sd <= tol:
        if abs(mean) <= tol:
            return TestResult(0.0, 1.0, n - 1)
        log.debug("zero-variance difference with nonzero mean; p set to 0")
        return TestResult(math.copysign(math.inf, mean), 0.0, n - 1)
    t = mean / (sd / math.sqrt(n))
    return TestResult(t, t_two_sided_p(abs(t), n - 1), n - 1)


def independent_t_test(a, b) -> TestResult:
    """Two-sided Student t-test with pooled variance (groups ``a`` vs ``b``)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise DataError("independent_t_test needs at least two values per group")
    dof = na + nb - 2
    pooled = (np.sum((a - a.mean()) ** 2) + np.sum((b - b.mean()) ** 2)) / dof
    diff = float(a.mean() - b.mean())
    if pooled == 0.0:
        if diff == 0.0:
            return TestResult(0.0, 1.0, dof)
        return TestResult(math.copysign(math.inf, diff), 0.0, dof)
    t = diff / math.sqrt(pooled * (1.0 / na + 1.0 / nb))
    return TestResult(t, t_two_sided_p(abs(t), dof), dof)


def pearson(x, y) -> TestResult:
    """Pearson r (as ``statistic``) with a two-sided t-based p-value."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("pearson needs two 1-D samples of equal length")
    n = x.size
    if n < 3:
        raise DataError("pearson needs at least three pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.sum(dx * dx))
    syy = float(np.sum(dy * dy))
    if sxx == 0.0 or syy == 0.0:
        raise DataError("pearson is undefined for a constant input")
    r = float(np.sum(dx * dy)) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return TestResult(r, 0.0, n - 2)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return TestResult(r, t_two_sided_p(abs(t), n - 2), n - 2)


def bonferroni(p_values, alpha: float = 0.05):
    """Return ``(mask, threshold)`` with ``mask = p < alpha / m``."""
    p = np.asarray(p_values, dtype=float).reshape(-1)
    if not 0.0 < alpha < 1.0:
        raise DataError("alpha must lie in (0, 1)")
    m = max(1, p.size)
    threshold = alpha / m
    return p < threshold, threshold


def bonferroni_adjust(p_values) -> np.ndarray:
    p = np.asarray(p_values, dtype=float)
    return np.minimum(1.0, p * max(1, p.size))


def mahalanobis_distances(points) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim != 2:
        raise DataError("points must be an (n, d) matrix")
    n, d = x.shape
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    trace = float(np.trace(cov))
    if not trace > 0:
        raise NumericalError("covariance is singular (all points identical)")
    cov = cov + np.eye(d) * (1e-10 * trace / d)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NumericalError("covariance is singular after regularization") from None
    z = np.linalg.solve(chol, centered.T)
    return np.sqrt(np.sum(z * z, axis=0))


def n_excluded(n: int, fraction: float) -> int:
    # the guard keeps e.g. 0.1 * 30 = 3.0000000000000004 from rounding up to 4
    return int(math.ceil(fraction * n - 1e-9))


def mahalanobis_outliers(points, exclude_fraction: float = 0.10) -> OutlierReport:
    """Drop the ``ceil(fraction * n)`` points farthest (Mahalanobis) from the mean."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n <= d + 1:
        raise DataError(f"need more than d + 1 = {d + 1} points for a covariance, got {n}")
    if not 0.0 <= exclude_fraction < 1.0:
        raise DataError("exclude_fraction must lie in [0, 1)")
    dist = mahalanobis_distances(x)
    k = n_excluded(n, exclude_fraction)
    order = np.argsort(-dist, kind="stable")
    excluded = tuple(sorted(int(i) for i in order[:k]))
    kept = tuple(sorted(int(i) for i in order[k:]))
    return OutlierReport(kept, excluded, dist)
