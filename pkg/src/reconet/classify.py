"""High/low P300 group formation and linear classifiers (LDA, soft-margin SVM)."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, NumericalError

GROUPS = ("high", "low", "unassigned")


@dataclass(frozen=True)
class FeatureTable:
    subject_ids: tuple[str, ...]
    increase_1_8: np.ndarray
    decrease_8_13: np.ndarray
    p300_amplitude_uv: np.ndarray
    group: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.subject_ids)
        for name in ("increase_1_8", "decrease_8_13", "p300_amplitude_uv"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if arr.size != n:
                raise DataError(f"{name} has {arr.size} values for {n} subjects")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        group = tuple(self.group) or ("unassigned",) * n
        if len(group) != n or set(group) - set(GROUPS):
            raise DataError("invalid group assignment")
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        object.__setattr__(self, "group", group)

    def __len__(self):
        return len(self.subject_ids)

    @property
    def features(self) -> np.ndarray:
        return np.column_stack([self.increase_1_8, self.decrease_8_13])

    def subset(self, idx) -> "FeatureTable":
        idx = list(idx)
        return FeatureTable(tuple(self.subject_ids[i] for i in idx), self.increase_1_8[idx],
                            self.decrease_8_13[idx], self.p300_amplitude_uv[idx],
                            tuple(self.group[i] for i in idx))

    def assigned(self) -> tuple[np.ndarray, np.ndarray, list[int]]:
        """Features, labels (1 = high) and table rows of grouped subjects."""
        rows = [i for i, g in enumerate(self.group) if g != "unassigned"]
        labels = np.array([1 if self.group[i] == "high" else 0 for i in rows])
        return self.features[rows], labels, rows


def form_groups(table: FeatureTable, k: int = 9) -> FeatureTable:
    """Top-k amplitudes -> high, bottom-k -> low; ties go to the lower row index."""
    n = len(table)
    if k < 1 or n < 2 * k:
        raise DataError(f"need at least {2 * k} subjects to form two groups of {k}, have {n}")
    amp = table.p300_amplitude_uv
    high = sorted(range(n), key=lambda i: (-amp[i], i))[:k]
    rest = [i for i in range(n) if i not in set(high)]
    low = sorted(rest, key=lambda i: (amp[i], i))[:k]
    group = ["unassigned"] * n
    for i in high:
        group[i] = "high"
    for i in low:
        group[i] = "low"
    return replace(table, group=tuple(group))


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float
    kind: str
    info: dict = field(default_factory=dict, compare=False)

    def decision(self, x) -> np.ndarray:
        return np.atleast_2d(np.asarray(x, dtype=float)) @ self.weights + self.bias

    def predict(self, x) -> np.ndarray:
        return (self.decision(x) > 0).astype(int)


def _check(x, y):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y).reshape(-1)
    if x.shape[0] != y.size:
        raise DataError("features and labels disagree in length")
    classes = set(np.unique(y).tolist())
    if not classes <= {0, 1}:
        raise DataError("labels must be 0/1")
    if classes != {0, 1}:
        raise DataError("both classes must be present to train")
    return x, y.astype(int)


def lda_train(x, y) -> LinearModel:
    """Fisher LDA with pooled covariance and equal priors."""
    x, y = _check(x, y)
    x0, x1 = x[y == 0], x[y == 1]
    mu0, mu1 = x0.mean(axis=0), x1.mean(axis=0)
    d = x.shape[1]
    dof = max(1, x.shape[0] - 2)
    scatter = (x0 - mu0).T @ (x0 - mu0) + (x1 - mu1).T @ (x1 - mu1)
    cov = scatter / dof
    trace = float(np.trace(cov))
    cov = cov + np.eye(d) * (1e-10 * trace / d if trace > 0 else 1e-12)
    w = np.linalg.solve(cov, mu1 - mu0)
    b = -float(w @ (mu0 + mu1)) / 2.0
    return LinearModel(w, b, "lda")


def svm_objectives(x, y, w, b, alpha, c) -> tuple[float, float]:
    """(primal, dual) objectives of the soft-margin linear SVM."""
    s = np.where(y == 1, 1.0, -1.0)
    hinge = np.maximum(0.0, 1.0 - s * (x @ w + b))
    primal = 0.5 * float(w @ w) + c * float(hinge.sum())
    v = (alpha * s) @ x
    dual = float(alpha.sum()) - 0.5 * float(v @ v)
    return primal, dual


def svm_train(x, y, c: float = 1.0, gap_tol: float = 1e-6, max_iter: int = 200000) -> LinearModel:
    """Linear soft-margin SVM solved in the dual by SMO (maximal violating pair).

    The KKT tolerance is tightened until the primal-dual gap is below
    ``gap_tol``.
    """
    x, y = _check(x, y)
    n = x.shape[0]
    s = np.where(y == 1, 1.0, -1.0)
    kernel = x @ x.T
    q = (s[:, None] * s[None, :]) * kernel
    qd = np.diag(q).copy()
    alpha = np.zeros(n)
    grad = -np.ones(n)
    eps = 1e-3
    iters = 0
    while True:
        while iters < max_iter:
            up = ((alpha < c) & (s > 0)) | ((alpha > 0) & (s < 0))
            low = ((alpha < c) & (s < 0)) | ((alpha > 0) & (s > 0))
            score = -s * grad
            if not up.any() or not low.any():
                break
            i = int(np.flatnonzero(up)[np.argmax(score[up])])
            j = int(np.flatnonzero(low)[np.argmin(score[low])])
            if score[i] - score[j] < eps:
                break
            iters += 1
            ai, aj = alpha[i], alpha[j]
            if s[i] != s[j]:
                quad = max(qd[i] + qd[j] + 2.0 * q[i, j], 1e-12)
                delta = (-grad[i] - grad[j]) / quad
                diff = ai - aj
                alpha[i] += delta
                alpha[j] += delta
                if diff > 0:
                    if alpha[j] < 0:
                        alpha[j] = 0.0
                        alpha[i] = diff
                elif alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
                if diff > 0:
                    if alpha[i] > c:
                        alpha[i] = c
                        alpha[j] = c - diff
                elif alpha[j] > c:
                    alpha[j] = c
                    alpha[i] = c + diff
            else:
                quad = max(qd[i] + qd[j] - 2.0 * q[i, j], 1e-12)
                delta = (grad[i] - grad[j]) / quad
                total = ai + aj
                alpha[i] -= delta
                alpha[j] += delta
                if total > c:
                    if alpha[i] > c:
                        alpha[i] = c
                        alpha[j] = total - c
                    if alpha[j] > c:
                        alpha[j] = c
                        alpha[i] = total - c
                else:
                    if alpha[j] < 0:
                        alpha[j] = 0.0
                        alpha[i] = total
                    if alpha[i] < 0:
                        alpha[i] = 0.0
                        alpha[j] = total
            grad += q[:, i] * (alpha[i] - ai) + q[:, j] * (alpha[j] - aj)
        w = (alpha * s) @ x
        b = _svm_bias(alpha, s, grad, c)
        primal, dual = svm_objectives(x, y, w, b, alpha, c)
        gap = primal - dual
        if gap < gap_tol:
            polished = _svm_polish(x, s, kernel, alpha, c)
            if polished is not None:
                alpha, w, b = polished
                primal, dual = svm_objectives(x, y, w, b, alpha, c)
                gap = max(primal - dual, 0.0)
            return LinearModel(w, b, "svm", {"gap": gap, "iterations": iters, "alpha": alpha.copy(),
                                             "polished": polished is not None})
        if eps < 1e-14 or iters >= max_iter:
            raise NumericalError(f"SVM did not reach duality gap {gap_tol:g} (gap {gap:.3e})")
        eps /= 10.0


def _svm_polish(x, s, kernel, alpha, c, tol=1e-8):
    """Solve the KKT equations on the active set found by SMO.

    Margin vectors satisfy ``s_i f(x_i) = 1`` exactly and bounded ones keep
    ``alpha = C``; the least-squares solve is unique in ``w`` and ``b`` even
    when duplicated points make ``alpha`` itself non-unique. Returns None when
    the polished point violates the KKT conditions.
    """
    free = np.flatnonzero((alpha > tol * c) & (alpha < c - tol * c))
    if free.size == 0:
        return None
    bound = alpha >= c - tol * c
    fixed = c * (kernel[:, bound] @ s[bound]) if bound.any() else np.zeros(len(s))
    m = free.size
    a = np.zeros((m + 1, m + 1))
    rhs = np.empty(m + 1)
    a[:m, :m] = (s[free, None] * s[None, free]) * kernel[np.ix_(free, free)]
    a[:m, m] = s[free]
    rhs[:m] = 1.0 - s[free] * fixed[free]
    a[m, :m] = s[free]
    rhs[m] = -c * float(s[bound].sum())
    z = np.linalg.lstsq(a, rhs, rcond=None)[0]
    if np.any(z[:m] < -tol * c) or np.any(z[:m] > c + tol * c):
        return None
    new = np.where(bound, c, 0.0)
    new[free] = np.clip(z[:m], 0.0, c)
    w = (new * s) @ x
    b = float(z[m])
    margin = s * (x @ w + b)
    zero = new == 0.0
    slack = 1e-9 * max(1.0, float(np.abs(margin).max()))
    if np.any(margin[zero] < 1.0 - slack) or np.any(margin[bound] > 1.0 + slack):
        return None
    return new, w, b


def _svm_bias(alpha, s, grad, c) -> float:
    score = -s * grad  # equals s * (1 - s * f_no_bias) style KKT quantity
    free = (alpha > 0) & (alpha < c)
    if free.any():
        return float(np.mean(score[free]))
    up = ((alpha < c) & (s > 0)) | ((alpha > 0) & (s < 0))
    low = ((alpha < c) & (s < 0)) | ((alpha > 0) & (s > 0))
    hi = score[up].max() if up.any() else score.max()
    lo = score[low].min() if low.any() else score.min()
    return float((hi + lo) / 2.0)


def standardize(train, test):
    mu = train.mean(axis=0)
    sd = train.std(axis=0, ddof=1)
    sd = np.where(sd > 0, sd, 1.0)
    return (train - mu) / sd, (test - mu) / sd


def _trainer(kind):
    if kind == "lda":
        return lda_train
    if kind == "svm":
        return svm_train
    raise DataError(f"unknown classifier {kind!r}")


def accuracy(predicted, truth) -> float:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape or predicted.size == 0:
        raise DataError("prediction and truth vectors must be non-empty and aligned")
    return float(np.mean(predicted == truth))


def accuracy_percent(predicted, truth) -> float:
    """Accuracy in percent, rounded to two decimals."""
    return round(100.0 * accuracy(predicted, truth), 2)


@dataclass(frozen=True)
class CvResult:
    kind: str
    accuracy: float
    subject_ids: tuple[str, ...]
    truth: np.ndarray
    predicted: np.ndarray
    scheme: str

    def records(self, table: FeatureTable) -> list[dict]:
        out = []
        for sid, t, p in zip(self.subject_ids, self.truth, self.predicted):
            i = table.subject_ids.index(sid)
            out.append({
                "id": sid,
                "group": "high" if t == 1 else "low",
                "predicted": "high" if p == 1 else "low",
                "features": [float(table.increase_1_8[i]), float(table.decrease_8_13[i])],
            })
        return out


def loocv_accuracy(table: FeatureTable, kind: str = "lda", standardize_features: bool = False,
                   resubstitution: bool = False) -> CvResult:
    """Leave-one-out accuracy over grouped subjects (or train = test accuracy)."""
    x, y, rows = table.assigned()
    if min(np.count_nonzero(y == 1), np.count_nonzero(y == 0)) < 2:
        raise DataError("need at least two subjects in each group")
    train = _trainer(kind)
    pred = np.empty_like(y)
    if resubstitution:
        xt, xs = standardize(x, x) if standardize_features else (x, x)
        pred[:] = train(xt, y).predict(xs)
    else:
        for k in range(len(y)):
            mask = np.arange(len(y)) != k
            xt, xs = x[mask], x[k:k + 1]
            if standardize_features:
                xt, xs = standardize(xt, xs)
            pred[k] = train(xt, y[mask]).predict(xs)[0]
    ids = tuple(table.subject_ids[i] for i in rows)
    return CvResult(kind, accuracy(pred, y), ids, y, pred,
                    "resubstitution" if resubstitution else "loocv")
