"""Rating preprocessing and inferential statistics.

Standardization onto a common group scale, Tukey-fence winsorization,
Pearson correlation with two-tailed significance, Welch's unequal-variance
t-test and RMSE.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .ingest import RatingTable


class StatsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------

@dataclass
class StandardizedRatings:
    """Ratings mapped from each subject's own scale onto the group scale.

    ``z`` holds the per-subject z-scores, ``table`` the back-transformed
    ratings ``sigma_tot * z + mu_tot``.
    """

    aspect: str
    table: RatingTable
    z: dict[tuple[str, str, str, str], float]
    subject_mean: dict[str, float]
    subject_std: dict[str, float]
    mu_tot: float
    sigma_tot: float


def standardize(table: RatingTable, aspect: str = "liking", ddof: int = 1) -> StandardizedRatings:
    """Per-subject z-transform, then inverse transform onto the pooled scale.

    ``mu_tot`` and ``sigma_tot`` are the mean and standard deviation of all
    raw ratings of the aspect. Missing ratings stay missing.

    Raises
    ------
    StatsError
        If a subject gave the same rating everywhere (zero variance).
    """
    sub = {k: v for k, v in table.values.items() if k[3] == aspect}
    if not sub:
        raise StatsError(f"no ratings for aspect {aspect!r}")
    present = np.array([v for v in sub.values() if not math.isnan(v)])
    if present.size <= ddof:
        raise StatsError("not enough ratings to estimate the group scale")
    mu_tot = float(present.mean())
    sigma_tot = float(present.std(ddof=ddof))

    by_subject: dict[str, list[float]] = {}
    for (subject, *_), v in sub.items():
        if not math.isnan(v):
            by_subject.setdefault(subject, []).append(v)
    mean, std = {}, {}
    for subject, vals in by_subject.items():
        arr = np.asarray(vals)
        if arr.size <= ddof or np.ptp(arr) == 0:
            raise StatsError(f"subject {subject!r} has zero rating variance; z-transform undefined")
        mean[subject] = float(arr.mean())
        std[subject] = float(arr.std(ddof=ddof))

    z, out = {}, {}
    for key, v in sub.items():
        if math.isnan(v):
            z[key] = math.nan
            out[key] = math.nan
            continue
        zi = (v - mean[key[0]]) / std[key[0]]
        z[key] = zi
        out[key] = sigma_tot * zi + mu_tot
    # back-transformed values may leave [1, 10]
    return StandardizedRatings(aspect, RatingTable(out, bounded=False), z, mean, std, mu_tot, sigma_tot)


def standardize_values(groups: dict[str, list[float]], ddof: int = 1) -> dict[str, np.ndarray]:
    """Array version of :func:`standardize` for ``{subject: ratings}``."""
    pooled = np.concatenate([np.asarray(v, dtype=float) for v in groups.values()])
    mu_tot, sigma_tot = pooled.mean(), pooled.std(ddof=ddof)
    out = {}
    for subject, vals in groups.items():
        arr = np.asarray(vals, dtype=float)
        if arr.size <= ddof or np.ptp(arr) == 0:
            raise StatsError(f"subject {subject!r} has zero rating variance; z-transform undefined")
        out[subject] = sigma_tot * (arr - arr.mean()) / arr.std(ddof=ddof) + mu_tot
    return out


# ---------------------------------------------------------------------------
# outliers
# ---------------------------------------------------------------------------

def tukey_fences(values, k: float = 1.5, method: str = "linear") -> tuple[float, float]:
    """Lower and upper Tukey fences ``Q1 - k*IQR`` and ``Q3 + k*IQR``.

    ``method`` is any :func:`numpy.percentile` method; ``"linear"``
    interpolates between order statistics.
    """
    arr = np.asarray(values, dtype=float)
    q1, q3 = np.percentile(arr, [25, 75], method=method)
    iqr = q3 - q1
    return float(q1 - k * iqr), float(q3 + k * iqr)


def winsorize(values, k: float = 1.5, method: str = "linear") -> np.ndarray:
    """Clamp values beyond the Tukey fences to the nearer fence.

    Length and order are preserved.
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise StatsError("winsorize expects a 1-D sequence")
    if arr.size < 4:
        raise StatsError(f"need at least 4 values for reliable quartiles, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise StatsError("winsorize expects finite values")
    lo, hi = tukey_fences(arr, k, method)
    return np.clip(arr, lo, hi)


# ---------------------------------------------------------------------------
# correlation
# ---------------------------------------------------------------------------

def pearson_pvalue(r, n: int):
    """Two-tailed p-value of Pearson's r from the t-distribution, n-2 dof."""
    if n < 3:
        raise StatsError(f"need at least 3 paired observations, got {n}")
    r = np.asarray(r, dtype=float)
    df = n - 2
    with np.errstate(divide="ignore", invalid="ignore"):
        t = r * np.sqrt(df / (1.0 - r * r))
    p = 2.0 * stats.t.sf(np.abs(t), df)
    p = np.where(np.abs(r) >= 1.0, 0.0, p)
    p = np.where(np.isnan(r), np.nan, p)
    return p if p.ndim else float(p)


def critical_r(n: int, alpha: float = 0.05) -> float:
    """Smallest |r| that is significant at ``alpha`` (two-tailed)."""
    df = n - 2
    t = stats.t.isf(alpha / 2.0, df)
    return float(t / math.sqrt(t * t + df))


@dataclass
class CorrelationMatrix:
    """Pearson coefficients with two-tailed p-values and significance flags."""

    row_labels: list[str]
    col_labels: list[str]
    r: np.ndarray
    p: np.ndarray
    n: int
    alpha: float = 0.05
    auto: bool = False
    significant: np.ndarray = field(init=False)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        self.significant = np.where(np.isnan(self.p), False, self.p < self.alpha)

    @classmethod
    def from_coefficients(cls, r, n: int, labels=None, col_labels=None, alpha: float = 0.05,
                          auto: bool | None = None) -> "CorrelationMatrix":
        """Significance of already computed coefficients (e.g. published ones)."""
        r = np.asarray(r, dtype=float)
        labels = list(labels) if labels is not None else [f"x{i}" for i in range(r.shape[0])]
        col_labels = list(col_labels) if col_labels is not None else list(labels)
        if auto is None:
            auto = col_labels == labels and r.shape[0] == r.shape[1]
        return cls(labels, col_labels, r, pearson_pvalue(r, n), n, alpha, auto)

    def significant_pairs(self) -> list[tuple[str, str]]:
        """Significant cells; for auto-correlation only the lower triangle."""
        pairs = []
        for i, a in enumerate(self.row_labels):
            for j, b in enumerate(self.col_labels):
                if self.auto and j >= i:
                    continue
                if self.significant[i, j]:
                    pairs.append((a, b))
        return pairs

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["row", "col", "r", "p", "significant", "n", "alpha"])
            for i, a in enumerate(self.row_labels):
                for j, b in enumerate(self.col_labels):
                    r = self.r[i, j]
                    p = self.p[i, j]
                    writer.writerow([
                        a, b,
                        "" if math.isnan(r) else repr(float(r)),
                        "" if math.isnan(p) else repr(float(p)),
                        int(bool(self.significant[i, j])), self.n, self.alpha,
                    ])


def correlate(A, B=None, alpha: float = 0.05, labels=None, col_labels=None) -> CorrelationMatrix:
    """Pearson correlation of the columns of ``A`` (with ``B`` if given).

    Rows are paired observations. A constant column yields NaN (undefined)
    coefficients for its pairs, never 0.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    auto = B is None
    B = A if auto else np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if A.shape[0] != B.shape[0]:
        raise StatsError(f"row counts differ: {A.shape[0]} vs {B.shape[0]}")
    n = A.shape[0]
    if n < 3:
        raise StatsError(f"need at least 3 paired observations, got {n}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise StatsError("observations must be finite")
    Ac = A - A.mean(axis=0)
    Bc = B - B.mean(axis=0)
    na = np.sqrt((Ac**2).sum(axis=0))
    nb = np.sqrt((Bc**2).sum(axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (Ac.T @ Bc) / np.outer(na, nb)
    r[np.outer(na == 0, np.ones_like(nb, bool)) | np.outer(np.ones_like(na, bool), nb == 0)] = np.nan
    r = np.clip(r, -1.0, 1.0)
    if auto:
        d = np.arange(r.shape[0])
        r[d, d] = np.where(na > 0, 1.0, np.nan)
    labels = list(labels) if labels is not None else [f"a{i}" for i in range(A.shape[1])]
    if auto:
        col_labels = labels
    elif col_labels is None:
        col_labels = [f"b{j}" for j in range(B.shape[1])]
    return CorrelationMatrix(labels, list(col_labels), r, pearson_pvalue(r, n), n, alpha, auto)


# ---------------------------------------------------------------------------
# Welch t-test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p: float
    alpha: float = 0.05

    @property
    def significant(self) -> bool:
        return self.p < self.alpha

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "df", "p", "alpha", "significant"])
            writer.writerow([repr(self.t), repr(self.df), repr(self.p), self.alpha, int(self.significant)])


def welch_ttest(a, b, alpha: float = 0.05) -> TTestResult:
    """Two-tailed t-test for unequal means and unequal variances.

    Degrees of freedom follow Welch-Satterthwaite.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise StatsError("each sample needs at least 2 observations")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    se2 = va + vb
    if se2 == 0.0:
        raise StatsError("both samples have zero variance; t statistic undefined")
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    p = 2.0 * stats.t.sf(abs(t), df)
    return TTestResult(float(t), float(df), float(min(1.0, p)), alpha)


def pairwise_ttests(samples: dict[str, np.ndarray], alpha: float = 0.05) -> dict[tuple[str, str], TTestResult]:
    """Welch tests for every unordered pair of named samples (lower triangle)."""
    names = list(samples)
    out = {}
    for i, a in enumerate(names):
        for b in names[:i]:
            out[(a, b)] = welch_ttest(samples[a], samples[b], alpha)
    return out


# ---------------------------------------------------------------------------
# error measures
# ---------------------------------------------------------------------------

def rmse(orig, pred, mode: str = "mean") -> float:
    """Root of the mean (``mode="mean"``) or plain sum (``"sum"``) of squared errors."""
    orig = np.asarray(orig, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if orig.shape != pred.shape:
        raise StatsError(f"length mismatch: {orig.shape} vs {pred.shape}")
    if orig.size == 0:
        raise StatsError("rmse of empty vectors")
    sq = float(np.sum((orig - pred) ** 2))
    if mode == "mean":
        return math.sqrt(sq / orig.size)
    if mode == "sum":
        return math.sqrt(sq)
    raise StatsError(f"unknown rmse mode {mode!r}")
