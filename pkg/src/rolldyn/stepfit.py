"""Ordinary least squares and stepwise selection on adjusted R^2."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np


class RegressionError(ValueError):
    pass


_TIE_TOL = 1e-12  # gains closer than this count as ties


def adjusted_r2(r2: float, n: int, p: int) -> float:
    """``1 - (1 - r2) (n - 1) / (n - p - 1)`` for ``p`` predictors."""
    if n <= p + 1:
        raise RegressionError(f"adjusted R^2 needs n > p + 1 (n={n}, p={p})")
    return 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)


@dataclass
class RegressionResult:
    intercept: float
    terms: list[tuple[Hashable, float]]
    r2: float
    r2_adj: float
    n: int
    residuals: np.ndarray
    steps: list[dict] = field(default_factory=list)
    excluded: list[Hashable] = field(default_factory=list)

    @property
    def keys(self) -> list[Hashable]:
        return [k for k, _ in self.terms]

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([c for _, c in self.terms], dtype=float)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] == 0:
            return np.full(X.shape[0], self.intercept)
        return self.intercept + X @ self.coefficients


def fit_ols(X, y, keys: Sequence[Hashable] | None = None) -> RegressionResult:
    """Least-squares fit of ``y`` on the columns of ``X`` plus an intercept.

    A constant response gives a zero-coefficient model with ``r2 = 0``.

    Raises
    ------
    RegressionError
        If ``n <= p + 1`` or the design matrix is rank deficient.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.size == 0:
        X = np.empty((y.size, 0))
    n, p = X.shape
    if y.shape != (n,):
        raise RegressionError(f"y has shape {y.shape}, expected ({n},)")
    if n <= p + 1:
        raise RegressionError(f"need n > p + 1 observations (n={n}, p={p})")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise RegressionError("non-finite values in X or y")
    keys = list(keys) if keys is not None else list(range(p))
    design = np.column_stack([np.ones(n), X])
    # rank test on the centred columns so scale differences do not matter
    if p:
        Xc = X - X.mean(axis=0)
        norms = np.linalg.norm(Xc, axis=0)
        if np.any(norms == 0) or np.linalg.matrix_rank(Xc / norms, tol=1e-10) < p:
            raise RegressionError("rank-deficient design matrix")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ coef
    resid = y - fitted
    sst = float(np.sum((y - y.mean()) ** 2))
    if p == 0:
        # intercept-only model: exact mean, no explained variance
        coef = np.array([y.mean()])
        resid = y - coef[0]
        r2 = 0.0
    elif sst == 0.0:
        coef = np.zeros(p + 1)
        coef[0] = y.mean()
        resid = y - coef[0]
        r2 = 0.0
    else:
        r2 = 1.0 - float(np.sum(resid**2)) / sst
    return RegressionResult(
        intercept=float(coef[0]),
        terms=[(k, float(c)) for k, c in zip(keys, coef[1:])],
        r2=r2,
        r2_adj=adjusted_r2(r2, n, p),
        n=n,
        residuals=resid,
    )


@dataclass(frozen=True)
class StepwiseConfig:
    min_gain: float = 0.05
    target: float = 0.90
    max_terms: int = 3
    candidate_keys: tuple | None = None

    def __post_init__(self):
        if not 0.0 < self.min_gain < 1.0:
            raise RegressionError(f"min_gain must lie in (0, 1), got {self.min_gain}")
        if not 0.0 < self.target <= 1.0:
            raise RegressionError(f"target must lie in (0, 1], got {self.target}")
        if self.max_terms < 1:
            raise RegressionError(f"max_terms must be >= 1, got {self.max_terms}")


def _try_fit(X, y, cols, keys):
    try:
        return fit_ols(X[:, cols], y, [keys[c] for c in cols])
    except RegressionError:
        return None


def stepwise(candidates, y, cfg: StepwiseConfig | None = None, keys: Sequence[Hashable] | None = None) -> RegressionResult:
    """Greedy forward selection with removal steps on adjusted R^2.

    ``candidates`` is an ``(n, m)`` array (column order = catalog order)
    or a mapping ``key -> column``. Each step adds the candidate with the
    largest R^2_adj gain if that gain is at least ``cfg.min_gain``, then
    drops terms while a drop strictly raises R^2_adj. Selection stops at
    ``cfg.target``, at ``cfg.max_terms`` or when no addition qualifies.
    Ties go to the earlier candidate.

    Zero-variance candidates are skipped and listed in ``excluded``.
    """
    cfg = cfg or StepwiseConfig()
    if isinstance(candidates, dict):
        keys = list(candidates)
        X = np.column_stack([np.asarray(candidates[k], dtype=float) for k in keys]) if keys else None
    else:
        X = np.asarray(candidates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        keys = list(keys) if keys is not None else list(range(X.shape[1]))
    if X is None or X.shape[1] == 0:
        raise RegressionError("empty candidate set")
    y = np.asarray(y, dtype=float)
    n = y.size
    if X.shape[0] != n:
        raise RegressionError(f"candidates have {X.shape[0]} rows, y has {n}")
    if n < 4:
        raise RegressionError(f"stepwise regression needs n >= 4, got {n}")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise RegressionError("non-finite candidate or response values")

    allowed = set(cfg.candidate_keys) if cfg.candidate_keys is not None else None
    pool = []
    excluded = []
    for j, k in enumerate(keys):
        if allowed is not None and k not in allowed:
            continue
        if np.ptp(X[:, j]) == 0:
            excluded.append(k)
            continue
        pool.append(j)

    # every accepted step strictly raises R^2_adj, so no subset recurs
    current: list[int] = []
    model = fit_ols(np.empty((n, 0)), y)
    steps: list[dict] = []
    max_terms = min(cfg.max_terms, n - 2)

    while model.r2_adj < cfg.target and len(current) < max_terms:
        best = None
        for j in pool:
            if j in current:
                continue
            fit = _try_fit(X, y, current + [j], keys)
            if fit is None:
                continue
            gain = fit.r2_adj - model.r2_adj
            if best is None or gain > best[0] + _TIE_TOL:
                best = (gain, j, fit)
        if best is None or best[0] < cfg.min_gain:
            break
        gain, j, model = best
        current.append(j)
        steps.append({"action": "add", "key": keys[j], "r2_adj": model.r2_adj, "gain": gain})

        while len(current) > 1:
            drop = None
            for j in current:
                fit = _try_fit(X, y, [c for c in current if c != j], keys)
                if fit is not None and fit.r2_adj > model.r2_adj and (drop is None or fit.r2_adj > drop[0].r2_adj):
                    drop = (fit, j)
            if drop is None:
                break
            fit, j = drop
            steps.append({"action": "remove", "key": keys[j], "r2_adj": fit.r2_adj, "gain": fit.r2_adj - model.r2_adj})
            current.remove(j)
            model = fit

    model.steps = steps
    model.excluded = excluded
    return model


def design_matrix(cvsets, variants, keys):
    """``(len(variants), len(keys))`` matrix of CV values."""
    return np.array([[cvsets[v][k] for k in keys] for v in variants], dtype=float)
