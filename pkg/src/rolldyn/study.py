"""Bundled six-variant study data and the construction of its full CV fixture.

Only four CVs per transfer function (V0, Vmax, omega0, beta) were
published for the study variants. The remaining catalog entries are
filled in two steps:

1. ``reconstruct_cvs`` fits a second-order magnitude model
   ``K / sqrt((1 - r^2)^2 + (2 zeta r)^2) * (2 pi f)^n`` per variant and
   input to the nine published gain/peak points and reads the missing
   gains and phases off the fitted model (source ``"reconstructed"``).
2. ``infer_predictors`` replaces the unpublished CVs used by the shipped
   models with the values that best reproduce the published ratings
   inside the models' stated ranges (source ``"inferred"``).

Back-tests of models whose predictors were inferred are therefore not
independent checks. ``build_study_cvs`` regenerates the bundled
``study_cvs.csv`` exactly.
"""

from __future__ import annotations

import csv
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares, lsq_linear

from .charvals import CATALOG, CharacteristicValueSet, CvKey, load_cvs
from .ingest import RatingTable, load_ratings
from .spectra import INPUTS

STUDY_VARIANTS = ("RV", "RD_up", "RD_down", "ST_up", "ST_down", "EF_down")

_FREQ_GRID = np.round(np.arange(0.2, 2.5 + 1e-9, 0.001), 6)
_PRIOR_WEIGHT = 0.1


def data_path(name: str) -> Path:
    """Filesystem path of a bundled data file."""
    return Path(str(resources.files("rolldyn.data").joinpath(name)))


def published_cvs() -> dict[str, CharacteristicValueSet]:
    """The 36 printed CVs per variant (V0, Vmax, omega0, beta of nine TFs)."""
    out = {v: CharacteristicValueSet(v) for v in STUDY_VARIANTS}
    text = data_path("study_published_cvs.csv").read_text(encoding="utf-8")
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    for rec in csv.DictReader(rows):
        key = CvKey(rec["input"], int(rec["deriv"]), rec["kind"])
        for v in STUDY_VARIANTS:
            out[v].set(key, float(rec[v]), "published")
    return out


def study_ratings(aspect: str = "liking") -> RatingTable:
    """Averaged study ratings (subject ``"mean"``) for one aspect."""
    return load_ratings(data_path(f"study_{aspect}.csv"))


def published_correlation(name: str) -> tuple[list[str], list[str], np.ndarray]:
    """Published coefficient matrix ``liking``, ``intensity`` or ``cross``.

    Cells left blank in print are NaN.
    """
    return load_matrix_csv(data_path(f"study_corr_{name}.csv"))


def load_matrix_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    """Labelled matrix CSV: first row column labels, first column row labels."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip() and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    cols = [c.strip() for c in rows[0][1:]]
    labels = []
    r = np.full((len(rows) - 1, len(cols)), np.nan)
    for i, row in enumerate(rows[1:]):
        labels.append(row[0].strip())
        for j, cell in enumerate(row[1 : len(cols) + 1]):
            if cell.strip():
                r[i, j] = float(cell)
    return labels, cols, r


def study_cvs() -> dict[str, CharacteristicValueSet]:
    """The bundled 84-CV fixture of the six study variants, with sources."""
    return load_cvs(data_path("study_cvs.csv"))


# ---------------------------------------------------------------------------
# reconstruction
# ---------------------------------------------------------------------------

def second_order_gain(f, K: float, fn: float, zeta: float, order: int = 0):
    r = np.asarray(f, dtype=float) / fn
    return K / np.sqrt((1 - r**2) ** 2 + (2 * zeta * r) ** 2) * (2 * np.pi * np.asarray(f)) ** order


def second_order_phase(f, fn: float, zeta: float):
    """Phase in degrees of ``1 / (1 - r^2 + 2 j zeta r)``, in (-180, 0]."""
    r = np.asarray(f, dtype=float) / fn
    return -np.degrees(np.arctan2(2 * zeta * r, 1 - r**2))


def _peak_features(p) -> np.ndarray:
    K, fn, zeta = p
    out = []
    for n in range(3):
        g = second_order_gain(_FREQ_GRID, K, fn, zeta, n)
        i = int(np.argmax(g))
        out += [float(second_order_gain(0.3, K, fn, zeta, n)), g[i], _FREQ_GRID[i]]
    return np.array(out)


def fit_second_order(cvs: CharacteristicValueSet, input: str) -> np.ndarray:
    """``(K, fn, zeta)`` matching V0, Vmax and omega0 of all three orders in log space."""
    target = np.array([cvs[CvKey(input, n, k)] for n in range(3) for k in ("V0", "Vmax", "omega0")])
    p0 = [0.8 * target[0], target[5], 0.3]
    sol = least_squares(
        lambda p: np.log(_peak_features(p) / target),
        p0,
        bounds=([1e-6, 0.3, 0.02], [10.0, 3.0, 0.9]),
    )
    return sol.x


def reconstruct_cvs(published) -> dict[str, CharacteristicValueSet]:
    """Complete each variant's catalog from a fitted second-order model."""
    out = {}
    for v, cvs in published.items():
        full = CharacteristicValueSet(v, dict(cvs.entries), list(cvs.flags), dict(cvs.sources))
        params = {u: fit_second_order(cvs, u) for u in INPUTS}
        for key in CATALOG:
            if key in full:
                continue
            K, fn, zeta = params[key.input]
            if key.kind == "V_at":
                val = float(second_order_gain(key.freq, K, fn, zeta, key.order))
            elif key.kind == "phase_at":
                val = float(second_order_phase(key.freq, fn, zeta))
            else:
                raise KeyError(f"cannot reconstruct {key}")
            full.set(key, float(f"{val:.4g}"), "reconstructed")
        out[v] = full
    return out


# ---------------------------------------------------------------------------
# inference of unpublished model predictors
# ---------------------------------------------------------------------------

def _round_cv(key: CvKey, value: float) -> float:
    return round(value, 1) if key.kind == "phase_at" else round(value, 3)


def infer_predictors(cvsets, models, ratings: RatingTable, weight: float = _PRIOR_WEIGHT) -> dict[str, CharacteristicValueSet]:
    """Fill non-published model predictors from the ratings.

    Per variant, solves a bounded least-squares problem: every model
    containing an unknown predictor contributes its rating equation, the
    unknowns are bounded by the model ranges, and a weak prior row
    (``weight`` per range width) pulls each unknown towards its current
    value, or the range midpoint if that lies outside the range.
    """
    unknown: dict[CvKey, list[float]] = {}
    for m in models:
        for t in m.terms:
            if next(iter(cvsets.values())).sources.get(t.key) != "published":
                lo, hi = unknown.get(t.key, [-np.inf, np.inf])
                unknown[t.key] = [max(lo, t.lo), min(hi, t.hi)]
    keys = list(unknown)
    idx = {k: i for i, k in enumerate(keys)}
    out = {}
    for v, cvs in cvsets.items():
        full = CharacteristicValueSet(v, dict(cvs.entries), list(cvs.flags), dict(cvs.sources))
        out[v] = full
        if not keys:
            continue
        A, b = [], []
        for m in models:
            if not any(t.key in idx for t in m.terms):
                continue
            y = ratings.matrix("liking", variants=[v], criteria=[m.criterion])[0, 0]
            if np.isnan(y):
                continue
            row = np.zeros(len(keys))
            rhs = y - m.intercept
            for t in m.terms:
                if t.key in idx:
                    row[idx[t.key]] += t.coef
                    rhs -= t.coef * t.offset
                else:
                    rhs -= t.contribution(cvs[t.key])
            A.append(row)
            b.append(rhs)
        lo = np.array([unknown[k][0] for k in keys])
        hi = np.array([unknown[k][1] for k in keys])
        for k, i in idx.items():
            cur = cvs[k] if k in cvs else np.nan
            prior = cur if lo[i] <= cur <= hi[i] else 0.5 * (lo[i] + hi[i])
            row = np.zeros(len(keys))
            scale = weight / (hi[i] - lo[i])
            row[i] = scale
            A.append(row)
            b.append(scale * prior)
        sol = lsq_linear(np.array(A), np.array(b), bounds=(lo, hi), method="bvls")
        for k, i in idx.items():
            full.set(k, _round_cv(k, float(np.clip(sol.x[i], lo[i], hi[i]))), "inferred")
    return out


def build_study_cvs() -> dict[str, CharacteristicValueSet]:
    """Regenerate the bundled fixture from the published tables."""
    from .predictor import builtin_models

    recon = reconstruct_cvs(published_cvs())
    models = builtin_models(recon)
    return infer_predictors(recon, models, study_ratings("liking"))


def write_study_cvs(path=None) -> Path:
    from .charvals import save_cvs

    path = Path(path) if path is not None else data_path("study_cvs.csv")
    save_cvs(build_study_cvs(), path, with_source=True)
    return path
