"""Rating prediction models: binding, prediction, back-testing and file I/O."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from decimal import Decimal
from importlib import resources
from pathlib import Path

import numpy as np

from .charvals import CATALOG, CharacteristicValueSet, CvKey
from .ingest import CRITERIA, RatingTable
from .ratestats import rmse

MODEL_FORMAT = "rolldyn-models"
MODEL_VERSION = 1
PREDICTION_FORMAT = "rolldyn-predictions"
BINDING_METHODS = ("range", "nearest", "nominal")


class PredictionError(ValueError):
    pass


class BindingError(PredictionError):
    pass


@dataclass(frozen=True)
class ModelTerm:
    """One predictor: contributes ``coef * (cv[key] + offset)``.

    ``lo``/``hi`` bound the CV values the model was fitted on. ``offset``
    shifts the CV before it enters the model (e.g. a phase branch).
    """

    coef: float
    key: CvKey
    lo: float
    hi: float
    offset: float = 0.0
    label: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.coef) and math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise PredictionError(f"non-finite coefficient or range for {self.key}")
        if self.lo > self.hi:
            raise PredictionError(f"empty range [{self.lo}, {self.hi}] for {self.key}")
        if self.key not in _CATALOG_SET:
            raise PredictionError(f"{self.key} is not a catalog CV")

    def contribution(self, value: float) -> float:
        return self.coef * (value + self.offset)

    def in_range(self, value: float) -> bool:
        return self.lo <= value <= self.hi


_CATALOG_SET = frozenset(CATALOG)


@dataclass(frozen=True)
class PredictionModel:
    criterion: str
    intercept: float
    terms: tuple[ModelTerm, ...]
    r2_adj: float | None = None

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise PredictionError(f"unknown criterion {self.criterion!r}")
        if not math.isfinite(self.intercept):
            raise PredictionError("intercept must be finite")
        if self.r2_adj is not None and not (0.0 <= self.r2_adj <= 1.0):
            raise PredictionError(f"r2_adj must lie in [0, 1], got {self.r2_adj}")
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def keys(self) -> list[CvKey]:
        return [t.key for t in self.terms]

    def __str__(self) -> str:
        s = f"{self.criterion} = {self.intercept:g}"
        for t in self.terms:
            arg = str(t.key) if t.offset == 0 else f"({t.key} {t.offset:+g})"
            s += f" {'-' if t.coef < 0 else '+'} {abs(t.coef):g}*{arg}"
        return s


@dataclass
class PredictionReport:
    criterion: str
    variant_id: str
    value: float
    in_range: list[bool]
    warnings: list[str] = field(default_factory=list)

    def clamped(self, lo: float = 1.0, hi: float = 10.0) -> float:
        return float(min(max(self.value, lo), hi))


def predict(model: PredictionModel, cvs: CharacteristicValueSet) -> PredictionReport:
    """Unclamped prediction with one extrapolation warning per out-of-range term."""
    value = model.intercept
    flags = []
    warnings = []
    for t in model.terms:
        if t.key not in cvs:
            raise PredictionError(f"{model.criterion}: CV {t.key} missing for variant {cvs.variant_id!r}")
        x = cvs[t.key]
        value += t.contribution(x)
        ok = t.in_range(x)
        flags.append(ok)
        if not ok:
            warnings.append(f"{model.criterion}: {t.key} = {x:g} outside fitted range [{t.lo:g}, {t.hi:g}]")
    if not math.isfinite(value):
        raise PredictionError(f"{model.criterion}: non-finite prediction for {cvs.variant_id!r}")
    return PredictionReport(model.criterion, cvs.variant_id, float(value), flags, warnings)


def predict_all(models, cvsets) -> list[PredictionReport]:
    """All models on all variants, ordered by variant then model."""
    cvsets = _as_list(cvsets)
    return [predict(m, cvs) for cvs in cvsets for m in models]


def _as_list(cvsets) -> list[CharacteristicValueSet]:
    if isinstance(cvsets, CharacteristicValueSet):
        return [cvsets]
    if isinstance(cvsets, dict):
        return list(cvsets.values())
    return list(cvsets)


# ---------------------------------------------------------------------------
# binding resolution
# ---------------------------------------------------------------------------

def printed_unit(text: str) -> float:
    """One unit in the last printed digit: ``"0.086" -> 0.001``, ``"3" -> 1``."""
    exp = Decimal(text.strip()).as_tuple().exponent
    return float(Decimal(1).scaleb(exp))


def _bounds(rng) -> tuple[float, float, float, float]:
    lo, hi = rng
    tol_lo = printed_unit(lo) if isinstance(lo, str) else 0.0
    tol_hi = printed_unit(hi) if isinstance(hi, str) else 0.0
    return float(lo), float(hi), tol_lo, tol_hi


def cv_span(key: CvKey, cvsets) -> tuple[float, float] | None:
    """Min and max of ``key`` over the variants, or None if any lacks it."""
    vals = []
    for cvs in _as_list(cvsets):
        if key not in cvs:
            return None
        vals.append(cvs[key])
    return (min(vals), max(vals)) if vals else None


def range_candidates(rng, cvsets, keys=None, tol: float | None = None) -> list[CvKey]:
    """Keys whose variant span matches ``rng`` endpoint by endpoint.

    String endpoints carry their own tolerance (one unit in the last
    printed digit); ``tol`` overrides it for numeric ranges.
    """
    lo, hi, tol_lo, tol_hi = _bounds(rng)
    if tol is not None:
        tol_lo = tol_hi = tol
    out = []
    for key in keys if keys is not None else CATALOG:
        span = cv_span(key, cvsets)
        if span is None:
            continue
        eps = 1e-9 * max(1.0, abs(lo), abs(hi))
        if abs(span[0] - lo) <= tol_lo + eps and abs(span[1] - hi) <= tol_hi + eps:
            out.append(key)
    return out


def resolve_binding(rng, nominal_key: CvKey, cvsets, keys=None, tol: float | None = None) -> CvKey:
    """The unique CV whose span over the variants matches the printed range.

    The nominal key wins if it matches. Otherwise exactly one other key
    must match.

    Raises
    ------
    BindingError
        If no key or more than one key matches.
    """
    cands = range_candidates(rng, cvsets, keys, tol)
    if nominal_key in cands:
        return nominal_key
    if len(cands) == 1:
        return cands[0]
    lo, hi = rng
    if not cands:
        nearest = nearest_binding(rng, cvsets, keys, count=3)
        raise BindingError(
            f"no CV spans [{lo}, {hi}] (nominal {nominal_key}); closest: "
            + ", ".join(f"{k} {_fmt_span(cv_span(k, cvsets))}" for k in nearest)
        )
    raise BindingError(
        f"range [{lo}, {hi}] is ambiguous: " + ", ".join(f"{k} {_fmt_span(cv_span(k, cvsets))}" for k in cands)
    )


def _fmt_span(span) -> str:
    return f"[{span[0]:.4g}, {span[1]:.4g}]"


def nearest_binding(rng, cvsets, keys=None, count: int | None = None):
    """Key(s) whose span is closest to ``rng`` in units of the range width."""
    lo, hi, _, _ = _bounds(rng)
    width = hi - lo if hi > lo else max(abs(hi), 1.0)
    scored = []
    for i, key in enumerate(keys if keys is not None else CATALOG):
        span = cv_span(key, cvsets)
        if span is None:
            continue
        scored.append(((abs(span[0] - lo) + abs(span[1] - hi)) / width, i, key))
    if not scored:
        raise BindingError("no candidate CVs available")
    scored.sort()
    if count is None:
        return scored[0][2]
    return [k for _, _, k in scored[:count]]


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TermSpec:
    """One row of the shipped model table, before binding."""

    criterion: str
    intercept: float
    r2_adj: float
    coef: float
    label: str
    nominal_key: CvKey
    lo: str
    hi: str
    method: str
    offset: float


def load_term_specs(path=None) -> list[TermSpec]:
    """Read the model term table (defaults to the bundled one)."""
    if path is None:
        text = resources.files("rolldyn.data").joinpath("model_terms.csv").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    out = []
    for lineno, rec in enumerate(csv.DictReader(rows), start=2):
        try:
            method = rec["method"].strip()
            if method not in BINDING_METHODS:
                raise ValueError(f"unknown binding method {method!r}")
            out.append(TermSpec(
                criterion=rec["criterion"].strip(),
                intercept=float(rec["intercept"]),
                r2_adj=float(rec["r2_adj"]),
                coef=float(rec["coef"]),
                label=rec["label"].strip(),
                nominal_key=CvKey.parse(rec["nominal_key"]),
                lo=rec["lo"].strip(),
                hi=rec["hi"].strip(),
                method=method,
                offset=float(rec["offset"] or 0.0),
            ))
        except (KeyError, ValueError) as exc:
            raise PredictionError(f"model table row {lineno}: {exc}") from None
    return out


def bind_term(spec: TermSpec, cvsets) -> CvKey:
    """Apply a term's binding method against the variant CVs."""
    rng = (spec.lo, spec.hi)
    if spec.method == "range":
        return resolve_binding(rng, spec.nominal_key, cvsets)
    if spec.method == "nearest":
        return nearest_binding(rng, cvsets)
    if cv_span(spec.nominal_key, cvsets) is None:
        raise BindingError(f"nominal CV {spec.nominal_key} missing from the fixture")
    return spec.nominal_key


def builtin_models(cvsets=None, specs=None) -> list[PredictionModel]:
    """The seven shipped models with predictor keys bound against ``cvsets``.

    ``cvsets`` defaults to the bundled six-variant study fixture.

    Raises
    ------
    BindingError
        If any term cannot be bound; all failures are listed together.
    """
    if cvsets is None:
        from .study import study_cvs

        cvsets = study_cvs()
    specs = specs if specs is not None else load_term_specs()
    grouped: dict[str, list[TermSpec]] = {}
    for s in specs:
        grouped.setdefault(s.criterion, []).append(s)
    models = []
    errors = []
    for crit, rows in grouped.items():
        terms = []
        for s in rows:
            try:
                key = bind_term(s, cvsets)
            except BindingError as exc:
                errors.append(f"{crit} term {s.label}: {exc}")
                continue
            terms.append(ModelTerm(s.coef, key, float(s.lo), float(s.hi), s.offset, s.label))
        models.append(PredictionModel(crit, rows[0].intercept, tuple(terms), rows[0].r2_adj))
    if errors:
        raise BindingError("unresolved binding(s):\n  " + "\n  ".join(errors))
    return sorted(models, key=lambda m: CRITERIA.index(m.criterion))


# ---------------------------------------------------------------------------
# back-testing
# ---------------------------------------------------------------------------

@dataclass
class BacktestReport:
    variants: list[str]
    predictions: dict[str, np.ndarray]
    ratings: dict[str, np.ndarray]
    residuals: dict[str, np.ndarray]
    rmse_sum: dict[str, float]
    rmse_mean: dict[str, float]

    @property
    def criteria(self) -> list[str]:
        return list(self.residuals)

    def worst(self, mode: str = "sum") -> str:
        table = self.rmse_sum if mode == "sum" else self.rmse_mean
        return max(table, key=lambda c: (table[c], -CRITERIA.index(c)))

    def ranking(self, mode: str = "sum") -> list[str]:
        table = self.rmse_sum if mode == "sum" else self.rmse_mean
        return sorted(table, key=lambda c: (-table[c], CRITERIA.index(c)))

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["criterion", "variant", "rating", "prediction", "residual"])
            for c in self.criteria:
                for v, r, p, d in zip(self.variants, self.ratings[c], self.predictions[c], self.residuals[c]):
                    if not math.isnan(d):
                        w.writerow([c, v, repr(float(r)), repr(float(p)), repr(float(d))])
            w.writerow([])
            w.writerow(["criterion", "rmse_sum", "rmse_mean"])
            for c in self.criteria:
                w.writerow([c, repr(self.rmse_sum[c]), repr(self.rmse_mean[c])])


def backtest(models, cvsets, ratings: RatingTable, aspect: str = "liking", subject: str | None = None) -> BacktestReport:
    """Residuals ``rating - prediction`` for every variant with CVs and ratings.

    Ratings are averaged over subjects unless ``subject`` is given.
    Variants without a rating for a criterion are left out of that
    criterion's RMSE.
    """
    cvmap = {c.variant_id: c for c in _as_list(cvsets)}
    variants = [v for v in ratings.variants if v in cvmap]
    if not variants:
        raise PredictionError("no variant has both CVs and ratings")
    preds, rats, resid, r_sum, r_mean = {}, {}, {}, {}, {}
    for m in models:
        y = ratings.matrix(aspect, subject=subject, variants=variants, criteria=[m.criterion])[:, 0]
        p = np.array([predict(m, cvmap[v]).value for v in variants])
        ok = ~np.isnan(y)
        if not ok.any():
            continue
        preds[m.criterion] = p
        rats[m.criterion] = y
        resid[m.criterion] = y - p
        r_sum[m.criterion] = rmse(y[ok], p[ok], mode="sum")
        r_mean[m.criterion] = rmse(y[ok], p[ok], mode="mean")
    if not resid:
        raise PredictionError("no criterion has both a model and ratings")
    return BacktestReport(variants, preds, rats, resid, r_sum, r_mean)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def models_to_dict(models) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "models": [
            {
                "criterion": m.criterion,
                "intercept": m.intercept,
                "r2_adj": m.r2_adj,
                "terms": [
                    {
                        "coef": t.coef,
                        "key": str(t.key),
                        "range": [t.lo, t.hi],
                        "offset": t.offset,
                        "label": t.label,
                    }
                    for t in m.terms
                ],
            }
            for m in models
        ],
    }


def save_models(models, path: str | Path) -> None:
    Path(path).write_text(json.dumps(models_to_dict(models), indent=2) + "\n", encoding="utf-8")


def load_models(path: str | Path) -> list[PredictionModel]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PredictionError(f"{path}: not a JSON model file ({exc})") from None
    if doc.get("format") != MODEL_FORMAT:
        raise PredictionError(f"{path}: format must be {MODEL_FORMAT!r}")
    if doc.get("version") != MODEL_VERSION:
        raise PredictionError(f"{path}: unsupported model file version {doc.get('version')!r}")
    models = []
    for i, m in enumerate(doc.get("models", [])):
        try:
            terms = tuple(
                ModelTerm(
                    float(t["coef"]),
                    CvKey.parse(t["key"]),
                    float(t["range"][0]),
                    float(t["range"][1]),
                    float(t.get("offset", 0.0)),
                    t.get("label", ""),
                )
                for t in m["terms"]
            )
            models.append(PredictionModel(m["criterion"], float(m["intercept"]), terms, m.get("r2_adj")))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise PredictionError(f"{path}: model {i}: {exc}") from None
    return models


def model_from_fit(criterion: str, result, cvsets) -> PredictionModel:
    """Wrap a stepwise/OLS result keyed by CvKey, ranges from the fit data."""
    terms = []
    for key, coef in result.terms:
        lo, hi = cv_span(key, cvsets)
        terms.append(ModelTerm(coef, key, lo, hi, 0.0, str(key)))
    r2 = None if result.r2_adj is None else min(max(result.r2_adj, 0.0), 1.0)
    return PredictionModel(criterion, result.intercept, tuple(terms), r2)


PREDICTION_CSV_HEADER = ["variant", "criterion", "value", "raw_value", "in_range", "warnings"]


def save_predictions_csv(reports, path: str | Path, clamp: bool = False) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_CSV_HEADER)
        for r in reports:
            shown = r.clamped() if clamp else r.value
            w.writerow([r.variant_id, r.criterion, repr(shown), repr(r.value), int(all(r.in_range)), "; ".join(r.warnings)])


def save_predictions_json(reports, path: str | Path, clamp: bool = False) -> None:
    doc = {
        "format": PREDICTION_FORMAT,
        "version": 1,
        "clamped": clamp,
        "predictions": [
            {
                "variant": r.variant_id,
                "criterion": r.criterion,
                "value": r.clamped() if clamp else r.value,
                "raw_value": r.value,
                "in_range": r.in_range,
                "warnings": r.warnings,
            }
            for r in reports
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def spider_table(reports) -> tuple[list[str], list[str], np.ndarray]:
    """Variant x criterion matrix of predictions (NaN where absent)."""
    variants = list(dict.fromkeys(r.variant_id for r in reports))
    crits = [c for c in CRITERIA if any(r.criterion == c for r in reports)]
    out = np.full((len(variants), len(crits)), np.nan)
    for r in reports:
        out[variants.index(r.variant_id), crits.index(r.criterion)] = r.value
    return variants, crits, out


def save_spider_csv(reports, path: str | Path) -> None:
    variants, crits, table = spider_table(reports)
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant"] + crits)
        for v, row in zip(variants, table):
            w.writerow([v] + ["" if math.isnan(x) else repr(float(x)) for x in row])
