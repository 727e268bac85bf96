"""On-disk data model for CSST measurement runs and subjective rating studies.

Two plain-text formats are supported:

* run CSV: ``# key=value`` metadata comments followed by the header
  ``t,delta_h,m_h,a_y,phi[,phi_dot[,phi_ddot]]`` and one sample per line;
* ratings CSV: ``subject,variant,criterion,aspect,value``.

Loaders never repair data. Anything that violates an invariant raises.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

CRITERIA = ("RAL", "RAH", "TDL", "TDH", "IRM", "ROS", "OR")
ASPECTS = ("liking", "intensity")
RATING_BOUNDS = (1.0, 10.0)

REQUIRED_CHANNELS = ("t", "delta_h", "m_h", "a_y", "phi")
OPTIONAL_CHANNELS = ("phi_dot", "phi_ddot")

# suffix marking the repeated reference drive, e.g. "RV_rep"
REPETITION_SUFFIX = "_rep"

_SAMPLING_TOL = 1e-6  # [s]


class RunFormatError(ValueError):
    """A run file could not be parsed."""


class RunValidationError(ValueError):
    """A measurement run violates one of its invariants."""


class RatingsError(ValueError):
    """A ratings file or table violates the rating schema."""


def base_variant(variant_id: str) -> str:
    """Return the variant a repetition run belongs to (``"RV_rep"`` -> ``"RV"``)."""
    if variant_id.endswith(REPETITION_SUFFIX):
        return variant_id[: -len(REPETITION_SUFFIX)]
    return variant_id


def is_repetition(variant_id: str) -> bool:
    return variant_id.endswith(REPETITION_SUFFIX) and len(variant_id) > len(REPETITION_SUFFIX)


@dataclass(frozen=True, eq=False)
class MeasurementRun:
    """Uniformly sampled CSST time series of one vehicle variant.

    Units: ``v`` km/h, ``ay_target`` m/s^2, ``sample_rate`` Hz, ``t`` s,
    ``delta_h`` deg, ``m_h`` Nm, ``a_y`` m/s^2, ``phi`` deg, ``phi_dot``
    deg/s, ``phi_ddot`` deg/s^2.
    """

    variant_id: str
    v: float
    ay_target: float
    sample_rate: float
    t: np.ndarray
    delta_h: np.ndarray
    m_h: np.ndarray
    a_y: np.ndarray
    phi: np.ndarray
    phi_dot: np.ndarray | None = None
    phi_ddot: np.ndarray | None = None

    def channel(self, name: str) -> np.ndarray:
        name = CHANNEL_ALIASES.get(name, name)
        if name not in REQUIRED_CHANNELS + OPTIONAL_CHANNELS:
            raise KeyError(f"unknown channel {name!r}")
        values = getattr(self, name)
        if values is None:
            raise KeyError(f"channel {name} not present in run {self.variant_id!r}")
        return values

    def has_channel(self, name: str) -> bool:
        name = CHANNEL_ALIASES.get(name, name)
        return getattr(self, name, None) is not None

    @property
    def channels(self) -> tuple[str, ...]:
        return tuple(c for c in REQUIRED_CHANNELS + OPTIONAL_CHANNELS if getattr(self, c) is not None)

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MeasurementRun):
            return NotImplemented
        meta = ("variant_id", "v", "ay_target", "sample_rate")
        if any(getattr(self, m) != getattr(other, m) for m in meta):
            return False
        if self.channels != other.channels:
            return False
        return all(np.array_equal(self.channel(c), other.channel(c)) for c in self.channels)


# transfer-function symbols accepted wherever a channel name is expected
CHANNEL_ALIASES = {"M_H": "m_h", "delta_H": "delta_h", "a_y": "a_y"}


def validate_run(run: MeasurementRun) -> MeasurementRun:
    """Check every run invariant and return the run unchanged.

    Raises
    ------
    RunValidationError
        With a message naming the violated invariant (and channel, where
        one is involved).
    """
    n = len(run.t)
    for name in run.channels:
        values = np.asarray(run.channel(name))
        if values.ndim != 1:
            raise RunValidationError(f"channel {name} is not one-dimensional")
        if len(values) != n:
            raise RunValidationError(f"channel {name} has {len(values)} samples, expected {n}")
    if n < 2:
        raise RunValidationError(f"run too short: {n} sample(s), need at least 2")
    for name in run.channels:
        bad = np.flatnonzero(~np.isfinite(run.channel(name)))
        if bad.size:
            raise RunValidationError(f"non-finite value in channel {name} at sample {bad[0]}")
    if not (math.isfinite(run.sample_rate) and run.sample_rate > 0):
        raise RunValidationError(f"sample_rate must be positive, got {run.sample_rate}")
    dt = np.diff(run.t)
    if np.any(dt <= 0):
        i = int(np.flatnonzero(dt <= 0)[0])
        raise RunValidationError(f"time not strictly increasing at sample {i + 1}")
    step = 1.0 / run.sample_rate
    dev = np.abs(dt - step)
    if np.any(dev > _SAMPLING_TOL):
        i = int(np.argmax(dev > _SAMPLING_TOL))
        raise RunValidationError(
            f"non-uniform sampling: step {dt[i]:.9g} s at sample {i + 1} "
            f"differs from 1/sample_rate = {step:.9g} s"
        )
    return run


def _parse_float(text: str, lineno: int, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise RunFormatError(f"line {lineno}: cannot parse {what} {text!r} as a number") from None


def load_run(path: str | Path) -> MeasurementRun:
    """Read and validate a run CSV file.

    Metadata comes from ``# key=value`` comment lines before the header:
    ``variant``, ``v_kmh``, ``ay_target`` and ``sample_rate``.
    """
    path = Path(path)
    meta: dict[str, str] = {}
    header: list[str] | None = None
    rows: list[list[float]] = []
    with path.open(encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                if header is not None:
                    raise RunFormatError(f"line {lineno}: comment after the data header")
                body = stripped[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            fields = [f.strip() for f in stripped.split(",")]
            if header is None:
                header = fields
                _check_header(header, lineno)
                continue
            if len(fields) != len(header):
                raise RunFormatError(f"line {lineno}: expected {len(header)} fields, got {len(fields)}")
            row = []
            for name, text in zip(header, fields):
                value = _parse_float(text, lineno, name)
                if not math.isfinite(value):
                    raise RunFormatError(f"line {lineno}: non-finite value in channel {name}")
                row.append(value)
            rows.append(row)
    if header is None:
        raise RunFormatError(f"{path}: no data header found")
    for key in ("sample_rate",):
        if key not in meta:
            raise RunFormatError(f"{path}: missing metadata '# {key}=...'")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    cols = {name: data[:, i].copy() for i, name in enumerate(header)}
    run = MeasurementRun(
        variant_id=meta.get("variant", path.stem),
        v=_parse_float(meta.get("v_kmh", "nan"), 0, "v_kmh"),
        ay_target=_parse_float(meta.get("ay_target", "nan"), 0, "ay_target"),
        sample_rate=_parse_float(meta["sample_rate"], 0, "sample_rate"),
        **cols,
    )
    return validate_run(run)


def _check_header(header: list[str], lineno: int) -> None:
    for name in REQUIRED_CHANNELS:
        if name not in header:
            raise RunFormatError(f"line {lineno}: missing channel {name}")
    unknown = [h for h in header if h not in REQUIRED_CHANNELS + OPTIONAL_CHANNELS]
    if unknown:
        raise RunFormatError(f"line {lineno}: unknown channel(s) {', '.join(unknown)}")
    if len(set(header)) != len(header):
        raise RunFormatError(f"line {lineno}: duplicate channel in header")
    expected = list(REQUIRED_CHANNELS) + [c for c in OPTIONAL_CHANNELS if c in header]
    if header != expected:
        raise RunFormatError(f"line {lineno}: channel order must be {','.join(expected)}")
    if "phi_ddot" in header and "phi_dot" not in header:
        raise RunFormatError(f"line {lineno}: phi_ddot requires phi_dot")


def save_run(run: MeasurementRun, path: str | Path) -> None:
    """Write a run in canonical form; ``load_run`` restores it bit for bit."""
    validate_run(run)
    names = run.channels
    cols = [run.channel(c) for c in names]
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# variant={run.variant_id}\n")
        fh.write(f"# v_kmh={run.v!r}\n")
        fh.write(f"# ay_target={run.ay_target!r}\n")
        fh.write(f"# sample_rate={run.sample_rate!r}\n")
        fh.write(",".join(names) + "\n")
        for row in zip(*(c.tolist() for c in cols)):
            fh.write(",".join(repr(v) for v in row) + "\n")


@dataclass
class RatingTable:
    """Ratings keyed by ``(subject, variant, criterion, aspect)``.

    Missing ratings are stored explicitly as NaN. ``bounded=False`` lifts
    the 1-10 check for derived tables (e.g. standardized ratings).
    """

    values: dict[tuple[str, str, str, str], float] = field(default_factory=dict)
    bounded: bool = True

    def __post_init__(self) -> None:
        for key, value in self.values.items():
            _check_rating_key(key)
            if self.bounded and not math.isnan(value) and not RATING_BOUNDS[0] <= value <= RATING_BOUNDS[1]:
                raise RatingsError(f"rating outside [1,10]: {value} at {key}")

    @property
    def subjects(self) -> list[str]:
        return _ordered_unique(k[0] for k in self.values)

    @property
    def variants(self) -> list[str]:
        return _ordered_unique(k[1] for k in self.values)

    @property
    def criteria(self) -> list[str]:
        present = {k[2] for k in self.values}
        return [c for c in CRITERIA if c in present]

    def criteria_for(self, aspect: str) -> list[str]:
        present = {k[2] for k in self.values if k[3] == aspect}
        return [c for c in CRITERIA if c in present]

    def __len__(self) -> int:
        return len(self.values)

    def get(self, subject: str, variant: str, criterion: str, aspect: str) -> float:
        return self.values.get((subject, variant, criterion, aspect), math.nan)

    def select(self, aspect: str) -> "RatingTable":
        return RatingTable({k: v for k, v in self.values.items() if k[3] == aspect}, self.bounded)

    def matrix(self, aspect: str, subject: str | None = None,
               variants: list[str] | None = None,
               criteria: list[str] | None = None) -> np.ndarray:
        """Variant x criterion array for one aspect.

        With ``subject=None`` the ratings are averaged over subjects,
        ignoring missing entries. Cells without any rating are NaN.
        """
        variants = self.variants if variants is None else variants
        criteria = self.criteria_for(aspect) if criteria is None else criteria
        subjects = self.subjects if subject is None else [subject]
        out = np.full((len(variants), len(criteria)), np.nan)
        for i, var in enumerate(variants):
            for j, crit in enumerate(criteria):
                vals = [self.get(s, var, crit, aspect) for s in subjects]
                vals = [v for v in vals if not math.isnan(v)]
                if vals:
                    out[i, j] = float(np.mean(vals))
        return out


def _ordered_unique(items) -> list[str]:
    seen: dict[str, None] = {}
    for item in items:
        seen.setdefault(item, None)
    return list(seen)


def _check_rating_key(key: tuple[str, str, str, str]) -> None:
    subject, variant, criterion, aspect = key
    if criterion not in CRITERIA:
        raise RatingsError(f"unknown criterion {criterion!r}")
    if aspect not in ASPECTS:
        raise RatingsError(f"unknown aspect {aspect!r}")
    if criterion == "OR" and aspect == "intensity":
        raise RatingsError("criterion OR has no intensity aspect")
    if not subject or not variant:
        raise RatingsError("empty subject or variant id")


RATINGS_HEADER = ["subject", "variant", "criterion", "aspect", "value"]


def load_ratings(path: str | Path) -> RatingTable:
    """Read a ratings CSV. An empty ``value`` field marks a missing rating."""
    values: dict[tuple[str, str, str, str], float] = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for row in reader:
            lineno = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()) or row[0].lstrip().startswith("#"):
                continue
            row = [f.strip() for f in row]
            if header is None:
                if row != RATINGS_HEADER:
                    raise RatingsError(f"line {lineno}: header must be {','.join(RATINGS_HEADER)}")
                header = row
                continue
            if len(row) != len(RATINGS_HEADER):
                raise RatingsError(f"line {lineno}: expected 5 fields, got {len(row)}")
            subject, variant, criterion, aspect, text = row
            key = (subject, variant, criterion, aspect)
            try:
                _check_rating_key(key)
            except RatingsError as exc:
                raise RatingsError(f"line {lineno}: {exc}") from None
            if key in values:
                raise RatingsError(f"line {lineno}: duplicate rating {key}")
            if text == "":
                value = math.nan
            else:
                try:
                    value = float(text)
                except ValueError:
                    raise RatingsError(f"line {lineno}: cannot parse rating {text!r}") from None
                if not math.isfinite(value) or not RATING_BOUNDS[0] <= value <= RATING_BOUNDS[1]:
                    raise RatingsError(f"line {lineno}: rating outside [1,10]: {text}")
            values[key] = value
    if header is None:
        raise RatingsError(f"{path}: empty ratings file")
    return RatingTable(values)


def save_ratings(table: RatingTable, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RATINGS_HEADER)
        for (subject, variant, criterion, aspect), value in table.values.items():
            writer.writerow([subject, variant, criterion, aspect, "" if math.isnan(value) else repr(value)])


def ratings_from_matrix(matrix, variants, criteria, aspect: str, subject: str = "mean") -> RatingTable:
    """Build a one-subject table from a variant x criterion array."""
    matrix = np.asarray(matrix, dtype=float)
    values = {}
    for i, var in enumerate(variants):
        for j, crit in enumerate(criteria):
            values[(subject, var, crit, aspect)] = float(matrix[i, j])
    return RatingTable(values)


def with_channels(run: MeasurementRun, **channels) -> MeasurementRun:
    """Copy of ``run`` with some channels replaced (validated)."""
    return validate_run(replace(run, **channels))
