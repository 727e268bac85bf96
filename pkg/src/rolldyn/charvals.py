"""Characteristic values (CVs) of the roll transfer functions."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .spectra import (
    INPUTS,
    MAX_RESOLUTION,
    ROLL_OUTPUTS,
    FrequencyResponse,
    WelchConfig,
    eval_at,
    phase_interp,
)

QUASI_STATIC_FREQ = 0.3  # [Hz]
READOUT_FREQS = (0.6, 0.9, 1.2, 1.5)  # [Hz]
SCALAR_KINDS = ("V0", "Vmax", "omega0", "beta")
FREQ_KINDS = ("V_at", "phase_at")
KINDS = SCALAR_KINDS + FREQ_KINDS

_INPUT_UNIT = {"M_H": "Nm", "delta_H": "deg", "a_y": "m/s^2"}
_GAIN_UNIT = {
    ("M_H", 0): "deg/Nm",
    ("M_H", 1): "deg/(s*Nm)",
    ("M_H", 2): "deg/(s^2*Nm)",
    ("delta_H", 0): "-",
    ("delta_H", 1): "1/s",
    ("delta_H", 2): "1/s^2",
    ("a_y", 0): "deg*s^2/m",
    ("a_y", 1): "deg*s/m",
    ("a_y", 2): "deg/m",
}


class CharValError(ValueError):
    pass


@dataclass(frozen=True, order=False)
class CvKey:
    """Identity of one CV: transfer function, kind and (for read-outs) frequency."""

    input: str
    order: int
    kind: str
    freq: float | None = None

    def __post_init__(self):
        if self.input not in INPUTS:
            raise CharValError(f"unknown input {self.input!r}")
        if self.order not in (0, 1, 2):
            raise CharValError(f"derivative order must be 0, 1 or 2, got {self.order}")
        if self.kind not in KINDS:
            raise CharValError(f"unknown CV kind {self.kind!r}")
        if self.kind in FREQ_KINDS:
            if self.freq is None:
                raise CharValError(f"{self.kind} needs a frequency")
            freq = float(self.freq)
            match = [f for f in READOUT_FREQS if abs(f - freq) < 1e-9]
            if not match:
                raise CharValError(f"read-out frequency must be one of {READOUT_FREQS}, got {self.freq}")
            object.__setattr__(self, "freq", match[0])
        elif self.freq is not None:
            raise CharValError(f"{self.kind} takes no frequency")
        if self.kind == "phase_at" and self.order != 0:
            raise CharValError("phase CVs are defined for the roll angle response only")

    @property
    def output(self) -> str:
        return ROLL_OUTPUTS[self.order]

    @property
    def unit(self) -> str:
        if self.kind == "omega0":
            return "Hz"
        if self.kind == "beta":
            return "-"
        if self.kind == "phase_at":
            return "deg"
        return _GAIN_UNIT[(self.input, self.order)]

    def __str__(self) -> str:
        s = f"{self.kind}[{self.input}->{self.output}]"
        if self.freq is not None:
            s += f"@{self.freq:g}"
        return s

    @classmethod
    def parse(cls, text: str) -> "CvKey":
        """Inverse of ``str(key)``, e.g. ``"V_at[M_H->phi]@0.6"``."""
        text = text.strip()
        try:
            kind, rest = text.split("[", 1)
            tf, tail = rest.split("]", 1)
            inp, out = tf.split("->")
            freq = float(tail[1:]) if tail.startswith("@") else None
            if tail and not tail.startswith("@"):
                raise ValueError
            return cls(inp, ROLL_OUTPUTS.index(out), kind, freq)
        except (ValueError, IndexError):
            raise CharValError(f"cannot parse CV key {text!r}") from None

    @property
    def sort_key(self) -> tuple:
        return (
            INPUTS.index(self.input),
            self.order,
            KINDS.index(self.kind),
            -1.0 if self.freq is None else self.freq,
        )


def catalog_keys() -> list[CvKey]:
    """All 84 implemented CV keys in catalog order."""
    keys = []
    for inp in INPUTS:
        for order in range(3):
            keys += [CvKey(inp, order, k) for k in SCALAR_KINDS]
            keys += [CvKey(inp, order, "V_at", f) for f in READOUT_FREQS]
            if order == 0:
                keys += [CvKey(inp, 0, "phase_at", f) for f in READOUT_FREQS]
    return sorted(keys, key=lambda k: k.sort_key)


CATALOG = tuple(catalog_keys())


class CvValue(NamedTuple):
    value: float
    unit: str


@dataclass
class CharacteristicValueSet:
    """CVs of one vehicle variant; ``cvs[key]`` returns the bare value."""

    variant_id: str
    entries: dict[CvKey, CvValue] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    sources: dict[CvKey, str] = field(default_factory=dict)

    def __getitem__(self, key: CvKey) -> float:
        try:
            return self.entries[key].value
        except KeyError:
            raise KeyError(f"CV {key} missing for variant {self.variant_id!r}") from None

    def __contains__(self, key: CvKey) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def keys(self) -> list[CvKey]:
        return sorted(self.entries, key=lambda k: k.sort_key)

    def set(self, key: CvKey, value: float, source: str | None = None) -> None:
        self.entries[key] = CvValue(float(value), key.unit)
        if source is not None:
            self.sources[key] = source

    def is_complete(self) -> bool:
        return all(k in self.entries for k in CATALOG)


# ---------------------------------------------------------------------------
# single-response read-outs
# ---------------------------------------------------------------------------

def v0(fr: FrequencyResponse) -> float:
    """Quasi-stationary gain ``|G(0.3 Hz)|``."""
    return abs(eval_at(fr, QUASI_STATIC_FREQ))


def _band_mask(fr: FrequencyResponse, band) -> np.ndarray:
    lo, hi = band
    tol = 1e-9
    mask = (fr.freqs >= lo - tol) & (fr.freqs <= hi + tol)
    if not mask.any():
        raise CharValError(f"band {band} contains no frequency bins")
    return mask


def vmax_omega0(fr: FrequencyResponse, band=(0.2, 2.5)) -> tuple[float, float]:
    """Peak gain over ``band`` and its frequency; ties go to the lowest bin."""
    lo, hi = band
    if not lo < hi:
        raise CharValError(f"empty band {band}")
    mask = _band_mask(fr, band)
    mag = fr.magnitude[mask]
    i = int(np.argmax(mag))
    return float(mag[i]), float(fr.freqs[mask][i])


def beta(fr: FrequencyResponse, band=(0.2, 2.5)) -> float:
    """Magnification factor: peak gain over the quasi-stationary gain."""
    base = v0(fr)
    if base == 0.0:
        raise CharValError(f"undefined magnification for {fr.label}: V0 is zero")
    return vmax_omega0(fr, band)[0] / base


def gain_at(fr: FrequencyResponse, f: float) -> float:
    return abs(eval_at(fr, f))


def phase_at(fr: FrequencyResponse, f: float) -> float:
    """Unwrapped phase in degrees at ``f``; roll-angle responses only."""
    if fr.output_order != 0:
        raise CharValError(f"phase CVs are only defined for the roll angle, got {fr.output}")
    return phase_interp(fr, f)


def extract_all(responses, cfg: WelchConfig | None = None, variant_id: str | None = None) -> CharacteristicValueSet:
    """Full 84-entry CV catalog from the nine roll responses of a variant.

    ``responses`` is a mapping ``(input, order) -> FrequencyResponse`` or
    an iterable of responses.
    """
    cfg = cfg or WelchConfig()
    if not isinstance(responses, dict):
        responses = {(fr.input, fr.output_order): fr for fr in responses}
    missing = [(u, n) for u in INPUTS for n in range(3) if (u, n) not in responses]
    if missing:
        raise CharValError("missing response(s): " + ", ".join(f"{u}->{ROLL_OUTPUTS[n]}" for u, n in missing))
    if variant_id is None:
        variant_id = next(iter(responses.values())).variant_id
    out = CharacteristicValueSet(variant_id)
    for (u, n), fr in sorted(responses.items(), key=lambda kv: (INPUTS.index(kv[0][0]), kv[0][1])):
        spacing = float(np.max(np.diff(fr.freqs)))
        if spacing > MAX_RESOLUTION + 1e-9:
            warnings.warn(f"{fr.label}: bin spacing {spacing:.3g} Hz exceeds {MAX_RESOLUTION} Hz", stacklevel=2)
        base = v0(fr)
        peak, f_peak = vmax_omega0(fr, cfg.eval_band)
        if base == 0.0:
            raise CharValError(f"undefined magnification for {fr.label}: V0 is zero")
        out.set(CvKey(u, n, "V0"), base)
        out.set(CvKey(u, n, "Vmax"), peak)
        out.set(CvKey(u, n, "omega0"), f_peak)
        out.set(CvKey(u, n, "beta"), peak / base)
        if base > peak * (1 + 1e-12):
            out.flags.append(f"{fr.label}: V0 exceeds Vmax (peak below {QUASI_STATIC_FREQ} Hz)")
        for f in READOUT_FREQS:
            out.set(CvKey(u, n, "V_at", f), gain_at(fr, f))
            if n == 0:
                out.set(CvKey(u, 0, "phase_at", f), phase_at(fr, f))
    bad = [str(k) for k, v in out.entries.items() if not math.isfinite(v.value)]
    if bad:
        raise CharValError("non-finite CV(s): " + ", ".join(bad))
    return out


# ---------------------------------------------------------------------------
# CSV exchange
# ---------------------------------------------------------------------------

CV_CSV_HEADER = ["variant", "input", "deriv", "kind", "freq_hz", "value", "unit"]


def save_cvs(cvsets, path: str | Path, with_source: bool = False) -> None:
    """Write CV sets in stable (variant, input, deriv, kind, freq) order."""
    if isinstance(cvsets, CharacteristicValueSet):
        cvsets = [cvsets]
    elif isinstance(cvsets, dict):
        cvsets = list(cvsets.values())
    header = CV_CSV_HEADER + (["source"] if with_source else [])
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for cvs in cvsets:
            for key in cvs.keys():
                row = [
                    cvs.variant_id,
                    key.input,
                    key.order,
                    key.kind,
                    "" if key.freq is None else f"{key.freq:g}",
                    repr(cvs[key]),
                    cvs.entries[key].unit,
                ]
                if with_source:
                    row.append(cvs.sources.get(key, ""))
                writer.writerow(row)


def load_cvs(path: str | Path) -> dict[str, CharacteristicValueSet]:
    """Read a CV CSV into ``{variant: CharacteristicValueSet}`` (file order)."""
    out: dict[str, CharacteristicValueSet] = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for row in reader:
            if not row or row[0].startswith("#"):
                continue
            if header is None:
                header = [h.strip() for h in row]
                if header[: len(CV_CSV_HEADER)] != CV_CSV_HEADER:
                    raise CharValError(f"{path}: header must start with {','.join(CV_CSV_HEADER)}")
                continue
            rec = dict(zip(header, (f.strip() for f in row)))
            lineno = reader.line_num
            try:
                key = CvKey(
                    rec["input"],
                    int(rec["deriv"]),
                    rec["kind"],
                    float(rec["freq_hz"]) if rec["freq_hz"] else None,
                )
                value = float(rec["value"])
            except (ValueError, KeyError, CharValError) as exc:
                raise CharValError(f"{path}: line {lineno}: {exc}") from None
            cvs = out.setdefault(rec["variant"], CharacteristicValueSet(rec["variant"]))
            if key in cvs:
                raise CharValError(f"{path}: line {lineno}: duplicate CV {key} for {rec['variant']}")
            cvs.set(key, value, rec.get("source") or None)
    return out
