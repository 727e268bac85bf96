"""Frequency-response estimation from CSST time series (Welch / H1)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import signal

from .ingest import CHANNEL_ALIASES, MeasurementRun

INPUTS = ("M_H", "delta_H", "a_y")
ROLL_OUTPUTS = ("phi", "phi_dot", "phi_ddot")
WINDOWS = {"hann": "hann", "hamming": "hamming", "rectangular": "boxcar", "rect": "boxcar"}
DETRENDS = {"none": False, "mean": "constant"}

MAX_RESOLUTION = 0.05  # [Hz] needed to separate the 0.3 Hz spaced read-out points


class SpectraError(ValueError):
    pass


@dataclass(frozen=True)
class WelchConfig:
    """Welch averaging parameters.

    ``segment_length=None`` picks the shortest segment whose bin spacing
    is at most 0.05 Hz at the run's sample rate.
    """

    segment_length: int | None = None
    overlap_fraction: float = 0.5
    window: str = "hann"
    detrend: str = "mean"
    eval_band: tuple[float, float] = (0.2, 2.5)

    def __post_init__(self):
        if self.segment_length is not None and self.segment_length < 8:
            raise SpectraError(f"segment_length must be >= 8, got {self.segment_length}")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise SpectraError(f"overlap_fraction must lie in [0, 1), got {self.overlap_fraction}")
        if self.window not in WINDOWS:
            raise SpectraError(f"unknown window {self.window!r}")
        if self.detrend not in DETRENDS:
            raise SpectraError(f"unknown detrend {self.detrend!r}")
        lo, hi = self.eval_band
        if not 0.0 <= lo < hi:
            raise SpectraError(f"eval_band must satisfy 0 <= f_lo < f_hi, got {self.eval_band}")

    def nperseg(self, sample_rate: float) -> int:
        if self.segment_length is not None:
            return self.segment_length
        return int(math.ceil(sample_rate / MAX_RESOLUTION - 1e-9))

    def resolution(self, sample_rate: float) -> float:
        return sample_rate / self.nperseg(sample_rate)


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    """Complex response of one input/output channel pair.

    ``values`` are output units per input unit. ``output_order`` is the
    derivative order of the roll angle for roll outputs and ``None`` for
    any other output channel.
    """

    input: str
    output: str
    freqs: np.ndarray
    values: np.ndarray
    coherence: np.ndarray | None = None
    variant_id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if freqs.ndim != 1 or freqs.shape != values.shape:
            raise SpectraError("freqs and values must be 1-D arrays of equal length")
        if len(freqs) < 2 or np.any(np.diff(freqs) <= 0):
            raise SpectraError("freqs must be strictly increasing with at least two bins")
        if not np.all(np.isfinite(values)):
            raise SpectraError(f"non-finite response values in {self.input}->{self.output}")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "values", values)
        if self.coherence is not None:
            coh = np.asarray(self.coherence, dtype=float)
            if coh.shape != freqs.shape:
                raise SpectraError("coherence shape does not match freqs")
            if np.any((coh < -1e-12) | (coh > 1 + 1e-12)):
                raise SpectraError("coherence outside [0, 1]")
            object.__setattr__(self, "coherence", np.clip(coh, 0.0, 1.0))

    @property
    def output_order(self) -> int | None:
        try:
            return ROLL_OUTPUTS.index(self.output)
        except ValueError:
            return None

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def phase_deg(self) -> np.ndarray:
        """Unwrapped phase; the first bin lies in (-180, 180]."""
        return np.degrees(np.unwrap(np.angle(self.values)))

    @property
    def label(self) -> str:
        return f"{self.input}->{self.output}"


def _channel_name(name: str) -> str:
    return CHANNEL_ALIASES.get(name, name)


def estimate_tf(run: MeasurementRun, input: str, output: str, cfg: WelchConfig | None = None) -> FrequencyResponse:
    """H1 estimate ``S_uy / S_uu`` of the response from ``input`` to ``output``.

    The returned grid holds the Welch bins inside ``cfg.eval_band`` plus
    one neighbouring bin on each side, so the band edges can be
    interpolated.

    Raises
    ------
    SpectraError
        If the run is shorter than two segments or the input has no power
        in the evaluation band.
    """
    cfg = cfg or WelchConfig()
    u = run.channel(_channel_name(input))
    y = run.channel(_channel_name(output))
    fs = run.sample_rate
    nperseg = cfg.nperseg(fs)
    if len(u) < 2 * nperseg:
        raise SpectraError(
            f"run too short: {len(u)} samples for segment length {nperseg} (need {2 * nperseg})"
        )
    kw = dict(
        fs=fs,
        window=WINDOWS[cfg.window],
        nperseg=nperseg,
        noverlap=int(round(cfg.overlap_fraction * nperseg)),
        detrend=DETRENDS[cfg.detrend],
    )
    f, s_uu = signal.welch(u, **kw)
    _, s_yy = signal.welch(y, **kw)
    _, s_uy = signal.csd(u, y, **kw)  # conj(U) * Y

    lo, hi = cfg.eval_band
    df = f[1] - f[0]
    keep = (f > lo - df - 1e-9) & (f < hi + df + 1e-9) & (f > 0)
    if keep.sum() < 2:
        raise SpectraError(f"eval_band {cfg.eval_band} contains fewer than two bins")
    f, s_uu, s_yy, s_uy = f[keep], s_uu[keep], s_yy[keep], s_uy[keep]
    in_band = (f >= lo - 1e-9) & (f <= hi + 1e-9)
    floor = np.finfo(float).tiny + 1e-300
    if np.all(s_uu[in_band] <= floor) or np.any(s_uu <= 0):
        raise SpectraError(f"input channel {input} has zero power in the evaluation band")

    values = s_uy / s_uu
    with np.errstate(invalid="ignore", divide="ignore"):
        coherence = np.abs(s_uy) ** 2 / (s_uu * s_yy)
    coherence = np.where(s_yy > 0, coherence, 0.0)
    return FrequencyResponse(
        input=input,
        output=output,
        freqs=f,
        values=values,
        coherence=np.clip(coherence, 0.0, 1.0),
        variant_id=run.variant_id,
        meta={"nperseg": nperseg, "sample_rate": fs, "eval_band": tuple(cfg.eval_band)},
    )


def derive_response(fr: FrequencyResponse, n: int = 1) -> FrequencyResponse:
    """Response of the ``n``-th time derivative of the output.

    Multiplies by ``(j 2 pi f)**n``, which adds ``n * 90`` degrees of phase.
    """
    if n not in (1, 2):
        raise SpectraError(f"derivative order must be 1 or 2, got {n}")
    order = fr.output_order
    if order is None:
        raise SpectraError(f"output {fr.output!r} is not a roll channel")
    if order + n > 2:
        raise SpectraError(f"cannot differentiate {fr.output} {n} more time(s): beyond phi_ddot")
    jw = 2j * np.pi * fr.freqs
    return replace(fr, output=ROLL_OUTPUTS[order + n], values=fr.values * jw**n)


def eval_at(fr: FrequencyResponse, f: float) -> complex:
    """Linear interpolation of the real and imaginary parts at ``f``."""
    _check_in_grid(fr, f)
    re = np.interp(f, fr.freqs, fr.values.real)
    im = np.interp(f, fr.freqs, fr.values.imag)
    return complex(re, im)


def phase_interp(fr: FrequencyResponse, f: float) -> float:
    """Unwrapped phase in degrees, interpolated linearly at ``f``."""
    _check_in_grid(fr, f)
    return float(np.interp(f, fr.freqs, fr.phase_deg))


def _check_in_grid(fr: FrequencyResponse, f: float) -> None:
    tol = 1e-9 * max(1.0, abs(f))
    if not fr.freqs[0] - tol <= f <= fr.freqs[-1] + tol:
        raise SpectraError(f"f = {f} Hz outside the grid [{fr.freqs[0]}, {fr.freqs[-1]}] Hz")


def roll_responses(run: MeasurementRun, cfg: WelchConfig | None = None) -> dict[tuple[str, int], FrequencyResponse]:
    """The nine roll transfer functions of a run keyed by ``(input, order)``.

    Only the roll-angle responses are estimated; rate and acceleration
    responses are derived spectrally from them.
    """
    out = {}
    for u in INPUTS:
        base = estimate_tf(run, u, "phi", cfg)
        out[(u, 0)] = base
        out[(u, 1)] = derive_response(base, 1)
        out[(u, 2)] = derive_response(base, 2)
    return out


FR_CSV_HEADER = "freq_hz,re,im,mag,phase_deg,coherence"


def save_response(fr: FrequencyResponse, path: str | Path) -> None:
    coh = fr.coherence if fr.coherence is not None else np.full(len(fr.freqs), np.nan)
    mag = fr.magnitude
    phase = fr.phase_deg
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# input={fr.input}\n# output={fr.output}\n# variant={fr.variant_id}\n")
        fh.write(FR_CSV_HEADER + "\n")
        for i, f in enumerate(fr.freqs):
            c = "" if math.isnan(coh[i]) else repr(float(coh[i]))
            fh.write(
                f"{float(f)!r},{float(fr.values[i].real)!r},{float(fr.values[i].imag)!r},"
                f"{float(mag[i])!r},{float(phase[i])!r},{c}\n"
            )


def load_response(path: str | Path) -> FrequencyResponse:
    meta = {}
    rows = []
    coh = []
    header = None
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
            continue
        if header is None:
            header = line
            if header != FR_CSV_HEADER:
                raise SpectraError(f"{path}: line {lineno}: header must be {FR_CSV_HEADER}")
            continue
        fields = line.split(",")
        if len(fields) != 6:
            raise SpectraError(f"{path}: line {lineno}: expected 6 fields")
        try:
            rows.append([float(x) for x in fields[:3]])
        except ValueError:
            raise SpectraError(f"{path}: line {lineno}: unparsable number") from None
        coh.append(float(fields[5]) if fields[5] else math.nan)
    if "input" not in meta or "output" not in meta:
        raise SpectraError(f"{path}: missing '# input=' or '# output=' metadata")
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    coh = np.array(coh)
    return FrequencyResponse(
        input=meta["input"],
        output=meta["output"],
        freqs=arr[:, 0],
        values=arr[:, 1] + 1j * arr[:, 2],
        coherence=None if np.all(np.isnan(coh)) else np.nan_to_num(coh),
        variant_id=meta.get("variant", ""),
    )


def response_filename(fr: FrequencyResponse) -> str:
    return f"{fr.input}__{fr.output}.csv"
