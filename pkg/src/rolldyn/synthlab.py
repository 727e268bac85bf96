"""Synthetic CSST runs from a linear roll model with closed-form responses.

Chain of blocks::

    delta_H --[g_ay / (1 + s tau_lat)]--> a_y --[k wn^2 / (s^2 + 2 zeta wn s + wn^2)]--> phi
    M_H = c_t * delta_H + d_t * d(delta_H)/dt

Yaw rate and side slip are folded into the first-order lateral lag.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .ingest import MeasurementRun, validate_run
from .spectra import INPUTS, ROLL_OUTPUTS, FrequencyResponse

AY_TARGET = 4.0  # [m/s^2] quasi-stationary lateral acceleration of the manoeuvre
_STABILITY_LIMIT = 2.5  # |lambda h| bound inside the RK4 stability region


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class VehicleParams:
    """Parameters of the linear roll model.

    Units: ``f_n`` Hz, ``k`` deg/(m/s^2), ``g_ay`` (m/s^2)/deg,
    ``tau_lat`` s, ``c_t`` Nm/deg, ``d_t`` Nm*s/deg.
    """

    f_n: float = 1.4
    zeta: float = 0.223
    k: float = 0.19
    g_ay: float = 0.13
    tau_lat: float = 0.02
    c_t: float = 0.14
    d_t: float = 0.002

    def __post_init__(self):
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise SynthError(f"{f.name} must be finite")
        if self.f_n <= 0:
            raise SynthError(f"f_n must be > 0, got {self.f_n}")
        if not 0 < self.zeta < 1:
            raise SynthError(f"zeta must lie in (0, 1), got {self.zeta}")
        if self.k < 0 or self.g_ay <= 0 or self.c_t <= 0:
            raise SynthError("k must be >= 0 and g_ay, c_t must be > 0")
        if self.tau_lat < 0 or self.d_t < 0:
            raise SynthError("tau_lat and d_t must be >= 0")

    @property
    def omega_n(self) -> float:
        return 2 * math.pi * self.f_n


@dataclass(frozen=True)
class ChirpSpec:
    """Linear sweep ``f0 -> f1`` at constant amplitude.

    ``amplitude=None`` picks the steering angle that gives
    ``ay_target`` quasi-statically.
    """

    f0: float = 0.1
    f1: float = 2.5
    duration: float = 300.0
    amplitude: float | None = None
    v: float = 100.0
    sample_rate: float = 100.0
    ay_target: float = AY_TARGET

    def __post_init__(self):
        if not 0 < self.f0 <= self.f1:
            raise SynthError(f"need 0 < f0 <= f1, got f0={self.f0}, f1={self.f1}")
        if self.duration < 10.0 / self.f0 - 1e-9:
            raise SynthError(f"duration must be >= 10/f0 = {10.0 / self.f0:g} s")
        if self.sample_rate < 20.0 * self.f1 - 1e-9:
            raise SynthError(f"sample_rate must be >= 20*f1 = {20.0 * self.f1:g} Hz")
        if self.amplitude is not None and self.amplitude <= 0:
            raise SynthError("amplitude must be > 0")

    def resolved_amplitude(self, g_ay: float | None = None) -> float:
        if self.amplitude is not None:
            return self.amplitude
        if g_ay is None or g_ay <= 0:
            raise SynthError("auto amplitude needs a positive g_ay")
        return self.ay_target / g_ay

    def phase(self, t):
        """Sweep phase ``theta(t)`` in radians, ``theta(0) = 0``."""
        t = np.asarray(t, dtype=float)
        return 2 * np.pi * (self.f0 * t + 0.5 * (self.f1 - self.f0) / self.duration * t**2)

    def inst_freq(self, t):
        return self.f0 + (self.f1 - self.f0) * np.asarray(t, dtype=float) / self.duration


def chirp_steer(spec: ChirpSpec, g_ay: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sample times and steering angle ``A sin(theta(t))`` in degrees."""
    n = int(round(spec.duration * spec.sample_rate)) + 1
    t = np.arange(n) / spec.sample_rate
    return t, spec.resolved_amplitude(g_ay) * np.sin(spec.phase(t))


def _midpoints(u: np.ndarray) -> np.ndarray:
    """Cubic interpolation of ``u`` half-way between samples."""
    pad = np.concatenate([[3 * u[0] - 3 * u[1] + u[2]], u, [3 * u[-1] - 3 * u[-2] + u[-3]]])
    return (-pad[:-3] + 9 * pad[1:-2] + 9 * pad[2:-1] - pad[3:]) / 16.0


def simulate(
    params: VehicleParams,
    steer: tuple[np.ndarray, np.ndarray],
    spec: ChirpSpec | None = None,
    noise: dict[str, float] | None = None,
    seed: int | None = None,
    variant_id: str = "synthetic",
) -> MeasurementRun:
    """Integrate the roll model with fixed-step RK4 at the steer sampling rate.

    ``noise`` maps channel names to additive Gaussian noise standard
    deviations; the generator is seeded with ``seed``.

    Raises
    ------
    SynthError
        If the steering input is not uniformly sampled or the step is too
        large for stable integration of the model.
    """
    t, delta = (np.asarray(a, dtype=float) for a in steer)
    if t.shape != delta.shape or t.ndim != 1 or t.size < 4:
        raise SynthError("steer must be two equal-length 1-D arrays with at least 4 samples")
    dt = np.diff(t)
    h = float(dt[0])
    if h <= 0 or np.any(np.abs(dt - h) > 1e-9 * max(1.0, abs(t[-1]))):
        raise SynthError("steering input must be uniformly sampled")
    wn = params.omega_n
    rates = [abs(complex(-params.zeta * wn, wn * math.sqrt(1 - params.zeta**2)))]
    if params.tau_lat > 0:
        rates.append(1.0 / params.tau_lat)
    if max(rates) * h > _STABILITY_LIMIT:
        raise SynthError(
            f"integration step {h:g} s too large: |lambda h| = {max(rates) * h:.2f} exceeds {_STABILITY_LIMIT}"
        )

    k, g, tau, z = params.k, params.g_ay, params.tau_lat, params.zeta
    lag = tau > 0

    def rhs(x, u):
        ay, phi, p = x
        ay_in = ay if lag else g * u
        d_ay = (g * u - ay) / tau if lag else 0.0
        return np.array([d_ay, p, wn * wn * (k * ay_in - phi) - 2 * z * wn * p])

    mid = _midpoints(delta)
    n = t.size
    X = np.zeros((n, 3))
    x = np.array([g * delta[0] if not lag else 0.0, 0.0, 0.0])
    X[0] = x
    for i in range(n - 1):
        u0, um, u1 = delta[i], mid[i], delta[i + 1]
        k1 = rhs(x, u0)
        k2 = rhs(x + 0.5 * h * k1, um)
        k3 = rhs(x + 0.5 * h * k2, um)
        k4 = rhs(x + h * k3, u1)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        X[i + 1] = x
    ay = X[:, 0] if lag else g * delta
    phi, phi_dot = X[:, 1], X[:, 2]
    phi_ddot = wn * wn * (k * ay - phi) - 2 * z * wn * phi_dot
    m_h = params.c_t * delta + params.d_t * np.gradient(delta, h, edge_order=2)
    channels = {"delta_h": delta, "m_h": m_h, "a_y": ay, "phi": phi, "phi_dot": phi_dot, "phi_ddot": phi_ddot}
    if not all(np.all(np.isfinite(c)) for c in channels.values()):
        raise SynthError("simulation diverged (non-finite state)")
    if noise:
        rng = np.random.default_rng(seed)
        for name in sorted(noise):
            if name not in channels:
                raise SynthError(f"unknown noise channel {name!r}")
            channels[name] = channels[name] + rng.normal(0.0, noise[name], size=n)
    return validate_run(MeasurementRun(
        variant_id=variant_id,
        v=spec.v if spec is not None else math.nan,
        ay_target=spec.ay_target if spec is not None else math.nan,
        sample_rate=1.0 / h,
        t=t,
        delta_h=channels["delta_h"],
        m_h=channels["m_h"],
        a_y=channels["a_y"],
        phi=channels["phi"],
        phi_dot=channels["phi_dot"],
        phi_ddot=channels["phi_ddot"],
    ))


def synth_run(params: VehicleParams, spec: ChirpSpec | None = None, **kw) -> MeasurementRun:
    """Chirp plus simulation in one call."""
    spec = spec or ChirpSpec()
    return simulate(params, chirp_steer(spec, params.g_ay), spec, **kw)


def analytic_tf(params: VehicleParams, input: str, output_order: int, freqs) -> FrequencyResponse:
    """Exact response from ``input`` to the ``output_order``-th roll derivative."""
    if input not in INPUTS:
        raise SynthError(f"unknown input {input!r}")
    if output_order not in (0, 1, 2):
        raise SynthError(f"output order must be 0, 1 or 2, got {output_order}")
    f = np.asarray(freqs, dtype=float)
    jw = 2j * np.pi * f
    wn = params.omega_n
    g_ay_phi = params.k * wn**2 / (wn**2 + jw**2 + 2 * params.zeta * wn * jw)
    g_d_ay = params.g_ay / (1 + jw * params.tau_lat)
    if input == "a_y":
        g = g_ay_phi
    elif input == "delta_H":
        g = g_d_ay * g_ay_phi
    else:
        g = g_d_ay * g_ay_phi / (params.c_t + jw * params.d_t)
    return FrequencyResponse(input, ROLL_OUTPUTS[output_order], f, g * jw**output_order, variant_id="analytic")


def second_order_peak(f_n: float, zeta: float) -> tuple[float, float]:
    """Peak frequency and peak/DC magnification of a second-order low-pass."""
    if zeta >= 1 / math.sqrt(2):
        return 0.0, 1.0
    return f_n * math.sqrt(1 - 2 * zeta**2), 1.0 / (2 * zeta * math.sqrt(1 - zeta**2))


# ---------------------------------------------------------------------------
# key=value parameter files
# ---------------------------------------------------------------------------

def _parse_keyvalue(text: str, source: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise SynthError(f"{source}: line {lineno}: expected key=value")
        out[key.strip()] = value.strip()
    return out


def params_from_text(text: str, source: str = "<params>") -> VehicleParams:
    raw = _parse_keyvalue(text, source)
    names = {f.name for f in fields(VehicleParams)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise SynthError(f"{source}: unknown parameter(s) {', '.join(unknown)}")
    try:
        return VehicleParams(**{k: float(v) for k, v in raw.items()})
    except ValueError as exc:
        raise SynthError(f"{source}: {exc}") from None


def load_params(path: str | Path) -> VehicleParams:
    path = Path(path)
    return params_from_text(path.read_text(encoding="utf-8"), str(path))


def save_params(params: VehicleParams, path: str | Path, comment: str = "") -> None:
    lines = [f"# {comment}"] if comment else []
    lines += [f"{k}={v!r}" for k, v in asdict(params).items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def preset_names() -> list[str]:
    root = resources.files("rolldyn.data.presets")
    return sorted(p.name[: -len(".txt")] for p in root.iterdir() if p.name.endswith(".txt"))


def load_preset(name: str) -> VehicleParams:
    res = resources.files("rolldyn.data.presets").joinpath(f"{name}.txt")
    if not res.is_file():
        raise SynthError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return params_from_text(res.read_text(encoding="utf-8"), f"preset {name}")


# sporty to soft; used for ordering checks of the rating models
VALIDATION_PRESETS = ("supersport", "coupe", "sedan", "sports-suv", "luxury")
