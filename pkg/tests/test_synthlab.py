import math

import numpy as np
import pytest
from scipy import signal

from rolldyn import spectra, synthlab
from rolldyn.synthlab import ChirpSpec, SynthError, VehicleParams, analytic_tf, simulate


def test_degenerate_sweep_is_a_pure_sine():
    spec = ChirpSpec(f0=1.0, f1=1.0, duration=20.0, amplitude=2.0)
    t, d = synthlab.chirp_steer(spec)
    assert np.allclose(d, 2.0 * np.sin(2 * np.pi * t), atol=1e-12)


def test_sweep_midpoint_frequency():
    spec = ChirpSpec(f0=0.1, f1=2.5, duration=300.0)
    mid = spec.duration / 2
    assert spec.inst_freq(mid) == pytest.approx(1.3, abs=1e-9)
    # numerical derivative of the phase agrees with the closed form
    h = 1e-4
    dtheta = (spec.phase(mid + h) - spec.phase(mid - h)) / (2 * h) / (2 * np.pi)
    assert dtheta == pytest.approx(1.3, abs=1e-9)
    assert spec.phase(0.0) == 0.0


def test_auto_amplitude():
    spec = ChirpSpec()
    assert spec.resolved_amplitude(0.13) == pytest.approx(4 / 0.13)
    _, d = synthlab.chirp_steer(spec, g_ay=0.13)
    assert np.max(np.abs(d)) == pytest.approx(4 / 0.13, rel=1e-4)
    with pytest.raises(SynthError):
        spec.resolved_amplitude(None)


@pytest.mark.parametrize("kw", [
    {"f0": 0.0}, {"f0": 2.0, "f1": 1.0}, {"duration": 50.0}, {"sample_rate": 40.0}, {"amplitude": -1.0},
])
def test_chirp_spec_invariants(kw):
    with pytest.raises(SynthError):
        ChirpSpec(**kw)


def test_vehicle_param_invariants():
    for kw in ({"f_n": 0.0}, {"zeta": 1.0}, {"g_ay": 0.0}, {"tau_lat": -0.1}, {"c_t": 0.0}):
        with pytest.raises(SynthError):
            VehicleParams(**kw)


def _constant_steer(value=10.0, seconds=40.0, fs=100.0):
    t = np.arange(int(seconds * fs) + 1) / fs
    return t, np.full_like(t, value)


def test_constant_steering_settles_to_static_gain():
    p = VehicleParams()
    run = simulate(p, _constant_steer(10.0))
    ay_ss = p.g_ay * 10.0
    assert run.a_y[-1] == pytest.approx(ay_ss, rel=1e-6)
    assert run.phi[-1] == pytest.approx(p.k * ay_ss, rel=1e-3)
    assert run.m_h[-1] == pytest.approx(p.c_t * 10.0)


def test_zero_roll_gain_gives_no_roll():
    run = simulate(VehicleParams(k=0.0), synthlab.chirp_steer(ChirpSpec(duration=100.0), 0.13))
    assert np.all(run.phi == 0.0) and np.all(run.phi_dot == 0.0)


def test_simulation_matches_independent_lti_solver():
    p = VehicleParams(f_n=1.4, zeta=0.2, k=0.19, g_ay=0.13, tau_lat=0.1, c_t=0.14, d_t=0.01)
    spec = ChirpSpec(f0=0.2, f1=2.5, duration=60.0)
    t, d = synthlab.chirp_steer(spec, p.g_ay)
    run = simulate(p, (t, d), spec)
    wn = p.omega_n
    num = np.polymul([p.k * wn**2], [p.g_ay])
    den = np.polymul([1.0, 2 * p.zeta * wn, wn**2], [p.tau_lat, 1.0])
    _, phi_ref, _ = signal.lsim((num, den), d, t)
    err = np.sqrt(np.mean((run.phi - phi_ref) ** 2)) / np.sqrt(np.mean(phi_ref**2))
    assert err < 1e-3


def test_step_halving_convergence():
    p = VehicleParams(tau_lat=0.1)
    coarse = synthlab.synth_run(p, ChirpSpec(duration=100.0, sample_rate=100.0))
    fine = synthlab.synth_run(p, ChirpSpec(duration=100.0, sample_rate=200.0))
    diff = fine.phi[::2] - coarse.phi
    assert np.sqrt(np.mean(diff**2)) < 1e-3 * np.sqrt(np.mean(coarse.phi**2))


def test_step_too_large_is_reported():
    t = np.arange(0, 60, 0.5)
    with pytest.raises(SynthError, match="too large"):
        simulate(VehicleParams(), (t, np.sin(t)))


def test_non_uniform_steer_is_rejected():
    t = np.array([0.0, 0.01, 0.03, 0.04, 0.05])
    with pytest.raises(SynthError, match="uniformly"):
        simulate(VehicleParams(), (t, np.zeros(5)))


def test_seeded_noise_is_reproducible():
    p, spec = VehicleParams(), ChirpSpec(duration=100.0)
    a = synthlab.synth_run(p, spec, noise={"phi": 0.01, "a_y": 0.05}, seed=3)
    b = synthlab.synth_run(p, spec, noise={"phi": 0.01, "a_y": 0.05}, seed=3)
    c = synthlab.synth_run(p, spec, noise={"phi": 0.01, "a_y": 0.05}, seed=4)
    assert np.array_equal(a.phi, b.phi) and np.array_equal(a.a_y, b.a_y)
    assert not np.array_equal(a.phi, c.phi)
    with pytest.raises(SynthError, match="noise channel"):
        synthlab.synth_run(p, spec, noise={"yaw": 1.0})


def test_bounded_channels(chirp_run):
    for name in ("delta_h", "m_h", "a_y", "phi", "phi_dot", "phi_ddot"):
        assert np.all(np.isfinite(getattr(chirp_run, name)))


def test_dc_limit_is_static_gain(second_order_params):
    g = analytic_tf(second_order_params, "a_y", 0, [1e-6, 1e-5])
    assert abs(g.values[0]) == pytest.approx(second_order_params.k, rel=1e-9)


def test_peak_location_and_magnification(second_order_params):
    p = second_order_params
    f = np.linspace(0.5, 2.0, 150001)
    mag = np.abs(analytic_tf(p, "a_y", 0, f).values)
    i = int(np.argmax(mag))
    f_peak = p.f_n * math.sqrt(1 - 2 * p.zeta**2)
    assert f[i] == pytest.approx(f_peak, abs=2e-5)
    assert mag[i] / p.k == pytest.approx(1 / (2 * p.zeta * math.sqrt(1 - p.zeta**2)), rel=1e-8)
    assert synthlab.second_order_peak(p.f_n, p.zeta) == pytest.approx((f_peak, mag[i] / p.k), rel=1e-6)


def test_phase_at_natural_frequency(second_order_params):
    g = analytic_tf(second_order_params, "a_y", 0, [second_order_params.f_n, 2.0])
    assert np.degrees(np.angle(g.values[0])) == pytest.approx(-90.0, abs=1e-12)


def test_chain_composition(second_order_params):
    p = second_order_params
    f = np.linspace(0.1, 3.0, 50)
    jw = 2j * np.pi * f
    g_lat = p.g_ay / (1 + jw * p.tau_lat)
    direct = analytic_tf(p, "delta_H", 0, f).values
    assert np.allclose(direct, g_lat * analytic_tf(p, "a_y", 0, f).values, rtol=0, atol=1e-15)
    torque = analytic_tf(p, "M_H", 0, f).values
    assert np.allclose(torque * (p.c_t + jw * p.d_t), direct, rtol=1e-12)
    assert np.allclose(analytic_tf(p, "a_y", 2, f).values, jw**2 * analytic_tf(p, "a_y", 0, f).values)


def test_estimate_agrees_with_closed_form(chirp_responses, second_order_params):
    for (u, n), fr in chirp_responses.items():
        band = (fr.freqs >= 0.3) & (fr.freqs <= 2.0)
        f = fr.freqs[band]
        ref = analytic_tf(second_order_params, u, n, f).values
        assert np.max(np.abs(np.abs(fr.values[band]) / np.abs(ref) - 1)) < 0.05
        dphi = np.angle(fr.values[band] / ref, deg=True)
        assert np.max(np.abs(dphi)) < 3.0


def test_params_round_trip(tmp_path):
    p = synthlab.load_preset("sedan")
    synthlab.save_params(p, tmp_path / "p.txt", comment="copy")
    assert synthlab.load_params(tmp_path / "p.txt") == p


def test_params_file_errors(tmp_path):
    with pytest.raises(SynthError, match="unknown parameter"):
        synthlab.params_from_text("f_n=1.2\nmass=1800\n")
    with pytest.raises(SynthError, match="key=value"):
        synthlab.params_from_text("f_n 1.2\n")
    with pytest.raises(SynthError, match="unknown preset"):
        synthlab.load_preset("tractor")


def test_presets_bundled():
    names = synthlab.preset_names()
    assert "rv-like" in names
    assert set(synthlab.VALIDATION_PRESETS) <= set(names)
    assert synthlab.load_preset("rv-like") == VehicleParams()
