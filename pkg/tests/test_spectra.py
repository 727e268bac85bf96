import numpy as np
import pytest

from rolldyn import spectra, synthlab
from rolldyn.spectra import FrequencyResponse, SpectraError, WelchConfig

from conftest import make_run


@pytest.fixture(scope="module")
def noise_run():
    rng = np.random.default_rng(0)
    return rng.standard_normal(12000)


def test_default_segment_gives_005_hz_bins():
    cfg = WelchConfig()
    assert cfg.nperseg(100.0) == 2000
    assert cfg.resolution(100.0) == pytest.approx(0.05)


def test_grid_covers_band_plus_one_bin(chirp_responses):
    fr = chirp_responses[("a_y", 0)]
    assert fr.freqs[0] == pytest.approx(0.15)
    assert fr.freqs[-1] == pytest.approx(2.55)
    assert np.allclose(np.diff(fr.freqs), 0.05)


def test_identity_system_is_unity(noise_run):
    fr = spectra.estimate_tf(make_run(noise_run), "a_y", "phi")
    assert np.max(np.abs(fr.values - 1.0)) < 1e-9
    assert np.allclose(fr.coherence, 1.0)


def test_static_gain_two(noise_run):
    fr = spectra.estimate_tf(make_run(noise_run, 2 * noise_run), "delta_H", "phi")
    assert np.max(np.abs(fr.values - 2.0)) < 1e-9


def test_one_sample_delay_phase(noise_run):
    y = np.concatenate([[0.0], noise_run[:-1]])
    fr = spectra.estimate_tf(make_run(noise_run, y), "a_y", "phi")
    assert spectra.phase_interp(fr, 1.0) == pytest.approx(-3.6, abs=0.05)


def test_estimate_matches_analytic_second_order(chirp_responses, second_order_params):
    fr = chirp_responses[("a_y", 0)]
    band = (fr.freqs >= 0.3 - 1e-9) & (fr.freqs <= 2.0 + 1e-9)
    exact = synthlab.analytic_tf(second_order_params, "a_y", 0, fr.freqs)
    rel = np.abs(fr.magnitude[band] / exact.magnitude[band] - 1)
    assert rel.max() < 0.05


def test_short_run_is_rejected():
    with pytest.raises(SpectraError, match="too short"):
        spectra.estimate_tf(make_run(np.ones(3000)), "a_y", "phi")


def test_zero_input_power_is_rejected():
    with pytest.raises(SpectraError, match="zero power"):
        spectra.estimate_tf(make_run(np.zeros(5000), np.ones(5000)), "a_y", "phi")


def _fr(freqs, values, output="phi"):
    return FrequencyResponse("M_H", output, np.asarray(freqs, float), np.asarray(values, complex))


def test_derivative_scales_gain_by_2pi_f():
    fr = _fr([0.25, 0.3, 0.35], [0.18, 0.18, 0.18])
    d = spectra.derive_response(fr, 1)
    assert d.output == "phi_dot"
    assert abs(spectra.eval_at(d, 0.3)) == pytest.approx(2 * np.pi * 0.3 * 0.18)
    assert abs(spectra.eval_at(d, 0.3)) == pytest.approx(0.339, abs=5e-4)


def test_derivative_composition():
    rng = np.random.default_rng(1)
    fr = _fr(np.linspace(0.2, 2.5, 47), rng.standard_normal(47) + 1j * rng.standard_normal(47))
    twice = spectra.derive_response(spectra.derive_response(fr, 1), 1)
    once = spectra.derive_response(fr, 2)
    assert np.max(np.abs(twice.magnitude - once.magnitude)) < 1e-12


def test_derivative_adds_90_degrees():
    val = np.exp(1j * np.radians(-40.0))
    d = spectra.derive_response(_fr([0.95, 1.0, 1.05], [val] * 3), 1)
    assert spectra.phase_interp(d, 1.0) == pytest.approx(50.0)


def test_derivative_beyond_phi_ddot_is_an_error():
    with pytest.raises(SpectraError):
        spectra.derive_response(_fr([0.1, 0.2], [1, 1], output="phi_ddot"), 1)


def test_eval_at_grid_point_and_midpoint():
    fr = _fr([1.0, 1.05], [1 + 0j, 3 + 0j])
    assert spectra.eval_at(fr, 1.0) == 1 + 0j
    assert spectra.eval_at(fr, 1.025) == pytest.approx(2 + 0j)


def test_eval_outside_grid_is_an_error():
    with pytest.raises(SpectraError):
        spectra.eval_at(_fr([1.0, 1.05], [1, 1]), 2.0)


def test_welch_config_validation():
    with pytest.raises(SpectraError):
        WelchConfig(window="kaiser")
    with pytest.raises(SpectraError):
        WelchConfig(overlap_fraction=1.0)
    with pytest.raises(SpectraError):
        WelchConfig(eval_band=(2.0, 1.0))


def test_response_csv_round_trip(tmp_path, chirp_responses):
    fr = chirp_responses[("M_H", 1)]
    path = tmp_path / spectra.response_filename(fr)
    spectra.save_response(fr, path)
    back = spectra.load_response(path)
    assert (back.input, back.output, back.variant_id) == (fr.input, fr.output, fr.variant_id)
    assert np.array_equal(back.freqs, fr.freqs)
    assert np.array_equal(back.values, fr.values)
    assert np.array_equal(back.coherence, fr.coherence)
