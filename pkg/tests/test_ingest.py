import math

import numpy as np
import pytest

from rolldyn import ingest, study, synthlab
from rolldyn.ingest import RatingsError, RunFormatError, RunValidationError

from conftest import make_run

RUN_HEADER = "# variant=x\n# v_kmh=100\n# ay_target=4\n# sample_rate=100\n"


def _write(tmp_path, text, name="run.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_missing_channel_is_reported(tmp_path):
    p = _write(tmp_path, RUN_HEADER + "t,delta_h,a_y,phi\n0,0,0,0\n0.01,0,0,0\n")
    with pytest.raises(RunFormatError, match="missing channel m_h"):
        ingest.load_run(p)


def test_synthetic_run_round_trips_bit_identically(tmp_path):
    run = synthlab.synth_run(
        synthlab.load_preset("rv-like"), synthlab.ChirpSpec(duration=100.0, f0=0.1), noise={"phi": 0.01}, seed=3
    )
    path = tmp_path / "run.csv"
    ingest.save_run(run, path)
    back = ingest.load_run(path)
    assert back == run
    for c in run.channels:
        assert np.array_equal(back.channel(c), run.channel(c))


def test_nan_sample_error_names_the_line(tmp_path):
    rows = [f"{i / 100!r},0,0,0,0" for i in range(600)]
    rows[506] = f"{506 / 100!r},0,0,nan,0"  # five header lines precede data row 0
    p = _write(tmp_path, RUN_HEADER + "t,delta_h,m_h,a_y,phi\n" + "\n".join(rows) + "\n")
    with pytest.raises((RunFormatError, RunValidationError), match="512"):
        ingest.load_run(p)


def test_uniform_run_is_accepted():
    run = make_run(np.zeros(200))
    assert ingest.validate_run(run) is run


def test_time_step_jump_is_rejected():
    run = make_run(np.zeros(10))
    t = run.t.copy()
    t[5:] += 0.01
    with pytest.raises(RunValidationError, match="non-uniform sampling"):
        ingest.validate_run(ingest.MeasurementRun(**{**run.__dict__, "t": t}))


def test_single_sample_run_is_too_short():
    with pytest.raises(RunValidationError, match="too short"):
        ingest.validate_run(make_run(np.zeros(1)))


def test_channel_aliases():
    run = make_run(np.arange(5.0))
    assert run.channel("M_H") is run.m_h
    assert run.channel("delta_H") is run.delta_h
    assert not run.has_channel("phi_dot")
    with pytest.raises(KeyError):
        run.channel("phi_dot")


def test_bundled_liking_table_has_42_entries():
    table = study.study_ratings("liking")
    assert len(table.select("liking")) == 42
    assert table.variants == list(study.STUDY_VARIANTS)
    assert table.get("mean", "RD_up", "RAH", "liking") == 7.5


def test_rating_zero_is_out_of_bounds(tmp_path):
    p = _write(tmp_path, "subject,variant,criterion,aspect,value\ns1,RV,RAL,liking,0\n")
    with pytest.raises(RatingsError, match=r"rating outside \[1,10\]"):
        ingest.load_ratings(p)


def test_duplicate_rating_is_rejected(tmp_path):
    row = "s1,RV,RAL,liking,5\n"
    p = _write(tmp_path, "subject,variant,criterion,aspect,value\n" + row + row)
    with pytest.raises(RatingsError, match="duplicate rating"):
        ingest.load_ratings(p)


def test_overall_rating_has_no_intensity(tmp_path):
    p = _write(tmp_path, "subject,variant,criterion,aspect,value\ns1,RV,OR,intensity,5\n")
    with pytest.raises(RatingsError, match="OR"):
        ingest.load_ratings(p)


def test_missing_rating_is_nan_and_skipped_in_means(tmp_path):
    p = _write(
        tmp_path,
        "subject,variant,criterion,aspect,value\ns1,RV,RAL,liking,4\ns2,RV,RAL,liking,\ns3,RV,RAL,liking,6\n",
    )
    table = ingest.load_ratings(p)
    assert math.isnan(table.get("s2", "RV", "RAL", "liking"))
    assert table.matrix("liking")[0, 0] == 5.0


def test_ratings_round_trip(tmp_path, liking):
    path = tmp_path / "r.csv"
    ingest.save_ratings(liking, path)
    assert ingest.load_ratings(path).values == liking.values


def test_repetition_ids():
    assert ingest.is_repetition("RV_rep")
    assert ingest.base_variant("RV_rep") == "RV"
    assert not ingest.is_repetition("RV")
