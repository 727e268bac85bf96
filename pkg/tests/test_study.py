import numpy as np
import pytest

from rolldyn import study
from rolldyn.charvals import CATALOG, CvKey


def test_bundled_fixture_is_reproducible(study_fixture):
    rebuilt = study.build_study_cvs()
    assert list(rebuilt) == list(study.STUDY_VARIANTS)
    for v in study.STUDY_VARIANTS:
        a, b = study_fixture[v], rebuilt[v]
        assert a.sources == b.sources
        for key in CATALOG:
            assert a[key] == pytest.approx(b[key], rel=1e-9, abs=1e-12), (v, key)


def test_fixture_sources(study_fixture):
    for cvs in study_fixture.values():
        assert len(cvs.entries) == 84
        counts = {s: list(cvs.sources.values()).count(s) for s in set(cvs.sources.values())}
        assert counts["published"] == 36
        assert counts["inferred"] == 4


def test_published_values_untouched(study_fixture):
    pub = study.published_cvs()
    for v in study.STUDY_VARIANTS:
        for key in pub[v].entries:
            assert study_fixture[v][key] == pub[v][key]


def test_second_order_fit_reproduces_published_peaks():
    pub = study.published_cvs()
    for v in study.STUDY_VARIANTS:
        for u in ("M_H", "delta_H", "a_y"):
            K, fn, zeta = study.fit_second_order(pub[v], u)
            for n in range(3):
                vmax = pub[v][CvKey(u, n, "Vmax")]
                f = np.arange(0.2, 2.5 + 1e-9, 0.001)
                peak = study.second_order_gain(f, K, fn, zeta, n).max()
                assert peak == pytest.approx(vmax, rel=0.12)


def test_second_order_phase_limits():
    assert study.second_order_phase(1e-9, 1.3, 0.2) == pytest.approx(0.0, abs=1e-6)
    assert study.second_order_phase(1.3, 1.3, 0.2) == pytest.approx(-90.0)
    assert study.second_order_phase(100.0, 1.3, 0.2) == pytest.approx(-180.0, abs=0.5)


def test_matrix_files_are_lower_triangular():
    for name in ("liking", "intensity"):
        rows, cols, r = study.published_correlation(name)
        assert rows == cols[: len(rows)] or rows == cols
        iu = np.triu_indices(len(rows), 1)
        assert np.all(np.isnan(r[iu]))
