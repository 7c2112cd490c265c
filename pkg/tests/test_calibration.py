import math

import numpy as np
import pytest

from phi4lab.calibration import (
    EXACT_TOLERANCES,
    SUITES,
    SuiteResult,
    a6_constant,
    ensemble,
    exact_identities,
    run_suites,
)
from phi4lab.lattice import Lattice, rfft3


@pytest.mark.parametrize("N,M", [(2, 1.0), (3, 1.0), (2, 2.0)])
def test_exact_identities_hold(N, M):
    errs = exact_identities(N, M)
    assert set(errs) == set(EXACT_TOLERANCES)
    for k, v in errs.items():
        assert v <= EXACT_TOLERANCES[k], k


def test_ensemble_is_mesh_independent():
    # The same trigonometric polynomial sampled on nested meshes agrees at shared sites.
    coarse = ensemble(Lattice(3, 1.0), 5, seed=2)
    fine = ensemble(Lattice(4, 1.0), 5, seed=2)
    np.testing.assert_allclose(fine[:, ::2, ::2, ::2], coarse, atol=1e-10)
    assert np.array_equal(ensemble(Lattice(3, 1.0), 5, seed=2), coarse)


def test_ensemble_is_band_limited():
    lat = Lattice(3, 1.0)
    F = ensemble(lat, 3, seed=0)
    hat = np.abs(rfft3(F))
    k = np.sqrt(np.sum(np.stack(np.meshgrid(*[np.fft.fftfreq(lat.n_side, lat.eps)] * 2, np.fft.rfftfreq(lat.n_side, lat.eps), indexing="ij")) ** 2, axis=0))
    assert hat[:, k > 3.5 + 1e-9].max() < 1e-10 * hat.max()


def test_suite_result_logic():
    r = SuiteResult("x", {3: 1.0, 4: 1.5, 5: 3.9}, 4.0)
    assert r.drift == pytest.approx(3.9) and r.passed
    assert not SuiteResult("x", {3: 1.0, 4: 4.5}, 4.0).passed
    assert not SuiteResult("x", {3: 1.0, 4: math.nan}, 4.0).passed
    assert SuiteResult("x", {3: 1.0, 4: 1.0}, None, 1.0).passed
    assert not SuiteResult("x", {3: 0.0, 4: 1e-3}, 4.0).passed
    rows = r.rows()
    assert [row["N"] for row in rows] == [3, 4, 5]
    assert rows[0]["eps"] == 0.125


def test_a6_constant_is_finite_and_positive():
    c = a6_constant(Lattice(3, 1.0))
    assert 0 < c < math.inf


@pytest.fixture(scope="module")
def coarse_suites():
    return {r.name: r for r in run_suites((3, 4), n_fields=20)}


def test_all_suites_reported(coarse_suites):
    assert set(coarse_suites) == {s.name for s in SUITES}


@pytest.mark.parametrize("name", [s.name for s in SUITES])
def test_suite_constants_are_stable(coarse_suites, name):
    r = coarse_suites[name]
    assert all(np.isfinite(list(r.constants.values())))
    assert r.passed, r.constants


@pytest.mark.parametrize("name", ["A3_interpolation", "A6_hoelder", "A11_block_count"])
def test_exact_suites_have_unit_constant(coarse_suites, name):
    assert max(coarse_suites[name].constants.values()) <= 1.0 + 1e-12
