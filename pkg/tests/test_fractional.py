import logging
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phi4lab._validation import ConstraintError
from phi4lab.dynamics import Couplings, init_state, run_langevin, step_langevin
from phi4lab.fractional import (
    GAMMA_THRESHOLD,
    FractionalSpec,
    UncoveredRegimeWarning,
    check_gamma,
    fractional_compute_a,
    fractional_compute_b,
    fractional_gibbs_log_density,
    fractional_init,
    fractional_langevin_step,
    fractional_multiplier,
)
from phi4lab.gibbs import GibbsSpec, gaussian_draws, gibbs_log_density, run_metropolis
from phi4lab.lattice import Lattice, laplacian_symbol
from phi4lab.observables import batch_means, rp_gram, rp_test_functions
from phi4lab.stochastic import compute_a, compute_b


def test_gamma_one_is_bit_identical(rng):
    lat = Lattice(2, 1.0)
    assert fractional_compute_a(lat, 1.0, 1.0) == compute_a(lat, 1.0)
    assert fractional_compute_b(lat, 1.0, 1.0) == compute_b(lat, 1.0)
    assert np.array_equal(fractional_multiplier(lat, 1.0), laplacian_symbol(lat))
    phi = rng.standard_normal(lat.shape)
    spec = FractionalSpec(lat, 1.0, 1.0, 1.0)
    assert fractional_gibbs_log_density(spec, phi) == gibbs_log_density(GibbsSpec(lat, 1.0, 1.0), phi)
    a = fractional_init(spec, seed=3)
    b = init_state(Couplings(lat, 1.0, 1.0), seed=3)
    for _ in range(5):
        fractional_langevin_step(a, 0.01)
        step_langevin(b, 0.01)
    assert np.array_equal(a.phi, b.phi)


@given(st.floats(0.5, 1.0))
def test_multiplier_properties(gamma):
    lat = Lattice(2, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UncoveredRegimeWarning)
        m = fractional_multiplier(lat, gamma)
    l = laplacian_symbol(lat)
    assert np.all(m >= 0)
    assert m[l == 0].max() == 0
    np.testing.assert_allclose(m, l**gamma)
    # Monotone in |l|: ordering of modes is preserved.
    order = np.argsort(l, axis=None, kind="stable")
    assert np.all(np.diff(m.ravel()[order]) >= -1e-12)


def test_threshold_warning(caplog):
    with caplog.at_level(logging.WARNING, logger="phi4lab.fractional"):
        with pytest.warns(UncoveredRegimeWarning):
            check_gamma(0.9)
    assert "21/22" in caplog.text
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        check_gamma(0.96)
        check_gamma(GAMMA_THRESHOLD + 1e-9)
    with pytest.warns(UncoveredRegimeWarning):
        check_gamma(GAMMA_THRESHOLD)


@pytest.mark.parametrize("gamma", [0.0, -0.5, 1.01, math.nan])
def test_gamma_out_of_range(gamma):
    with pytest.raises(ConstraintError):
        check_gamma(gamma)


def test_counterterms_grow_as_gamma_drops():
    lat = Lattice(3, 1.0)
    gs = [1.0, 0.98, 0.96]
    a = [fractional_compute_a(lat, 1.0, g) for g in gs]
    assert a == sorted(a)
    assert a[0] == pytest.approx(1.3925576913572375, rel=1e-12)


def test_fractional_metropolis_matches_exact_gaussian():
    lat = Lattice(2, 1.0)
    spec = FractionalSpec(lat, 0.0, 1.0, 0.96)
    mh = run_metropolis(spec.gibbs(), 5000, burn_in=500, seed=4)
    m, e = batch_means((mh.samples**2).mean(axis=(1, 2, 3)))
    ex = gaussian_draws(spec.gibbs(), 4000, seed=4)
    p2 = (ex**2).mean(axis=(1, 2, 3))
    assert abs(m - p2.mean()) < 4 * math.hypot(e, p2.std() / math.sqrt(p2.size))
    assert abs(m - fractional_compute_a(lat, 1.0, 0.96)) < 4 * e


def test_fractional_langevin_stationary_variance():
    lat = Lattice(2, 1.0)
    spec = FractionalSpec(lat, 0.0, 1.0, 0.96)
    X = run_langevin(spec.couplings(), 0.01, 100.0, thin=10, seed=1, n_chains=4)
    m, e = batch_means((X**2).mean(axis=(2, 3, 4)).mean(axis=1))
    assert abs(m - fractional_compute_a(lat, 1.0, 0.96)) < 4 * e


def test_fractional_reflection_positivity():
    lat = Lattice(3, 1.0)
    spec = GibbsSpec(lat, 0.0, 1.0, gamma=0.96)
    X = gaussian_draws(spec, 1000, seed=8)
    res = rp_gram(lat, X, rp_test_functions(lat, 4, gamma=0.96), n_resamples=200)
    assert res.passes
