import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phi4lab._validation import ConstraintError
from phi4lab.gibbs import (
    GibbsSpec,
    _sweep,
    detailed_balance_error,
    gaussian_draws,
    gibbs_action,
    gibbs_log_density,
    kinetic,
    metropolis_sweep,
    run_metropolis,
    sample_exact_gaussian,
)
from phi4lab.lattice import Lattice, irfft3, rfft3
from phi4lab.observables import batch_means, green_two_point
from phi4lab.stochastic import compute_a


def _reference_sweep(spec, phi, prop, logu, sigma):
    # Recomputes the full action for every proposal.
    phi = phi.copy()
    acc = 0
    for idx in np.ndindex(phi.shape):
        trial = phi.copy()
        trial[idx] += sigma * prop[idx]
        dS = gibbs_action(spec, trial) - gibbs_action(spec, phi)
        if logu[idx] < -2.0 * dS:
            phi = trial
            acc += 1
    return phi, acc / phi.size


def test_log_density_basics(rng):
    spec = GibbsSpec(Lattice(2, 1.0), 1.3, 0.5)
    assert gibbs_log_density(spec, np.zeros(spec.lattice.shape)) == 0.0
    phi = rng.standard_normal(spec.lattice.shape)
    assert gibbs_log_density(spec, -phi) == pytest.approx(gibbs_log_density(spec, phi), rel=1e-13)
    batch = gibbs_log_density(spec, np.stack([phi, 2 * phi]))
    assert batch.shape == (2,)


@pytest.mark.parametrize("gamma", [1.0, 0.97])
def test_action_matches_quadratic_form(rng, gamma):
    lat = Lattice(2, 1.0)
    spec = GibbsSpec(lat, 0.8, 1.0, gamma=gamma)
    phi = rng.standard_normal(lat.shape)
    c = spec.quadratic_coefficient
    expect = lat.cell * np.sum(0.25 * spec.lam * phi**4 + 0.5 * phi * (c * phi + kinetic(lat, phi, gamma)))
    assert gibbs_action(spec, phi) == pytest.approx(expect, rel=1e-12)


def test_stencil_matches_fourier_symbol(rng):
    lat = Lattice(2, 2.0)
    phi = rng.standard_normal(lat.shape)
    np.testing.assert_allclose(kinetic(lat, phi), irfft3(rfft3(phi) * lat.symbol_r, lat.n_side), atol=1e-10)


def test_quadratic_coefficient():
    spec = GibbsSpec(Lattice(2, 1.0), 2.0, 0.5, a=0.1, b=0.2)
    assert spec.quadratic_coefficient == pytest.approx(-0.6 + 2.4 + 0.5)


def test_spec_validation():
    lat = Lattice(2, 1.0)
    with pytest.raises(ConstraintError):
        GibbsSpec(lat, -1.0, 1.0)
    with pytest.raises(ConstraintError):
        GibbsSpec(lat, 1.0, 1.0, factor_two=False)
    with pytest.raises(ConstraintError):
        GibbsSpec(lat, 1.0, 1.0, gamma=1.5)


@pytest.mark.parametrize("gamma", [1.0, 0.96])
def test_compiled_sweep_matches_reference(rng, gamma):
    lat = Lattice(1, 1.0)
    spec = GibbsSpec(lat, 1.0, 1.0, gamma=gamma)
    phi = rng.standard_normal(lat.shape)
    prop = rng.standard_normal(lat.shape)
    logu = np.log(rng.random(lat.shape))
    ref, r_ref = _reference_sweep(spec, phi, prop, logu, 0.4)
    fast = phi.copy()
    r_fast = _sweep(spec, fast, prop, logu, 0.4)
    assert r_fast == r_ref
    np.testing.assert_allclose(fast, ref, atol=1e-12)


@pytest.mark.parametrize("gamma", [1.0, 0.96])
def test_detailed_balance(gamma):
    spec = GibbsSpec(Lattice(2, 1.0), 1.0, 1.0, gamma=gamma)
    assert detailed_balance_error(spec, n_pairs=30) <= 1e-10


@given(st.floats(0.0, 3.0))
def test_tiny_steps_are_always_accepted(lam):
    spec = GibbsSpec(Lattice(1, 1.0), lam, 1.0)
    phi = np.random.default_rng(1).standard_normal(spec.lattice.shape)
    _, rate = metropolis_sweep(spec, phi, 1e-9, np.random.default_rng(2))
    assert rate == 1.0


def test_tuning_reaches_target_band():
    run = run_metropolis(GibbsSpec(Lattice(2, 1.0), 1.0, 1.0), 200, burn_in=400, seed=5)
    assert 0.3 < run.accept_rate < 0.7
    again = run_metropolis(GibbsSpec(Lattice(2, 1.0), 1.0, 1.0), 200, burn_in=400, seed=5)
    assert np.array_equal(run.samples, again.samples)


def test_free_metropolis_reproduces_a():
    lat = Lattice(2, 1.0)
    run = run_metropolis(GibbsSpec(lat, 0.0, 1.0), 6000, burn_in=500, seed=11)
    m, e = batch_means((run.samples**2).mean(axis=(1, 2, 3)))
    assert abs(m - compute_a(lat, 1.0)) < 4 * e


def test_exact_sampler_moments():
    lat = Lattice(2, 1.0)
    spec = GibbsSpec(lat, 0.0, 1.0)
    X = gaussian_draws(spec, 4000, seed=3)
    a = compute_a(lat, 1.0)
    p2 = (X**2).mean(axis=(1, 2, 3))
    assert abs(p2.mean() - a) < 4 * p2.std() / math.sqrt(p2.size)
    site = X[:, 0, 0, 0]
    kurt = np.mean(site**4) / np.mean(site**2) ** 2
    assert kurt == pytest.approx(3.0, abs=0.25)
    offsets = [(1, 0, 0), (1, 1, 0), (2, 0, 0)]
    G = green_two_point(lat, 1.0, offsets)
    for r, g in zip(offsets, G):
        c = (X * np.roll(X, tuple(-v for v in r), axis=(1, 2, 3))).mean(axis=(1, 2, 3))
        assert abs(c.mean() - g) < 4 * c.std() / math.sqrt(c.size)


def test_exact_sampler_preconditions(rng):
    lat = Lattice(2, 1.0)
    with pytest.raises(ConstraintError):
        sample_exact_gaussian(GibbsSpec(lat, 1.0, 1.0), rng)
    with pytest.raises(ConstraintError):
        sample_exact_gaussian(GibbsSpec(lat, 0.0, 0.0), rng)
    assert sample_exact_gaussian(GibbsSpec(lat, 0.0, 1.0), rng, n=3).shape == (3, 4, 4, 4)
    a = gaussian_draws(GibbsSpec(lat, 0.0, 1.0), 2, seed=1)
    assert np.array_equal(a, gaussian_draws(GibbsSpec(lat, 0.0, 1.0), 2, seed=1))
