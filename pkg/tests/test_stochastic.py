import numpy as np
import pytest

from phi4lab._validation import ConstraintError
from phi4lab.besov import Trajectory, build_partition, l_inverse_residual, mass_symbol
from phi4lab.lattice import Lattice, Weight, irfft3, rfft3
from phi4lab.observables import batch_means, resonant_wick_sample
from phi4lab.stochastic import (
    StochasticBasket,
    b_tilde_on_grid,
    basket_norm,
    build_trees,
    compute_a,
    compute_b,
    compute_b_tilde,
    covariance_kernel,
    default_dt,
    sample_stationary_draws,
    sample_stationary_X,
    stochastic_mass,
    wick_cube,
    wick_cube_lowpass,
    wick_square,
)

# Frozen oracle values: dense real-space inversion of 2(m^2 - Delta_eps) with the
# seven-point stencil, and the resonant product built from direct-DFT block
# projectors, at m^2 = 1.
A_4 = 0.8887502386303834
B_4 = 1.5667761072237991
A_8 = 1.3925576913572375
B_8 = 1.5708305243457206
# Stationary limit b~(inf) = 3 sum_k w(k) sum_q 2 / (4 mu_q mu_{k-q} (mu_k + mu_q + mu_{k-q})),
# brute-force double mode sum on 4^3.
B_TILDE_INF_4 = 0.5222587024079298
G_8 = {(1, 0, 0): 0.7295174770118131, (2, 0, 0): 0.5629922639316812, (1, 1, 0): 0.6082384043400673, (1, 1, 1): 0.5635032859770078}


def test_a_hand_sum_on_two_site_lattice():
    # eps = 1, M = 2: l(k) in {0, 4, 8, 12} with multiplicities 1, 3, 3, 1.
    lat = Lattice(0, 2.0)
    hand = (1 / 8) * (1 / 2) * (1 + 3 / 5 + 3 / 9 + 1 / 13)
    assert hand == pytest.approx(49 / 390)
    assert compute_a(lat, 1.0) == pytest.approx(hand, rel=1e-14)


@pytest.mark.parametrize("N, a_ref, b_ref", [(2, A_4, B_4), (3, A_8, B_8)])
def test_counterterms_match_dense_oracle(N, a_ref, b_ref):
    lat = Lattice(N, 1.0)
    assert compute_a(lat, 1.0) == pytest.approx(a_ref, rel=1e-12)
    assert compute_b(lat, 1.0) == pytest.approx(b_ref, rel=1e-12)


def test_covariance_kernel_matches_dense_oracle():
    G = covariance_kernel(Lattice(3, 1.0), 1.0)
    assert G[0, 0, 0] == pytest.approx(A_8, rel=1e-12)
    for r, v in G_8.items():
        assert G[r] == pytest.approx(v, rel=1e-12)


def test_a_linear_divergence():
    a = [compute_a(Lattice(N, 1.0), 1.0) for N in (3, 4, 5)]
    assert a[0] < a[1] < a[2]
    assert 1.6 <= a[2] / a[1] <= 2.4


def test_b_log_divergence():
    b = [compute_b(Lattice(N, 1.0), 1.0) for N in (3, 4, 5, 6)]
    d = np.diff(b)
    assert np.all(d > 0)
    assert np.all(np.abs(d[1:] / d[:-1] - 1) <= 0.25)


def test_stochastic_mass_shift():
    assert stochastic_mass(2.0) == 2.0
    assert stochastic_mass(-0.5) == 1.0
    assert compute_a(Lattice(2, 1.0), -0.5) == compute_a(Lattice(2, 1.0), 1.0)


def test_a_monte_carlo_time_average():
    lat = Lattice(3, 1.0)
    tr = sample_stationary_X(lat, 1.0, np.arange(0, 400.0, 0.05), seed=1)
    series = (tr.values**2).mean(axis=(1, 2, 3))
    m, e = batch_means(series)
    assert abs(m - A_8) < 3 * e
    mean, emean = batch_means(tr.values.mean(axis=(1, 2, 3)))
    assert abs(mean) < 3 * emean


def test_zero_mode_autocorrelation():
    lat = Lattice(0, 2.0)
    h = 0.05
    tr = sample_stationary_X(lat, 1.0, np.arange(0, 4000.0, h), seed=2)
    z = tr.values.mean(axis=(1, 2, 3))
    lag = int(round(1.0 / h))
    var = np.mean(z * z)
    m, e = batch_means(z[:-lag] * z[lag:] / var)
    assert abs(m - np.exp(-1.0)) < 3 * e


def test_wick_means_and_pair_correlation():
    lat = Lattice(2, 1.0)
    X = sample_stationary_draws(lat, 1.0, 20000, seed=3)
    W2 = wick_square(X, A_4)
    W3 = wick_cube(X, A_4)
    for W in (W2, W3):
        m, e = batch_means(W.mean(axis=(1, 2, 3)))
        assert abs(m) < 3 * e
    G = covariance_kernel(lat, 1.0)
    for r in [(0, 0, 0), (1, 0, 0), (1, 1, 0), (2, 1, 1)]:
        prod = (W2 * np.roll(W2, shift=tuple(-v for v in r), axis=(1, 2, 3))).mean(axis=(1, 2, 3))
        m, e = batch_means(prod)
        assert abs(m - 2 * G[r] ** 2) < 3 * e


def test_b_monte_carlo():
    lat = Lattice(2, 1.0)
    part = build_partition(lat)
    X = sample_stationary_draws(lat, 1.0, 10000, seed=4)
    m, e = batch_means(resonant_wick_sample(part, X, A_4, 1.0))
    assert abs(m - B_4) < 3 * e


def test_b_is_lambda_free():
    import inspect

    assert "lam" not in inspect.signature(compute_b).parameters


def test_stationary_draws_variance_uses_counterterm():
    lat = Lattice(2, 1.0)
    X = sample_stationary_draws(lat, 1.0, 4000, seed=5)
    m, e = batch_means((X**2).mean(axis=(1, 2, 3)))
    assert abs(m - A_4) < 3 * e


# b~(t).


def test_b_tilde_limits_and_monotonicity():
    lat = Lattice(2, 1.0)
    t = np.array([0.0, 1e-3, 1e-2, 1e-1, 1.0, 60.0])
    bt = compute_b_tilde(lat, 1.0, t)
    assert bt[0] == 0.0
    assert np.all(np.diff(bt) > 0)
    assert bt[-1] == pytest.approx(B_TILDE_INF_4, rel=1e-9)
    assert bt[-1] < B_4
    with pytest.raises(ConstraintError):
        compute_b_tilde(lat, 1.0, -1.0)


def test_b_tilde_grid_converges_to_continuous_time():
    lat = Lattice(2, 1.0)
    for h in (0.01, 0.0025):
        times = np.arange(0, 0.5 + h / 2, h)
        grid = b_tilde_on_grid(lat, 1.0, times)
        ref = compute_b_tilde(lat, 1.0, times)
        err = np.abs(grid - ref).max()
        if h == 0.01:
            coarse = err
    assert err < coarse / 2


@pytest.mark.xfail(
    strict=True,
    reason="at desk scale |b~(t) - b| is dominated by the zero mode (m^2 = 1, M = 1) and saturates; "
    "no |log t| growth is visible on t in {1e-1, 1e-2, 1e-3}",
)
def test_b_tilde_log_growth():
    lat = Lattice(3, 1.0)
    b = compute_b(lat, 1.0)
    d = np.abs(compute_b_tilde(lat, 1.0, np.array([1e-1, 1e-2, 1e-3])) - b)
    assert d[1] / d[0] == pytest.approx(2.0, rel=0.3)
    assert d[2] / d[1] == pytest.approx(1.5, rel=0.3)


# Trees and basket.


@pytest.fixture(scope="module")
def small_basket():
    lat = Lattice(2, 1.0)
    h = 0.01
    tr = sample_stationary_X(lat, 1.0, np.arange(0, 1.5 + h / 2, h), seed=6)
    return tr, build_trees(tr, 1.0, 1.0)


def test_wick_identities_on_basket(small_basket):
    tr, bk = small_basket
    np.testing.assert_allclose(bk.X2, bk.X**2 - bk.a, atol=1e-12)


def test_x31_solves_its_equation(small_basket):
    tr, bk = small_basket
    src = Trajectory(bk.lattice, bk.times, wick_cube(bk.X, bk.a))
    assert l_inverse_residual(src, Trajectory(bk.lattice, bk.times, bk.X31), stochastic_mass(1.0)) < 1e-10
    src2 = Trajectory(bk.lattice, bk.times, bk.X2)
    assert l_inverse_residual(src2, Trajectory(bk.lattice, bk.times, bk.X21), 1.0) < 1e-10
    assert np.all(bk.X21[0] == 0.0)


def test_build_trees_requires_burn_in(small_basket):
    tr, _ = small_basket
    with pytest.raises(ConstraintError):
        build_trees(tr, 1.0, 0.0)
    with pytest.raises(ConstraintError):
        build_trees(tr, 1.0, 10.0)


def test_basket_norm_floor_and_homogeneity(small_basket):
    tr, bk = small_basket
    lat = bk.lattice
    z = np.zeros_like(bk.X)
    zero = StochasticBasket(lat, bk.times, 1.0, 1.0, bk.a, bk.b, bk.b_tilde * 0, *([z] * 8))
    assert basket_norm(zero) == 1.0
    n1 = basket_norm(bk)
    assert n1 >= 1.0
    doubled = build_trees(Trajectory(lat, tr.times, 2 * tr.values), 1.0, 1.0)
    basket_norm(doubled)
    assert doubled.norm_terms["X"] == pytest.approx(2 * bk.norm_terms["X"], rel=1e-12)


def test_basket_norm_exponential_moment_is_stable():
    lat = Lattice(1, 2.0)
    h = 0.02
    norms = []
    for s in range(200):
        tr = sample_stationary_X(lat, 1.0, np.arange(0, 0.6 + h / 2, h), seed=1000 + s)
        norms.append(basket_norm(build_trees(tr, 1.0, 0.4)))
    v = np.exp(0.01 * np.asarray(norms) ** 2)
    assert np.all(np.isfinite(v))
    assert abs(v.mean() / v[:100].mean() - 1) < 0.5


def test_wick_cube_lowpass(small_basket):
    tr, bk = small_basket
    part = build_partition(bk.lattice)
    full = Trajectory(bk.lattice, bk.times, bk.X)
    lo, hi = wick_cube_lowpass(full, bk.a, part.j_max, part, width=1e-9)
    assert np.abs(hi.values).max() < 1e-8 * np.abs(wick_cube(bk.X, bk.a)).max()
    zero = Trajectory(bk.lattice, bk.times, np.zeros_like(bk.X))
    lo0, _ = wick_cube_lowpass(zero, 0.0, 1, part)
    assert np.abs(lo0.values).max() == 0.0
    lo1, hi1 = wick_cube_lowpass(full, bk.a, 0, part)
    np.testing.assert_allclose(lo1.values + hi1.values, wick_cube(bk.X, bk.a), atol=1e-12)
    with pytest.raises(ConstraintError):
        wick_cube_lowpass(full, bk.a, -1, part)


def test_wick_cube_lowpass_bound_across_cutoffs():
    lat = Lattice(4, 1.0)
    part = build_partition(lat, 1)
    h = 0.002
    tr = sample_stationary_X(lat, 1.0, np.arange(0, 0.1 + h / 2, h), seed=7)
    bk = build_trees(tr, 1.0, 0.05, part)
    nrm = basket_norm(bk, part)
    a = bk.a
    window = Trajectory(lat, bk.times, bk.X)
    consts = []
    for K in (1, 2, 3):
        lo, _ = wick_cube_lowpass(window, a, K, part)
        consts.append(np.abs(lo.values).max() / (2.0 ** (K * 1.55) * nrm**3))
    assert max(consts) / min(consts) < 4


def test_default_dt_resolves_fastest_mode():
    lat = Lattice(3, 1.0)
    dt = default_dt(lat, 1.0)
    assert dt == pytest.approx(0.01 * lat.eps**2 / 12)
    assert dt * (mass_symbol(lat, 1.0).max() - 1.0) <= 0.01 * (1 + 1e-12)


def test_spectral_sampler_matches_site_space_euler_maruyama():
    # dX = -(m^2 - Delta) X dt + dW with site noise of variance eps^-3 dt.  Its
    # stationary variance per mode is 1 / (2 mu (1 - h mu / 2)); as h -> 0 this is
    # the spectral normalization behind compute_a.
    lat = Lattice(1, 1.0)
    eps = lat.eps
    r = np.random.default_rng(8)
    h = 0.01
    X = np.zeros(lat.shape)
    acc = []
    for i in range(40_000):
        lap = sum(np.roll(X, s, a) for a in range(3) for s in (1, -1)) - 6 * X
        X = X - h * (X - lap / eps**2) + np.sqrt(h) * eps**-1.5 * r.standard_normal(lat.shape)
        if i > 1000:
            acc.append((X**2).mean())
    m, e = batch_means(np.asarray(acc))
    mu = mass_symbol(lat, 1.0)
    weights = np.ones_like(mu)
    weights[..., 1:-1] = 2.0  # real-FFT half grid: interior planes count twice
    em = float(np.sum(weights / (2 * mu * (1 - h * mu / 2)))) / lat.volume
    assert abs(m - em) < 3 * e
    assert compute_a(lat, 1.0) == pytest.approx(float(np.sum(weights / (2 * mu))) / lat.volume, rel=1e-12)
