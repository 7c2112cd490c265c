"""The stationary Gaussian field X, its Wick powers, the renormalization
constants and the tree objects of the stochastic basket.

Conventions.  X solves ``dX = -Q X dt + dW`` with ``Q = m^2 - Delta_eps`` and
``E dW(x) dW(y) = eps^-3 1_{x=y} dt``, so every Fourier mode is an independent
Ornstein-Uhlenbeck process with rate ``mu(k) = m^2 + l_eps(k)`` and the
stationary covariance is ``G(x - y) = M^-3 sum_k c(k) e^{2 pi i k.(x-y)}``
with ``c(k) = 1 / (2 mu(k))``.

Wick pairings give ``E[[X^2](x) [X^2](y)] = 2 G(x-y)^2``; the constants b and
b~ below are the resulting double Fourier sums, evaluated with one FFT
convolution per time lag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import rng as _rng
from ._validation import ConstraintError, check_increasing, check_positive
from .besov import (
    DyadicPartition,
    Trajectory,
    _res_arr,
    build_partition,
    holder,
    l_inverse,
    lp_lowpass,
    lp_stack,
    mass_symbol,
    q_inverse,
    resonant,
)
from .lattice import Field, Lattice, Weight, irfft3, lp_norm, rfft3, weight_array


def stochastic_mass(m2: float) -> float:
    """Mass used for X: ``m2`` itself, or 1 when ``m2 <= 0`` (the shifted-mass scheme)."""
    return m2 if m2 > 0 else 1.0


@lru_cache(maxsize=64)
def _mu(lat: Lattice, m2: float, gamma: float) -> np.ndarray:
    return mass_symbol(lat, m2, gamma)


def _inv_at_zero(lat: Lattice, F: np.ndarray) -> float:
    """``M^-3 sum_k F(k)`` for an even symbol given on the real-FFT grid."""
    return float(lat.n_sites / lat.volume * irfft3(F, lat.n_side)[..., 0, 0, 0])


def covariance_kernel(lat: Lattice, m2: float, gamma: float = 1.0, tau: float = 0.0) -> np.ndarray:
    """``G_tau(z) = M^-3 sum_k e^{-tau mu(k)} / (2 mu(k)) e^{2 pi i k.z}``, offsets in FFT order."""
    mu = _mu(lat, stochastic_mass(m2), gamma)
    c = np.exp(-tau * mu) / (2.0 * mu)
    return lat.n_sites / lat.volume * irfft3(c, lat.n_side)


def compute_a(lat: Lattice, m2: float, gamma: float = 1.0) -> float:
    """``a = E[X(x)^2] = M^-3 sum_k 1 / (2 (m^2 + l_eps(k)))``."""
    mu = _mu(lat, stochastic_mass(m2), gamma)
    return _inv_at_zero(lat, 1.0 / (2.0 * mu))


def _resonant_weight(part: DyadicPartition) -> np.ndarray:
    """``sum_{|i-j| <= 1} phi_i(k) phi_j(k)`` on the real-FFT grid."""
    B = part.blocks
    w = np.zeros_like(B[0])
    for i in range(B.shape[0]):
        for j in range(max(0, i - 1), min(B.shape[0], i + 2)):
            w += B[i] * B[j]
    return w


def _wick2_spectrum(lat: Lattice, m2: float, gamma: float, tau: float) -> np.ndarray:
    """``S_tau(k) = F(2 G_tau^2)(k)``: cross spectrum of ``[X^2](t)`` and ``[X^2](t - tau)``."""
    G = covariance_kernel(lat, m2, gamma, tau)
    return lat.cell * rfft3(2.0 * G**2).real


def compute_b(lat: Lattice, m2: float, gamma: float = 1.0, part: DyadicPartition | None = None) -> float:
    """``b = 3 E[([X^2] o Q^-1 [X^2])(x)] = 3 M^-3 sum_k w_res(k) S_0(k) / mu(k)``."""
    part = part or build_partition(lat)
    mu = _mu(lat, stochastic_mass(m2), gamma)
    S = _wick2_spectrum(lat, m2, gamma, 0.0)
    return 3.0 * _inv_at_zero(lat, _resonant_weight(part) * S / mu)


def _b_tilde_integrand(lat, m2, gamma, w_res, tau: np.ndarray) -> np.ndarray:
    mu = _mu(lat, stochastic_mass(m2), gamma)
    out = np.empty(len(tau))
    for i, t in enumerate(tau):
        out[i] = 3.0 * _inv_at_zero(lat, w_res * np.exp(-t * mu) * _wick2_spectrum(lat, m2, gamma, t))
    return out


def compute_b_tilde(
    lat: Lattice, m2: float, t, gamma: float = 1.0, part: DyadicPartition | None = None, n_gauss: int = 8
) -> np.ndarray:
    """``b~(t) = 3 E[([X^2] o L^-1 [X^2])(t)]`` with ``L^-1`` started from zero at time 0.

    ``b~(t) = int_0^t I(tau) d tau`` with ``I(tau) = 3 M^-3 sum_k e^{-tau mu(k)} S_tau(k)``,
    integrated by Gauss-Legendre on dyadic panels refined towards ``tau = 0``.
    """
    part = part or build_partition(lat)
    w_res = _resonant_weight(part)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ConstraintError("b_tilde needs t >= 0")
    mu_max = float(_mu(lat, stochastic_mass(m2), gamma).max())
    tau_min = 1e-3 / mu_max
    t_top = float(ts.max())
    edges = [0.0]
    e = min(tau_min, t_top)
    while e < t_top:
        edges.append(e)
        e *= 2.0
    edges.append(t_top)
    edges = np.unique(np.concatenate([edges, ts]))
    x, wts = np.polynomial.legendre.leggauss(n_gauss)
    cumulative = [0.0]
    for lo, hi in zip(edges[:-1], edges[1:]):
        nodes = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        vals = _b_tilde_integrand(lat, m2, gamma, w_res, nodes)
        cumulative.append(cumulative[-1] + 0.5 * (hi - lo) * float(np.dot(wts, vals)))
    out = np.interp(ts, edges, np.asarray(cumulative))
    return out if np.ndim(t) else float(out[0])


def b_tilde_on_grid(
    lat: Lattice, m2: float, times: np.ndarray, gamma: float = 1.0, part: DyadicPartition | None = None
) -> np.ndarray:
    """``b~`` for the discrete ``L^-1`` of :func:`~phi4lab.besov.l_inverse` on a uniform grid.

    With ``X21_n = sum_{m<n} e^{-(n-1-m) h mu} (1 - e^{-h mu})/mu [X^2]_m`` the pairing gives
    ``b~(t_n) = 3 sum_{l=1}^n M^-3 sum_k w_res e^{-(l-1) h mu} (1 - e^{-h mu})/mu S_{l h}(k)``.
    """
    part = part or build_partition(lat)
    times = check_increasing(times)
    h = np.diff(times)
    if h.size and not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise ConstraintError("b_tilde_on_grid needs a uniform time grid")
    out = np.zeros(times.size)
    if times.size == 1:
        return out
    h = float(h[0])
    mu = _mu(lat, stochastic_mass(m2), gamma)
    phi1 = -np.expm1(-h * mu) / mu
    w_res = _resonant_weight(part)
    terms = np.empty(times.size - 1)
    for l in range(1, times.size):
        S = _wick2_spectrum(lat, m2, gamma, l * h)
        terms[l - 1] = 3.0 * _inv_at_zero(lat, w_res * np.exp(-(l - 1) * h * mu) * phi1 * S)
    out[1:] = np.cumsum(terms)
    return out


# Sampling.


class OUNoise:
    """Exact Ornstein-Uhlenbeck increments shared by X and the Langevin chain.

    For a step of length ``h`` the increment of mode k has variance
    ``(1 - e^{-2 h mu}) / (2 mu)``; it is built from site white noise of variance
    ``eps^-3`` drawn from the counter stream ``(seed, chain, step)``.
    """

    def __init__(self, lat: Lattice, m2: float, seed: int, chain: int = 0, gamma: float = 1.0):
        self.lat = lat
        self.mu = _mu(lat, stochastic_mass(m2), gamma)
        self.seed = int(seed)
        self.chain = int(chain)
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def _white(self, step: int, tag: int) -> np.ndarray:
        return _rng.normal(self.seed, self.chain, step, self.lat.shape, tag) * self.lat.eps ** (-1.5)

    def factors(self, h: float) -> tuple[np.ndarray, np.ndarray]:
        key = float(h)
        if key not in self._cache:
            decay = np.exp(-h * self.mu)
            amp = np.sqrt(-np.expm1(-2.0 * h * self.mu) / (2.0 * self.mu))
            self._cache[key] = (decay, amp)
        return self._cache[key]

    def initial_hat(self) -> np.ndarray:
        """Stationary draw of X in real-FFT coefficients."""
        return rfft3(self._white(0, _rng.TAG_INITIAL)) * np.sqrt(1.0 / (2.0 * self.mu))

    def increment_hat(self, step: int, h: float) -> np.ndarray:
        return rfft3(self._white(step, _rng.TAG_NOISE)) * self.factors(h)[1]


def sample_stationary_X(
    lat: Lattice, m2: float, t_grid, seed: int = 0, chain: int = 0, gamma: float = 1.0
) -> Trajectory:
    """Stationary X on ``t_grid`` by exact spectral OU updates."""
    t = check_increasing(t_grid)
    noise = OUNoise(lat, m2, seed, chain, gamma)
    Xh = noise.initial_hat()
    out = np.empty((t.size,) + lat.shape)
    out[0] = irfft3(Xh, lat.n_side)
    for n in range(1, t.size):
        h = t[n] - t[n - 1]
        Xh = noise.factors(h)[0] * Xh + noise.increment_hat(n, h)
        out[n] = irfft3(Xh, lat.n_side)
    return Trajectory(lat, t, out)


def sample_stationary_draws(lat: Lattice, m2: float, n: int, seed: int = 0, gamma: float = 1.0) -> np.ndarray:
    """``n`` independent single-time draws of X, shape ``(n, *lat.shape)``."""
    mu = _mu(lat, stochastic_mass(m2), gamma)
    amp = np.sqrt(1.0 / (2.0 * mu))
    out = np.empty((n,) + lat.shape)
    for i in range(n):
        white = _rng.normal(seed, i, 0, lat.shape, _rng.TAG_INITIAL) * lat.eps ** (-1.5)
        out[i] = irfft3(rfft3(white) * amp, lat.n_side)
    return out


def wick_square(X, a: float):
    """``[X^2] = X^2 - a``."""
    if isinstance(X, Field):
        return Field(X.lattice, X.values**2 - a)
    return np.asarray(X) ** 2 - a


def wick_cube(X, a: float):
    """``[X^3] = X^3 - 3 a X``."""
    if isinstance(X, Field):
        return Field(X.lattice, X.values**3 - 3.0 * a * X.values)
    X = np.asarray(X)
    return X**3 - 3.0 * a * X


# Trees.

TREE_NAMES = ("X", "X2", "X31", "X32", "X23", "X23t", "X33")


@dataclass(eq=False)
class StochasticBasket:
    """The renormalized objects of the basket on a reporting window starting at t = 0."""

    lattice: Lattice
    times: np.ndarray
    m2: float
    gamma: float
    a: float
    b: float
    b_tilde: np.ndarray
    X: np.ndarray
    X2: np.ndarray
    X31: np.ndarray
    X21: np.ndarray
    X32: np.ndarray
    X23: np.ndarray
    X23t: np.ndarray
    X33: np.ndarray
    W3: np.ndarray = field(repr=False, default=None)
    norm: float | None = None
    norm_terms: dict = field(default_factory=dict)

    def objects(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TREE_NAMES}

    def trajectory(self, name: str) -> Trajectory:
        return Trajectory(self.lattice, self.times, getattr(self, name))


def build_trees(
    X_traj: Trajectory,
    m2: float,
    burn_in: float,
    part: DyadicPartition | None = None,
    a: float | None = None,
    b: float | None = None,
    gamma: float = 1.0,
) -> StochasticBasket:
    """All objects of the basket on the window that follows ``burn_in`` time units.

    ``X31`` integrates ``L X31 = [X^3]`` from the start of the trajectory (the burn-in
    stands in for the integral from minus infinity); ``X21 = L^-1 [X^2]`` starts
    from zero at the window start, which is why ``X23t`` carries the
    time-dependent constant ``b~(t)``.
    """
    lat = X_traj.lattice
    part = part or build_partition(lat)
    ms = stochastic_mass(m2)
    a = compute_a(lat, m2, gamma) if a is None else a
    b = compute_b(lat, m2, gamma, part) if b is None else b
    t = X_traj.times
    n0 = int(np.searchsorted(t, t[0] + burn_in - 1e-12))
    if burn_in <= 0 or n0 >= t.size - 1:
        raise ConstraintError(
            f"insufficient burn-in: need {burn_in} time units before a reporting window, "
            f"trajectory spans {t[-1] - t[0]}"
        )
    Xall = X_traj.values
    W3_all = wick_cube(Xall, a)
    X31 = l_inverse(Trajectory(lat, t, W3_all), ms, gamma=gamma).values[n0:]
    X = Xall[n0:]
    tw = t[n0:] - t[n0]
    X2 = wick_square(X, a)
    X21 = l_inverse(Trajectory(lat, tw, X2), ms, gamma=gamma).values
    bt = b_tilde_on_grid(lat, m2, tw, gamma, part)
    A2 = lp_stack(part, X2)
    X32 = _res_arr(lp_stack(part, X), lp_stack(part, X31))
    X23 = 9.0 * _res_arr(A2, lp_stack(part, q_inverse(X2, ms, lat, gamma))) - 3.0 * b
    X23t = 9.0 * _res_arr(A2, lp_stack(part, X21)) - 3.0 * bt[:, None, None, None]
    X33 = 3.0 * _res_arr(A2, lp_stack(part, X31)) - 3.0 * b * X
    return StochasticBasket(
        lat, tw, m2, gamma, a, b, bt, X, X2, X31, X21, X32, X23, X23t, X33, W3=W3_all[n0:]
    )


def holder_time_norm(values: np.ndarray, times: np.ndarray, exponent: float, rho: np.ndarray) -> float:
    """``sup_t ||rho f(t)||_inf + sup_{s != t} ||rho (f(t) - f(s))||_inf / |t - s|^exponent``.

    The seminorm is taken over dyadic lags ``1, 2, 4, ...`` grid steps.
    """
    sup = float(lp_norm(rho * values, np.inf, 1.0).max())
    semi = 0.0
    lag = 1
    while lag < len(times):
        d = lp_norm(rho * (values[lag:] - values[:-lag]), np.inf, 1.0)
        dt = times[lag:] - times[:-lag]
        semi = max(semi, float(np.max(d / dt**exponent)))
        lag *= 2
    return sup + semi


def basket_norm(
    basket: StochasticBasket,
    part: DyadicPartition | None = None,
    weight: Weight | None = None,
    sigma: float = 0.1,
    kappa: float = 0.05,
    beta: float = 0.2,
) -> float:
    """``max(1, ...)`` over the eight powered norms of the basket; terms stored on the basket."""
    lat = basket.lattice
    part = part or build_partition(lat)
    weight = weight or Weight(1.0, 3.0)
    rho = weight_array(lat, weight, sigma)

    def ct(name: str, alpha: float) -> float:
        params = holder(alpha, weight, sigma)
        from .besov import besov_norm

        return float(np.max(besov_norm(part, getattr(basket, name), params)))

    terms = {
        "X": ct("X", -0.5 - kappa),
        "X2": ct("X2", -1.0 - kappa) ** (1 / 2),
        "X31": ct("X31", 0.5 - kappa) ** (1 / 3),
        "X31_time": holder_time_norm(basket.X31, basket.times, beta / 2, rho) ** (1 / 3),
        "X32": ct("X32", -kappa) ** (1 / 4),
        "X23": ct("X23", -kappa) ** (1 / 4),
        "X23t": ct("X23t", -kappa) ** (1 / 4),
        "X33": ct("X33", -0.5 - kappa) ** (1 / 5),
    }
    basket.norm_terms = terms
    basket.norm = max(1.0, *terms.values())
    return basket.norm


def _bump_cdf_table(n: int = 4001) -> tuple[np.ndarray, np.ndarray]:
    s = np.linspace(0.0, 1.0, n)
    inner = (s > 0) & (s < 1)
    v = np.zeros_like(s)
    v[inner] = np.exp(-1.0 / (s[inner] * (1.0 - s[inner])))
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(s))])
    return s, cdf / cdf[-1]


_BUMP_S, _BUMP_CDF = _bump_cdf_table()


def time_convolution_matrix(times: np.ndarray, width: float) -> np.ndarray:
    """Causal convolution with ``v_w(t) = w^-1 v(t/w)``, v a smooth unit-mass bump on [0, 1].

    Sample m is read as constant on ``(t_{m-1}, t_m]`` and the trajectory is
    clamped to its first value before ``t_0``; rows sum to one and the matrix
    tends to the identity as the width shrinks.
    """
    t = np.asarray(times, dtype=float)
    cdf = lambda u: np.interp(u, _BUMP_S, _BUMP_CDF)  # noqa: E731
    nt = t.size
    W = np.zeros((nt, nt))
    for n in range(nt):
        W[n, 0] += 1.0 - cdf((t[n] - t[0]) / width)
        for m in range(1, n + 1):
            lo, hi = max(t[m - 1], t[n] - width), t[m]
            if hi > lo:
                W[n, m] += cdf((t[n] - lo) / width) - cdf((t[n] - hi) / width)
    return W


def wick_cube_lowpass(
    X_traj: Trajectory, a: float, K: int, part: DyadicPartition | None = None, width: float | None = None
) -> tuple[Trajectory, Trajectory]:
    """``([X^3]_<=, [X^3]_>)`` with ``[X^3]_<= = v_K *_t Delta_{<=K} [X^3]`` and ``v_K`` of width ``2^-K``."""
    if K < 0:
        raise ConstraintError("K must be >= 0")
    lat = X_traj.lattice
    part = part or build_partition(lat)
    W3 = wick_cube(X_traj.values, a)
    low = lp_lowpass(part, W3, K)
    Wt = time_convolution_matrix(X_traj.times, 2.0 ** (-K) if width is None else width)
    low = np.tensordot(Wt, low, axes=(1, 0))
    return Trajectory(lat, X_traj.times, low), Trajectory(lat, X_traj.times, W3 - low)


def default_dt(lat: Lattice, m2: float) -> float:
    """``0.01 min(1/m^2, eps^2/12)``: resolves the fastest OU mode."""
    ms = stochastic_mass(m2)
    return 0.01 * min(1.0 / ms, lat.eps**2 / 12.0)


def check_m2(m2: float) -> float:
    return check_positive(m2, "m2")
