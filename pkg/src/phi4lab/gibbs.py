"""Direct samplers for the lattice Gibbs measure.

The density is ``exp(-2 S(phi))`` with
``S = eps^3 sum_x [lam/4 phi^4 + c/2 phi^2 + 1/2 |grad phi|^2]`` and
``c = -3 lam a + 3 lam^2 b + m^2``; for ``gamma < 1`` the gradient energy is
replaced by ``1/2 phi (-Delta)^gamma phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from . import rng as _rng
from ._validation import ConstraintError, check_positive
from .lattice import Lattice, gradient_array, irfft3, rfft3
from .stochastic import compute_a, compute_b

ACCEPT_TARGET = (0.4, 0.6)


@dataclass(frozen=True)
class GibbsSpec:
    lattice: Lattice
    lam: float
    m2: float
    a: float | None = None
    b: float | None = None
    gamma: float = 1.0
    factor_two: bool = True

    def __post_init__(self):
        check_positive(self.lam, "lambda", strict=False)
        if not self.factor_two:
            raise ConstraintError("only the factor-2 convention exp(-2 S) is supported")
        if not (0 < self.gamma <= 1):
            raise ConstraintError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.a is None:
            object.__setattr__(self, "a", compute_a(self.lattice, self.m2, self.gamma))
        if self.b is None:
            object.__setattr__(self, "b", compute_b(self.lattice, self.m2, self.gamma))

    @property
    def quadratic_coefficient(self) -> float:
        """``-3 lam a + 3 lam^2 b + m^2``."""
        return -3.0 * self.lam * self.a + 3.0 * self.lam**2 * self.b + self.m2

    def drift(self, phi: np.ndarray) -> np.ndarray:
        """``lam phi^3 + c phi + (-Delta)^gamma phi``; the log-density gradient is ``-2 eps^3`` times this."""
        return self.lam * phi**3 + self.quadratic_coefficient * phi + kinetic(self.lattice, phi, self.gamma)


def kinetic(lat: Lattice, phi: np.ndarray, gamma: float = 1.0) -> np.ndarray:
    """``(-Delta_eps)^gamma phi``; the seven-point stencil when ``gamma == 1``."""
    if gamma == 1.0:
        e2 = lat.eps**2
        out = 6.0 * phi
        for ax in (-3, -2, -1):
            out = out - np.roll(phi, 1, axis=ax) - np.roll(phi, -1, axis=ax)
        return out / e2
    return irfft3(rfft3(phi) * lat.symbol_r**gamma, lat.n_side)


def kinetic_kernel(lat: Lattice, gamma: float) -> np.ndarray:
    """Convolution kernel of ``(-Delta_eps)^gamma`` indexed by offset (natural order)."""
    return irfft3(lat.symbol_r**gamma, lat.n_side)


def gibbs_action(spec: GibbsSpec, phi: np.ndarray) -> np.ndarray:
    """``S(phi)``; leading axes are treated as a batch."""
    lat = spec.lattice
    phi = np.asarray(phi, dtype=float)
    pot = spec.lam / 4.0 * phi**4 + spec.quadratic_coefficient / 2.0 * phi**2
    if spec.gamma == 1.0:
        kin = 0.5 * np.sum(gradient_array(phi, lat.eps) ** 2, axis=0)
    else:
        kin = 0.5 * phi * kinetic(lat, phi, spec.gamma)
    return lat.cell * np.sum(pot + kin, axis=(-3, -2, -1))


def gibbs_log_density(spec: GibbsSpec, phi) -> float:
    """Unnormalized ``log`` density ``-2 S(phi)``."""
    v = getattr(phi, "values", phi)
    out = -2.0 * gibbs_action(spec, v)
    return float(out) if np.ndim(out) == 0 else out


# Single-site Metropolis.


@numba.njit(cache=True)
def _sweep_local(phi, prop, logu, sigma, lam, c, eps):
    n = phi.shape[0]
    e3 = eps**3
    ie2 = 1.0 / eps**2
    acc = 0
    for i in range(n):
        for j in range(n):
            for k in range(n):
                old = phi[i, j, k]
                new = old + sigma * prop[i, j, k]
                nb = (
                    phi[(i + 1) % n, j, k]
                    + phi[(i - 1) % n, j, k]
                    + phi[i, (j + 1) % n, k]
                    + phi[i, (j - 1) % n, k]
                    + phi[i, j, (k + 1) % n]
                    + phi[i, j, (k - 1) % n]
                )
                d_pot = 0.25 * lam * (new**4 - old**4) + 0.5 * c * (new**2 - old**2)
                # 6 bonds touch the site: sum (new - y)^2 - (old - y)^2 over neighbors y.
                d_kin = 0.5 * ie2 * (6.0 * (new**2 - old**2) - 2.0 * (new - old) * nb)
                dS = e3 * (d_pot + d_kin)
                if logu[i, j, k] < -2.0 * dS:
                    phi[i, j, k] = new
                    acc += 1
    return acc


@numba.njit(cache=True)
def _sweep_nonlocal(phi, kphi, kern, prop, logu, sigma, lam, c, eps):
    n = phi.shape[0]
    e3 = eps**3
    k0 = kern[0, 0, 0]
    acc = 0
    for i in range(n):
        for j in range(n):
            for k in range(n):
                old = phi[i, j, k]
                d = sigma * prop[i, j, k]
                new = old + d
                d_pot = 0.25 * lam * (new**4 - old**4) + 0.5 * c * (new**2 - old**2)
                d_kin = d * kphi[i, j, k] + 0.5 * k0 * d * d
                if logu[i, j, k] < -2.0 * e3 * (d_pot + d_kin):
                    phi[i, j, k] = new
                    acc += 1
                    for a in range(n):
                        for b in range(n):
                            for cc in range(n):
                                kphi[a, b, cc] += kern[(a - i) % n, (b - j) % n, (cc - k) % n] * d
    return acc


def metropolis_sweep(
    spec: GibbsSpec, phi: np.ndarray, step_sigma: float, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    """One sweep in lexicographic site order; ``phi`` is updated in place and returned."""
    check_positive(step_sigma, "step_sigma")
    lat = spec.lattice
    prop = rng.standard_normal(lat.shape)
    logu = np.log(rng.random(lat.shape))
    return phi, _sweep(spec, phi, prop, logu, step_sigma)


def _sweep(spec: GibbsSpec, phi, prop, logu, sigma) -> float:
    lat = spec.lattice
    c = spec.quadratic_coefficient
    if spec.gamma == 1.0:
        acc = _sweep_local(phi, prop, logu, float(sigma), float(spec.lam), float(c), lat.eps)
    else:
        kern = _kernel_cached(lat, spec.gamma)
        kphi = irfft3(rfft3(phi) * lat.symbol_r**spec.gamma, lat.n_side)
        acc = _sweep_nonlocal(phi, kphi, kern, prop, logu, float(sigma), float(spec.lam), float(c), lat.eps)
    return acc / lat.n_sites


_KERNELS: dict = {}


def _kernel_cached(lat: Lattice, gamma: float) -> np.ndarray:
    key = (lat, gamma)
    if key not in _KERNELS:
        _KERNELS[key] = np.ascontiguousarray(kinetic_kernel(lat, gamma))
    return _KERNELS[key]


def site_transition_density(spec: GibbsSpec, phi: np.ndarray, site, new_value: float, step_sigma: float) -> float:
    """Density of moving ``phi[site]`` to ``new_value`` (``!= phi[site]``) in one single-site update."""
    old = float(phi[site])
    trial = phi.copy()
    trial[site] = new_value
    ratio = math.exp(min(0.0, gibbs_log_density(spec, trial) - gibbs_log_density(spec, phi)))
    q = math.exp(-0.5 * ((new_value - old) / step_sigma) ** 2) / (math.sqrt(2 * math.pi) * step_sigma)
    return q * ratio


def detailed_balance_error(spec: GibbsSpec, n_pairs: int = 50, seed: int = 0, step_sigma: float = 0.5) -> float:
    """Largest relative violation of ``pi(a) K(a, b) = pi(b) K(b, a)`` over random single-site moves."""
    lat = spec.lattice
    g = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        phi = g.standard_normal(lat.shape)
        site = tuple(int(v) for v in g.integers(0, lat.n_side, 3))
        new = float(phi[site] + step_sigma * g.standard_normal())
        psi = phi.copy()
        psi[site] = new
        lhs = gibbs_log_density(spec, phi) + math.log(site_transition_density(spec, phi, site, new, step_sigma))
        rhs = gibbs_log_density(spec, psi) + math.log(site_transition_density(spec, psi, site, float(phi[site]), step_sigma))
        worst = max(worst, abs(math.expm1(lhs - rhs)))
    return worst


@dataclass
class MetropolisRun:
    samples: np.ndarray
    step_sigma: float
    accept_rate: float
    sweeps: int


def run_metropolis(
    spec: GibbsSpec,
    n_samples: int,
    burn_in: int = 500,
    thin: int = 1,
    seed: int = 0,
    chain: int = 0,
    step_sigma: float | None = None,
    phi0: np.ndarray | None = None,
    tune: bool = True,
) -> MetropolisRun:
    """Burn in (tuning ``step_sigma`` towards 40-60 % acceptance), then record every ``thin``-th sweep."""
    lat = spec.lattice
    phi = np.zeros(lat.shape) if phi0 is None else np.array(phi0, dtype=float)
    if step_sigma is None:
        step_sigma = 0.5 / math.sqrt(2.0 * lat.cell * (6.0 / lat.eps**2 + max(spec.quadratic_coefficient, 1.0)))
    window = []
    for s in range(burn_in):
        r = _sweep(spec, phi, *_draws(lat, seed, chain, s), step_sigma)
        window.append(r)
        if tune and len(window) == 25:
            rate = float(np.mean(window))
            if not (ACCEPT_TARGET[0] <= rate <= ACCEPT_TARGET[1]):
                step_sigma *= math.exp(2.0 * (rate - 0.5))
            window = []
    out = np.empty((n_samples,) + lat.shape)
    acc = 0.0
    s = burn_in
    for i in range(n_samples):
        for _ in range(thin):
            acc += _sweep(spec, phi, *_draws(lat, seed, chain, s), step_sigma)
            s += 1
        out[i] = phi
    return MetropolisRun(out, step_sigma, acc / max(n_samples * thin, 1), s)


def _draws(lat: Lattice, seed: int, chain: int, sweep: int):
    g = _rng.stream(seed, chain, sweep, _rng.TAG_PROPOSAL)
    return g.standard_normal(lat.shape), np.log(g.random(lat.shape))


def sample_exact_gaussian(spec: GibbsSpec, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Independent draws of the ``lam = 0`` measure: mode variance ``1 / (2 (m^2 + l^gamma))``."""
    if spec.lam != 0:
        raise ConstraintError("exact Gaussian sampling needs lambda = 0")
    if spec.m2 <= 0:
        raise ConstraintError("exact Gaussian sampling needs m2 > 0")
    lat = spec.lattice
    shape = lat.shape if n is None else (n,) + lat.shape
    white = rng.standard_normal(shape) * lat.eps ** (-1.5)
    mu = spec.m2 + lat.symbol_r**spec.gamma
    return irfft3(rfft3(white) / np.sqrt(2.0 * mu), lat.n_side)


def gaussian_draws(spec: GibbsSpec, n: int, seed: int = 0) -> np.ndarray:
    """``n`` exact draws, draw i from the stream keyed by chain i."""
    lat = spec.lattice
    out = np.empty((n,) + lat.shape)
    for i in range(n):
        out[i] = sample_exact_gaussian(spec, _rng.stream(seed, i, 0, _rng.TAG_INITIAL))
    return out
