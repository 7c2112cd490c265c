"""Renormalized Langevin dynamics and the paracontrolled decomposition.

The chain solves ``d phi = -(Q phi + lam phi^3 + (-3 lam a + 3 lam^2 b) phi) dt + dW``
with ``Q = m^2 - Delta_eps``.  It is advanced as ``phi = X + v`` where X is the
exact OU process driven by the same noise and v solves the random ODE
``dv/dt = -Q v + N(X + v)`` by exponential Euler.  Without substeps this is
the plain exponential-Euler step for phi; substeps only refine the drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng as _rng
from ._validation import ConstraintError, NumericalAbort, check_positive
from .besov import (
    DyadicPartition,
    Trajectory,
    _prec_arr,
    besov_norm,
    build_partition,
    holder,
    l_inverse,
    localizer_split,
    lp_stack,
    mass_symbol,
    q_inverse,
    sobolev,
)
from .lattice import Lattice, Weight, gradient_array, irfft3, lp_norm, rfft3, weight_array
from .stochastic import (
    OUNoise,
    StochasticBasket,
    basket_norm,
    build_trees,
    compute_a,
    compute_b,
    default_dt,
    stochastic_mass,
)

DRIFT_GUARD = 0.1


@dataclass(frozen=True)
class Couplings:
    """Physical parameters of the chain; ``a`` and ``b`` default to the lattice sums."""

    lattice: Lattice
    m2: float
    lam: float
    gamma: float = 1.0
    a: float | None = None
    b: float | None = None

    def __post_init__(self):
        check_positive(self.lam, "lambda", strict=False)
        if not (0 < self.gamma <= 1):
            raise ConstraintError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.a is None:
            object.__setattr__(self, "a", compute_a(self.lattice, self.m2, self.gamma))
        if self.b is None:
            object.__setattr__(self, "b", compute_b(self.lattice, self.m2, self.gamma))

    @property
    def mass_sim(self) -> float:
        return stochastic_mass(self.m2)

    @property
    def linear_coefficient(self) -> float:
        """Coefficient c of the linear drift ``-c phi`` beyond ``Q phi`` (counterterm and mass shift)."""
        lam = self.lam
        return -3.0 * lam * self.a + 3.0 * lam**2 * self.b - (self.mass_sim - self.m2)

    def drift(self, phi: np.ndarray) -> np.ndarray:
        """Nonlinear part ``-lam phi^3 - c phi``."""
        return -self.lam * phi**3 - self.linear_coefficient * phi


@dataclass
class TrajectoryState:
    """State of a batch of chains: time, X and v in Fourier coefficients, step counter."""

    couplings: Couplings
    t: float
    X_hat: np.ndarray
    v_hat: np.ndarray
    step: int
    seed: int
    chain: int
    substeps_taken: int = 0

    @property
    def lattice(self) -> Lattice:
        return self.couplings.lattice

    @property
    def X(self) -> np.ndarray:
        return irfft3(self.X_hat, self.lattice.n_side)

    @property
    def v(self) -> np.ndarray:
        return irfft3(self.v_hat, self.lattice.n_side)

    @property
    def phi(self) -> np.ndarray:
        return irfft3(self.X_hat + self.v_hat, self.lattice.n_side)


class _BatchNoise(OUNoise):
    """OU increments for ``n_chains`` chains from one counter stream per step."""

    def __init__(self, lat, m2, seed, chain, gamma, n_chains):
        super().__init__(lat, m2, seed, chain, gamma)
        self.n_chains = n_chains

    def _white(self, step: int, tag: int) -> np.ndarray:
        shape = self.lat.shape if self.n_chains is None else (self.n_chains,) + self.lat.shape
        return _rng.normal(self.seed, self.chain, step, shape, tag) * self.lat.eps ** (-1.5)


def init_state(
    couplings: Couplings, seed: int = 0, chain: int = 0, n_chains: int | None = None, phi0: np.ndarray | None = None
) -> TrajectoryState:
    """Chains started with X stationary and ``phi = X`` (or ``phi = phi0``)."""
    noise = _BatchNoise(couplings.lattice, couplings.m2, seed, chain, couplings.gamma, n_chains)
    Xh = noise.initial_hat()
    vh = np.zeros_like(Xh) if phi0 is None else rfft3(np.asarray(phi0, dtype=float)) - Xh
    st = TrajectoryState(couplings, 0.0, Xh, vh, 0, seed, chain)
    st._noise = noise  # type: ignore[attr-defined]
    return st


def step_langevin(state: TrajectoryState, dt: float, guard: float = DRIFT_GUARD) -> TrajectoryState:
    """One exponential-Euler step of length ``dt`` (in place; the state is returned).

    The linear flow of Q is exact, the cubic drift is explicit and the noise
    is the exact OU increment.  If ``lam ||phi||_inf^2 dt >= guard`` the drift
    is integrated in substeps with X frozen at its left value.
    """
    if dt <= 0:
        raise ConstraintError("dt must be > 0")
    cp = state.couplings
    lat = cp.lattice
    noise: _BatchNoise = state._noise  # type: ignore[attr-defined]
    mu = noise.mu
    n = lat.n_side
    X = irfft3(state.X_hat, n)
    v = irfft3(state.v_hat, n)
    phi = X + v
    if not np.all(np.isfinite(phi)):
        raise NumericalAbort(f"non-finite field at t={state.t:.6g}, step {state.step}")
    load = cp.lam * float(np.max(phi**2)) * dt
    k = 1 if load < guard else int(math.ceil(load / guard))
    if k > 10_000:
        raise NumericalAbort(f"drift too stiff at t={state.t:.6g}: lam |phi|^2 dt = {load:.3g}")
    h = dt / k
    decay_h = np.exp(-h * mu)
    phi1_h = -np.expm1(-h * mu) / mu
    vh = state.v_hat
    for s in range(k):
        if s:
            v = irfft3(vh, n)
        vh = decay_h * vh + phi1_h * rfft3(cp.drift(X + v))
    decay, _ = noise.factors(dt)
    state.X_hat = decay * state.X_hat + noise.increment_hat(state.step + 1, dt)
    state.v_hat = vh
    state.step += 1
    state.t += dt
    state.substeps_taken += k - 1
    return state


def run_langevin(
    couplings: Couplings,
    dt: float,
    T: float,
    burn_in: float = 0.0,
    thin: int = 1,
    seed: int = 0,
    chain: int = 0,
    n_chains: int | None = None,
    observe: Callable[[float, np.ndarray, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Run chains for ``burn_in + T`` time units; return phi every ``thin`` steps after burn-in.

    Output shape ``(n_samples, n_chains, n, n, n)`` (no chain axis when ``n_chains`` is None).
    ``observe(t, phi, X)`` is called on every recorded sample when given.
    """
    state = init_state(couplings, seed, chain, n_chains)
    n_burn = int(round(burn_in / dt))
    n_run = int(round(T / dt))
    for _ in range(n_burn):
        step_langevin(state, dt)
    out = []
    for i in range(n_run):
        step_langevin(state, dt)
        if (i + 1) % thin == 0:
            phi = state.phi
            out.append(phi)
            if observe is not None:
                observe(state.t, phi, state.X)
    return np.asarray(out)


# Paracontrolled decomposition.


def y_exponents(kappa: float, sigma: float) -> tuple[float, ...]:
    """Localizer exponents mapping ``C^{-1-kappa}(rho^sigma)`` to ``C^{-3/2-kappa}(rho^0)``."""
    return (-1.5 - kappa, -1.0 - kappa, -0.5 - kappa, 0.0, sigma, 2.0 * sigma)


@dataclass
class YSolution:
    Y: np.ndarray
    L: float
    contraction: float
    iterations: int
    residual: float
    increments: list = field(default_factory=list)
    localized_fraction: float = 0.0


def solve_Y(
    basket: StochasticBasket,
    lam: float,
    part: DyadicPartition | None = None,
    weight: Weight | None = None,
    sigma: float = 0.1,
    kappa: float = 0.05,
    C_delta: float = 4.0,
    tol: float = 1e-10,
    max_iter: int = 200,
    L: float | None = None,
) -> YSolution:
    """Picard iteration of ``K: Y -> -lam X31 - L^-1[3 lam (U_> [X^2]) > Y]``.

    ``L`` is fixed by ``2^(L/2) = C_delta (1 + lam ||[X^2]||_{C_T C^{-1-kappa}(rho^sigma)})``
    unless given.  Convergence is measured in ``C_T C^{1/2-kappa}(rho^sigma)``; the
    reported contraction factor is the largest ratio of successive increments.
    """
    lat = basket.lattice
    part = part or build_partition(lat)
    weight = weight or Weight(1.0, 3.0)
    ms = stochastic_mass(basket.m2)
    x2_norm = float(np.max(besov_norm(part, basket.X2, holder(-1.0 - kappa, weight, sigma))))
    if L is None:
        L = 2.0 * math.log2(C_delta * (1.0 + lam * x2_norm))
    U_hi, _ = localizer_split(part, basket.X2, L, weight, y_exponents(kappa, sigma))
    U_blocks = lp_stack(part, U_hi)
    norm = lambda f: float(np.max(besov_norm(part, f, holder(0.5 - kappa, weight, sigma))))  # noqa: E731
    times = basket.times

    def K(Y: np.ndarray) -> np.ndarray:
        para = _prec_arr(lp_stack(part, Y), U_blocks)  # Y < U, i.e. U > Y
        src = Trajectory(lat, times, 3.0 * lam * para)
        return -lam * basket.X31 - l_inverse(src, ms, gamma=basket.gamma).values

    Y = np.zeros_like(basket.X31)
    incs: list[float] = []
    for it in range(1, max_iter + 1):
        Y_new = K(Y)
        incs.append(norm(Y_new - Y))
        Y = Y_new
        if incs[-1] <= tol * max(1.0, norm(Y)):
            break
    else:
        raise NumericalAbort(f"Y iteration did not converge in {max_iter} steps")
    ratios = [incs[i + 1] / incs[i] for i in range(len(incs) - 1) if incs[i] > 0]
    contraction = max(ratios) if ratios else 0.0
    if contraction >= 1:
        raise NumericalAbort(f"Y map is not a contraction: measured factor {contraction:.3g}")
    residual = norm(K(Y) - Y) / max(norm(Y), 1e-300)
    frac = float(np.abs(U_hi).max() / max(np.abs(basket.X2).max(), 1e-300))
    return YSolution(Y, L, contraction, it, residual, incs, frac)


@dataclass
class DecomposedRun:
    """Langevin run with its basket, Y and the remainder ``phi_rem = phi - X - Y``."""

    couplings: Couplings
    basket: StochasticBasket
    y: YSolution
    phi: np.ndarray
    phi_rem: np.ndarray
    substeps: int

    @property
    def times(self) -> np.ndarray:
        return self.basket.times


def run_decomposed(
    couplings: Couplings,
    dt: float,
    T: float,
    burn_in: float | None = None,
    seed: int = 0,
    chain: int = 0,
    part: DyadicPartition | None = None,
    weight: Weight | None = None,
    sigma: float = 0.1,
    kappa: float = 0.05,
    C_delta: float = 4.0,
) -> DecomposedRun:
    """Simulate X and phi with shared noise over ``[-burn_in, T]`` and decompose on ``[0, T]``."""
    lat = couplings.lattice
    part = part or build_partition(lat)
    burn_in = 10.0 / couplings.mass_sim if burn_in is None else burn_in
    n_burn = int(round(burn_in / dt))
    n_run = int(round(T / dt))
    state = init_state(couplings, seed, chain)
    Xs = np.empty((n_burn + n_run + 1,) + lat.shape)
    phis = np.empty_like(Xs)
    Xs[0], phis[0] = state.X, state.phi
    for i in range(1, n_burn + n_run + 1):
        step_langevin(state, dt)
        Xs[i], phis[i] = state.X, state.phi
    times = dt * np.arange(n_burn + n_run + 1) - n_burn * dt
    basket = build_trees(Trajectory(lat, times, Xs), couplings.m2, n_burn * dt, part, couplings.a, couplings.b, couplings.gamma)
    basket_norm(basket, part, weight, sigma, kappa)
    y = solve_Y(basket, couplings.lam, part, weight, sigma, kappa, C_delta)
    phi = phis[n_burn:]
    return DecomposedRun(couplings, basket, y, phi, phi - basket.X - y.Y, state.substeps_taken)


def remainder_fields(run: DecomposedRun, part: DyadicPartition | None = None):
    """``(phi_rem, psi, chi, zeta)`` on the reporting window.

    ``psi = phi_rem + Q^-1[3 lam [X^2] > phi_rem]``, ``chi = phi_rem + 3 lam X21 > phi_rem``,
    ``zeta = phi - X + lam X31``.
    """
    cp = run.couplings
    lat = cp.lattice
    part = part or build_partition(lat)
    bk = run.basket
    lam = cp.lam
    R = run.phi_rem
    Rb = lp_stack(part, R)
    para = _prec_arr(Rb, lp_stack(part, bk.X2))  # phi_rem < X2 = X2 > phi_rem
    psi = R + q_inverse(3.0 * lam * para, cp.mass_sim, lat, cp.gamma)
    chi = R + 3.0 * lam * _prec_arr(Rb, lp_stack(part, bk.X21))
    zeta = run.phi - bk.X + lam * bk.X31
    return R, psi, chi, zeta


def energy_theta(kappa: float) -> float:
    return (0.5 - 4.0 * kappa) / (1.0 - 2.0 * kappa)


def energy_report(
    run: DecomposedRun,
    weight: Weight | None = None,
    kappa: float = 0.05,
    iota: float = 0.5,
    basket_power: float = 12.0,
    part: DyadicPartition | None = None,
) -> dict[str, np.ndarray]:
    """Time series of the energy-inequality ingredients and the right-hand-side proxy.

    ``lhs`` adds the five entries with unit coefficients; the constant of the
    inequality is not known explicitly, so only the ratio ``lhs / rhs`` is monitored.
    """
    cp = run.couplings
    lat = cp.lattice
    part = part or build_partition(lat)
    weight = weight or Weight(1.0, 3.0)
    if 4.0 * weight.nu * iota <= 3.0:
        raise ConstraintError("rho^iota must lie in L^4: need 4 nu iota > 3")
    R, psi, _, _ = remainder_fields(run, part)
    eps = lat.eps
    r1 = weight_array(lat, weight, 1.0)
    r2 = r1**2
    t = run.times
    E = lp_norm(r2 * R, 2.0, eps) ** 2
    dE = np.gradient(E, t) if t.size > 1 else np.zeros_like(E)
    quartic = cp.lam * lp_norm(r1 * R, 4.0, eps) ** 4
    mass = cp.mass_sim * lp_norm(r2 * psi, 2.0, eps) ** 2
    grad = np.sum(lp_norm(r2 * gradient_array(psi, eps), 2.0, eps) ** 2, axis=0)
    hnorm = np.asarray(besov_norm(part, R, sobolev(1.0 - 2.0 * kappa, weight, 2.0))) ** 2
    lhs = 0.5 * dE + quartic + mass + grad + hnorm
    theta = energy_theta(kappa)
    lam = cp.lam
    with np.errstate(divide="ignore"):
        logt = np.abs(np.log(np.where(t > 0, t, np.nan)))
    pref = lam**3 + lam ** ((12 - theta) / (2 + theta)) * logt ** (4 / (2 + theta)) + lam**7
    rhs = pref * run.basket.norm**basket_power
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = lhs / rhs
    return {
        "t": t,
        "rem_l2": np.sqrt(E),
        "half_ddt_rem_l2sq": 0.5 * dE,
        "quartic": quartic,
        "mass": mass,
        "gradient": grad,
        "h_norm_sq": hnorm,
        "lhs": lhs,
        "rhs": rhs,
        "ratio": ratio,
    }


def trend_slope(t: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of y against t and its standard error (from batch means)."""
    nb = 10
    tb = np.array([c.mean() for c in np.array_split(t, nb)])
    yb = np.array([c.mean() for c in np.array_split(y, nb)])
    A = np.vstack([tb - tb.mean(), np.ones_like(tb)]).T
    coef, *_ = np.linalg.lstsq(A, yb, rcond=None)
    dof = max(nb - 2, 1)
    s2 = float(np.sum((yb - A @ coef) ** 2)) / dof
    se = math.sqrt(s2 / float(np.sum((tb - tb.mean()) ** 2)))
    return float(coef[0]), se


def dt_for(lat: Lattice, m2: float) -> float:
    return default_dt(lat, m2)
