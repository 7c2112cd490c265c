"""Dyadic analysis on the periodic lattice.

Littlewood-Paley blocks from a periodic partition of unity, weighted Besov
norms, Bony paraproducts and the commutators built from them, localizers,
the extension operator, and the heat semigroup with its elliptic and
parabolic inverses.

Every operation accepts either a :class:`~phi4lab.lattice.Field` or a raw
physical array of shape ``(..., n, n, n)``; array inputs may carry leading
batch (time) axes and give array outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from ._validation import ConstraintError, check_exponent, check_increasing
from .lattice import (
    DIM,
    Field,
    Lattice,
    Weight,
    apply_multiplier,
    irfft3,
    lp_norm,
    rfft3,
    weight_array,
)

# Bump profile: chi = 1 on [0, 1/2 - DELTA0], 0 on [1/2, inf).
DELTA0 = 1.0 / 16.0


def _smooth_step(s: np.ndarray) -> np.ndarray:
    """C-infinity step, 0 for s <= 0 and 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def chi(r: np.ndarray) -> np.ndarray:
    """Radial profile of the ball block."""
    return _smooth_step((0.5 - np.asarray(r, dtype=float)) / DELTA0)


def bump(j: int, kabs: np.ndarray) -> np.ndarray:
    """Continuum block ``phi_j(k)`` of the base partition on ``R^3``."""
    if j == -1:
        return chi(kabs)
    return chi(kabs / 2.0 ** (j + 1)) - chi(kabs / 2.0**j)


# Outer radius of the closed support of phi_0: chi(|k|/2) vanishes for |k| >= 1.
SUPPORT_RADIUS = 2.0 * 0.5


def point_evaluation_constant() -> float:
    """Constant ``c_2`` of the sampling estimate for the chosen profile.

    Block ``j`` is band limited to radius ``R 2^j``; Bernstein's inequality along
    the segment joining a site to the nearest sampling point (length at most
    ``sqrt(d) 2^(-j-J-1)``) gives ``c_2 = sqrt(d) * 2 pi R``.
    """
    return math.sqrt(DIM) * 2.0 * math.pi * SUPPORT_RADIUS


def support_offset() -> int:
    """``l`` with ``J_eps = N - l``: first block whose closed support leaves the Brillouin zone."""
    # The zone is [-2^(N-1), 2^(N-1))^3, so J_eps is the least j with R 2^j >= 2^(N-1).
    return 1 + int(math.floor(math.log2(SUPPORT_RADIUS)))


@lru_cache(maxsize=None)
def default_J() -> int:
    """Smallest J meeting both the support and the point-evaluation conditions."""
    c2 = point_evaluation_constant()
    J = support_offset()
    while c2 * 2.0 ** (-J - 1) >= 1.0:
        J += 1
    return J


def adapted_J(N: int) -> int:
    """Default J, lowered to N on lattices too coarse to host it."""
    return min(default_J(), N)


@dataclass(frozen=True, eq=False)
class DyadicPartition:
    """Periodic partition of unity ``phi_j^eps``, ``-1 <= j <= N - J``, on the real-FFT grid."""

    lattice: Lattice
    J: int
    blocks: np.ndarray = field(repr=False)

    @property
    def j_max(self) -> int:
        return self.lattice.N - self.J

    @property
    def js(self) -> range:
        return range(-1, self.j_max + 1)

    @property
    def n_blocks(self) -> int:
        return self.j_max + 2

    def multiplier(self, j: int) -> np.ndarray:
        self._check_j(j)
        return self.blocks[j + 1]

    def _check_j(self, j: int) -> None:
        if not (-1 <= j <= self.j_max):
            raise ConstraintError(f"block index {j} outside [-1, {self.j_max}]")


@lru_cache(maxsize=64)
def build_partition(lat: Lattice, J: int | None = None) -> DyadicPartition:
    """Blocks ``phi_j(k)`` for ``j < N - J`` and the complement ``1 - sum`` for ``j = N - J``."""
    if J is None:
        J = adapted_J(lat.N)
    J = int(J)
    top = lat.N - J
    ell = support_offset()
    if J < 0 or top < 0 or top > max(lat.N - ell, 0):
        raise ConstraintError(
            f"J={J} outside the admissible range 0 <= N-J <= max(N-{ell}, 0) for N={lat.N}"
        )
    k = lat.kabs_r
    blocks = [bump(j, k) for j in range(-1, top)]
    blocks.append(1.0 - chi(k / 2.0**top))
    return DyadicPartition(lat, J, np.stack(blocks))


def _arr(f) -> np.ndarray:
    if isinstance(f, Field):
        if f.domain != "physical":
            raise ConstraintError("expected a physical field")
        return f.values
    return np.asarray(f, dtype=float)


def _like(template, values: np.ndarray, lat: Lattice):
    if isinstance(template, Field):
        return Field(lat, values)
    return values


def lp_stack(part: DyadicPartition, f) -> np.ndarray:
    """All blocks of ``f`` stacked on a new leading axis (length ``n_blocks``)."""
    a = _arr(f)
    F = rfft3(a)
    n = part.lattice.n_side
    return np.stack([irfft3(F * b, n) for b in part.blocks])


def lp_block(part: DyadicPartition, f, j: int):
    """``Delta_j f = F^-1(phi_j F f)``."""
    part._check_j(j)
    return _like(f, apply_multiplier(_arr(f), part.blocks[j + 1]), part.lattice)


def lp_all(part: DyadicPartition, f) -> list:
    blocks = lp_stack(part, f)
    return [_like(f, b, part.lattice) for b in blocks]


def lp_lowpass(part: DyadicPartition, f, K: int):
    """``Delta_{<=K} f`` (all blocks with ``j <= K``)."""
    K = min(int(K), part.j_max)
    mult = part.blocks[: K + 2].sum(axis=0)
    return _like(f, apply_multiplier(_arr(f), mult), part.lattice)


@dataclass(frozen=True)
class BesovParams:
    """Regularity ``alpha``, exponents ``p, q`` in [1, inf] and weight ``rho**power``."""

    alpha: float
    p: float = np.inf
    q: float = np.inf
    weight: Weight = field(default_factory=lambda: Weight(1.0, 0.0))
    power: float = 1.0

    def __post_init__(self):
        check_exponent(self.p, "p")
        check_exponent(self.q, "q")
        if not math.isfinite(self.power):
            raise ConstraintError("weight power must be finite")


def holder(alpha: float, weight: Weight | None = None, power: float = 1.0) -> BesovParams:
    """``C^alpha = B^alpha_{inf,inf}``."""
    return BesovParams(alpha, np.inf, np.inf, weight or Weight(1.0, 0.0), power)


def sobolev(alpha: float, weight: Weight | None = None, power: float = 1.0) -> BesovParams:
    """``H^alpha = B^alpha_{2,2}``."""
    return BesovParams(alpha, 2.0, 2.0, weight or Weight(1.0, 0.0), power)


def block_norms(part: DyadicPartition, f, p: float, rho: np.ndarray | None = None) -> np.ndarray:
    """``||rho Delta_j f||_{L^p}`` for each block; shape ``(n_blocks, *batch)``."""
    blocks = lp_stack(part, f)
    if rho is not None:
        blocks = blocks * rho
    return lp_norm(blocks, p, part.lattice.eps)


def combine_blocks(norms: np.ndarray, js: Sequence[int], alpha: float, q: float) -> np.ndarray:
    scale = 2.0 ** (alpha * np.asarray(js, dtype=float))
    scale = scale.reshape((-1,) + (1,) * (norms.ndim - 1))
    terms = scale * norms
    if np.isinf(q):
        return terms.max(axis=0)
    return (terms**q).sum(axis=0) ** (1.0 / q)


def besov_norm(part: DyadicPartition, f, params: BesovParams):
    """``(sum_j 2^(alpha j q) ||rho Delta_j f||_{L^p}^q)^(1/q)``; sup over j when q is infinite."""
    rho = weight_array(part.lattice, params.weight, params.power)
    norms = block_norms(part, f, params.p, rho)
    out = combine_blocks(norms, part.js, params.alpha, params.q)
    return float(out) if out.ndim == 0 else out


# Paraproducts.  With blocks A_i = Delta_i f and B_j = Delta_j g:
#   f < g = sum_{i < j-1} A_i B_j,  f o g = sum_{|i-j| <= 1} A_i B_j.


def _prec_arr(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.zeros_like(A[0])
    low = np.zeros_like(A[0])
    for jj in range(2, A.shape[0]):
        low = low + A[jj - 2]
        out = out + low * B[jj]
    return out


def _res_arr(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    nb = A.shape[0]
    out = np.zeros_like(A[0])
    for ii in range(nb):
        for jj in range(max(0, ii - 1), min(nb, ii + 2)):
            out = out + A[ii] * B[jj]
    return out


def paraproduct_prec(part: DyadicPartition, f, g):
    """``f < g``: low frequencies of f times high frequencies of g."""
    return _like(f, _prec_arr(lp_stack(part, f), lp_stack(part, g)), part.lattice)


def paraproduct_succ(part: DyadicPartition, f, g):
    """``f > g = g < f``."""
    return _like(f, _arr(paraproduct_prec(part, _arr(g), _arr(f))), part.lattice)


def resonant(part: DyadicPartition, f, g):
    """``f o g``: products of blocks with comparable frequencies."""
    return _like(f, _res_arr(lp_stack(part, f), lp_stack(part, g)), part.lattice)


def paraproduct_all(part: DyadicPartition, f, g) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(f < g, f o g, f > g)`` as arrays, sharing one block decomposition."""
    A, B = lp_stack(part, f), lp_stack(part, g)
    return _prec_arr(A, B), _res_arr(A, B), _prec_arr(B, A)


def commutator_C(part: DyadicPartition, f, g, h):
    """``C(f, g, h) = h o (f < g) - f (h o g)``."""
    fa, ga, ha = _arr(f), _arr(g), _arr(h)
    out = _arr(resonant(part, ha, paraproduct_prec(part, fa, ga))) - fa * _arr(resonant(part, ha, ga))
    return _like(f, out, part.lattice)


def duality_defect_D(part: DyadicPartition, rho, f, g, h) -> float:
    """``D_rho(f, g, h) = <rho f, g o h> - <rho (f < g), h>``."""
    r, fa, ga, ha = _arr(rho), _arr(f), _arr(g), _arr(h)
    eps3 = part.lattice.cell
    t1 = eps3 * np.sum(r * fa * _arr(resonant(part, ga, ha)))
    t2 = eps3 * np.sum(r * _arr(paraproduct_prec(part, fa, ga)) * ha)
    return float(t1 - t2)


# Heat semigroup and inverses of Q = m^2 - Delta (or m^2 + (-Delta)^gamma).


def mass_symbol(lat: Lattice, m2: float, gamma: float = 1.0) -> np.ndarray:
    """``m^2 + l_eps(k)^gamma`` on the real-FFT grid."""
    l = lat.symbol_r
    if gamma != 1.0:
        l = l**gamma
    return m2 + l


def heat_step(f, t: float, m2: float, lat: Lattice | None = None, gamma: float = 1.0):
    """``P_t f``: multiply mode k by ``exp(-t (m^2 + l_eps(k)))``."""
    if t < 0:
        raise ConstraintError(f"heat_step needs t >= 0, got {t}")
    lat = f.lattice if isinstance(f, Field) else lat
    if t == 0:
        return _like(f, _arr(f).copy(), lat)
    mult = np.exp(-t * mass_symbol(lat, m2, gamma))
    return _like(f, apply_multiplier(_arr(f), mult), lat)


def q_inverse(f, m2: float, lat: Lattice | None = None, gamma: float = 1.0):
    """``Q^-1 f``: divide mode k by ``m^2 + l_eps(k)``."""
    lat = f.lattice if isinstance(f, Field) else lat
    if m2 <= 0:
        raise ConstraintError("q_inverse needs m2 > 0")
    return _like(f, apply_multiplier(_arr(f), 1.0 / mass_symbol(lat, m2, gamma)), lat)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time samples of a field: ``values[n]`` is the field at ``times[n]``."""

    lattice: Lattice
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = check_increasing(self.times)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (t.size,) + self.lattice.shape:
            raise ConstraintError(f"trajectory shape {v.shape} inconsistent with {t.size} times")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.times.size

    def at(self, n: int) -> Field:
        return Field(self.lattice, self.values[n])

    def window(self, start: int, stop: int | None = None) -> "Trajectory":
        return Trajectory(self.lattice, self.times[start:stop], self.values[start:stop])


def l_inverse(traj: Trajectory, m2: float, v0=None, gamma: float = 1.0) -> Trajectory:
    """Solve ``dv/dt + Q v = f``, ``v(t_0) = v0``, exactly for a source frozen on each step.

    ``v_{n+1} = e^{-h mu} v_n + (1 - e^{-h mu}) / mu * f_n`` with ``mu = m^2 + l_eps(k)``.
    """
    lat = traj.lattice
    mu = mass_symbol(lat, m2, gamma)
    n = lat.n_side
    F = rfft3(traj.values)
    V = np.empty_like(F)
    V[0] = 0.0 if v0 is None else rfft3(_arr(v0))
    dts = np.diff(traj.times)
    cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}
    for i, h in enumerate(dts):
        key = float(h)
        if key not in cache:
            e = np.exp(-h * mu)
            cache[key] = (e, -np.expm1(-h * mu) / mu)
        e, w = cache[key]
        V[i + 1] = e * V[i] + w * F[i]
    return Trajectory(lat, traj.times, irfft3(V, n))


def l_inverse_residual(source: Trajectory, v: Trajectory, m2: float, gamma: float = 1.0) -> float:
    """Relative residual of the integrated step relation of ``l_inverse``."""
    lat = source.lattice
    mu = mass_symbol(lat, m2, gamma)
    F, V = rfft3(source.values), rfft3(v.values)
    h = np.diff(source.times)[:, None, None, None]
    pred = np.exp(-h * mu) * V[:-1] - np.expm1(-h * mu) / mu * F[:-1]
    return float(np.abs(pred - V[1:]).max() / max(np.abs(V).max(), 1e-300))


# Time-mollified paraproduct used by the parabolic commutator.


def time_kernel(s: np.ndarray) -> np.ndarray:
    """Triangular unit-mass kernel ``Q(s) = 2 (1 - s)`` on ``[0, 1]``."""
    s = np.asarray(s, dtype=float)
    return np.where((s >= 0) & (s <= 1), 2.0 * (1.0 - s), 0.0)


def _kernel_cdf(s: np.ndarray) -> np.ndarray:
    s = np.clip(s, 0.0, 1.0)
    return 2.0 * s - s**2


def time_mollifier_matrix(times: np.ndarray, width: float) -> np.ndarray:
    """Matrix W with ``(W f)_n = int width^-1 Q((t_n - s)/width) f(clamp(s)) ds``.

    Sample m is read as constant on ``(t_{m-1}, t_m]``; times before ``t_0``
    see ``f(t_0)`` as in the clamped definition.
    """
    t = np.asarray(times, dtype=float)
    nt = t.size
    W = np.zeros((nt, nt))
    for n in range(nt):
        W[n, 0] += 1.0 - _kernel_cdf((t[n] - t[0]) / width)
        for m in range(1, n + 1):
            lo, hi = max(t[m - 1], t[n] - width), t[m]
            if hi > lo:
                W[n, m] += _kernel_cdf((t[n] - lo) / width) - _kernel_cdf((t[n] - hi) / width)
    return W


def paraproduct_prec_time(part: DyadicPartition, f: Trajectory, g: Trajectory) -> np.ndarray:
    """``f << g = sum_{i < j-1} Delta_i Q_i f Delta_j g`` with ``Q_i`` at time scale ``2^(-2i)``."""
    A = lp_stack(part, f.values)
    for ii, i in enumerate(part.js):
        W = time_mollifier_matrix(f.times, 2.0 ** (-2 * i))
        A[ii] = np.tensordot(W, A[ii], axes=(1, 0))
    return _prec_arr(A, lp_stack(part, g.values))


def commutator_tilde(part: DyadicPartition, f, g, h, m2: float, gamma: float = 1.0):
    """``C~(f, g, h) = h o Q^-1(f < g) - f (h o Q^-1 g)``."""
    lat = part.lattice
    fa, ga, ha = _arr(f), _arr(g), _arr(h)
    t1 = _arr(resonant(part, ha, q_inverse(_arr(paraproduct_prec(part, fa, ga)), m2, lat, gamma)))
    t2 = fa * _arr(resonant(part, ha, q_inverse(ga, m2, lat, gamma)))
    return _like(f, t1 - t2, lat)


def _check_grid(*trajs: Trajectory) -> None:
    t0 = trajs[0].times
    for tr in trajs[1:]:
        if tr.times.shape != t0.shape or not np.array_equal(tr.times, t0):
            raise ConstraintError("trajectories live on different time grids")


def commutator_bar(
    part: DyadicPartition, f: Trajectory, g: Trajectory, h: Trajectory, m2: float, gamma: float = 1.0
) -> Trajectory:
    """Parabolic commutator assembled from its four-term decomposition.

    ``h o [L^-1(f << g) - f << L^-1 g] + h o L^-1(f < g - f << g)
    + h o [f << L^-1 g - f < L^-1 g] + C(f, L^-1 g, h)``, which for lattice
    fields collapses to ``h o L^-1(f < g) - f (h o L^-1 g)``.
    """
    _check_grid(f, g, h)
    lat = part.lattice
    Linv = lambda a: l_inverse(Trajectory(lat, f.times, a), m2, gamma=gamma).values  # noqa: E731
    Lg = Linv(g.values)
    Lg_traj = Trajectory(lat, f.times, Lg)
    fpp_g = paraproduct_prec_time(part, f, g)
    f_pp_Lg = paraproduct_prec_time(part, f, Lg_traj)
    f_p_g = _prec_arr(lp_stack(part, f.values), lp_stack(part, g.values))
    f_p_Lg = _prec_arr(lp_stack(part, f.values), lp_stack(part, Lg))
    hv = h.values
    t1 = _arr(resonant(part, hv, Linv(fpp_g) - f_pp_Lg))
    t2 = _arr(resonant(part, hv, Linv(f_p_g - fpp_g)))
    t3 = _arr(resonant(part, hv, f_pp_Lg - f_p_Lg))
    t4 = _arr(commutator_C(part, f.values, Lg, hv))
    return Trajectory(lat, f.times, t1 + t2 + t3 + t4)


def commutator_bar_direct(
    part: DyadicPartition, f: Trajectory, g: Trajectory, h: Trajectory, m2: float, gamma: float = 1.0
) -> Trajectory:
    """``h o L^-1(f < g) - f (h o L^-1 g)`` evaluated directly."""
    _check_grid(f, g, h)
    lat = part.lattice
    Linv = lambda a: l_inverse(Trajectory(lat, f.times, a), m2, gamma=gamma).values  # noqa: E731
    fpg = _prec_arr(lp_stack(part, f.values), lp_stack(part, g.values))
    out = _arr(resonant(part, h.values, Linv(fpg))) - f.values * _arr(resonant(part, h.values, Linv(g.values)))
    return Trajectory(lat, f.times, out)


# Localizers.


def _sampling_step(part: DyadicPartition, j: int) -> int:
    """Spacing ``2^(-j-J)`` of the sampling grid of block j, in lattice units."""
    lat = part.lattice
    stride = 2 ** (lat.N - j - part.J)
    if lat.n_side % stride:
        raise ConstraintError(
            f"sampling grid 2^(-j-J) of block {j} does not tile the torus of side {lat.M}"
        )
    return stride


def _sampling_cube(part: DyadicPartition, j: int) -> np.ndarray:
    """Indicator of the cube ``|k_i| <= 2^(j+J-1)`` on the real-FFT grid (whole zone for the top block)."""
    lat = part.lattice
    if j == part.j_max:
        return np.ones_like(lat.kabs_r)
    half = 2.0 ** (j + part.J - 1)
    q = lat._q / lat.M
    qh = lat._q_half / lat.M
    inside = lambda a: np.abs(a) <= half + 1e-12  # noqa: E731
    return (inside(q)[:, None, None] & inside(q)[None, :, None] & inside(qh)[None, None, :]).astype(float)


def sampling_shells(part: DyadicPartition, j: int) -> np.ndarray:
    """Shell index k with ``|m| ~ 2^k`` for each sampling point m of block j (-1 for m = 0)."""
    lat = part.lattice
    stride = _sampling_step(part, j)
    n_j = lat.n_side // stride
    m1 = np.arange(n_j) - n_j // 2
    mabs = np.sqrt(m1[:, None, None] ** 2 + m1[None, :, None] ** 2 + m1[None, None, :] ** 2)
    with np.errstate(divide="ignore"):
        return np.where(mabs < 1, -1, np.floor(np.log2(np.maximum(mabs, 1)))).astype(int)


def localizer_levels(L: float, weight: Weight, power: float, r: float, k_max: int) -> np.ndarray:
    """``L_k = L + r c_k`` with ``c_k = -log2 rho(2^k)``, for ``k = -1..k_max``."""
    ks = np.arange(-1, k_max + 1)
    if np.isinf(L):
        return np.full(ks.shape, np.inf)
    c = -np.log2(weight.of_radius(2.0**ks) ** power)
    return L + r * c


def lp_coefficients(part: DyadicPartition, f, j: int) -> np.ndarray:
    """``lambda_{j,m} = Delta_j f(2^(-j-J) m)`` on the centered sampling grid of block j."""
    stride = _sampling_step(part, j)
    n = part.lattice.n_side
    blk = apply_multiplier(_arr(f), part.blocks[j + 1])
    start = (n // 2) % stride
    return blk[..., start::stride, start::stride, start::stride]


def reconstruct_block(part: DyadicPartition, coeffs: np.ndarray, j: int) -> np.ndarray:
    """Band-limited interpolation of the samples of block j back onto the lattice."""
    lat = part.lattice
    stride = _sampling_step(part, j)
    n = lat.n_side
    start = (n // 2) % stride
    comb = np.zeros(coeffs.shape[:-3] + lat.shape)
    comb[..., start::stride, start::stride, start::stride] = coeffs * float(stride) ** 3
    return apply_multiplier(comb, _sampling_cube(part, j))


def localizer_split(
    part: DyadicPartition,
    f,
    L: float,
    weight: Weight | None = None,
    exponents: tuple[float, float, float, float, float, float] = (-1.0, 0.0, 1.0, -1.0, 0.0, 1.0),
):
    """``(U_> f, U_<= f)``: keep coefficients with ``j > L_k`` on shells ``|m| ~ 2^k`` in ``U_>``.

    ``exponents = (alpha, beta, gamma, a, b, c)`` fix the ratio
    ``r = (b - a)/(beta - alpha) = (c - b)/(gamma - beta)``.
    """
    al, be, ga, a, b, c = map(float, exponents)
    if not (al < be < ga and a < b < c):
        raise ConstraintError("localizer needs alpha < beta < gamma and a < b < c")
    r1, r2 = (b - a) / (be - al), (c - b) / (ga - be)
    if not math.isclose(r1, r2, rel_tol=1e-12) or r1 <= 0:
        raise ConstraintError(f"inconsistent exponent ratios {r1} vs {r2}")
    weight = weight or Weight(1.0, 0.0)
    fa = _arr(f)
    hi = np.zeros_like(fa)
    lo = np.zeros_like(fa)
    for j in part.js:
        lam = lp_coefficients(part, fa, j)
        shells = sampling_shells(part, j)
        Lk = localizer_levels(L, weight, 1.0, r1, int(shells.max()))
        keep = j > Lk[shells + 1]
        hi = hi + reconstruct_block(part, np.where(keep, lam, 0.0), j)
        lo = lo + reconstruct_block(part, np.where(keep, 0.0, lam), j)
    return _like(f, hi, part.lattice), _like(f, lo, part.lattice)


def sequence_norm(part: DyadicPartition, f, alpha: float, weight: Weight | None = None, power: float = 1.0) -> float:
    """``sup_j 2^(alpha j) sup_m rho(2^(-j-J) m) |lambda_{j,m}|``."""
    weight = weight or Weight(1.0, 0.0)
    best = 0.0
    for j in part.js:
        lam = lp_coefficients(part, f, j)
        stride = _sampling_step(part, j)
        n_j = part.lattice.n_side // stride
        x1 = part.lattice.eps * stride * (np.arange(n_j) - n_j // 2)
        r = np.sqrt(x1[:, None, None] ** 2 + x1[None, :, None] ** 2 + x1[None, None, :] ** 2)
        val = 2.0 ** (alpha * j) * np.max(weight.of_radius(r) ** power * np.abs(lam))
        best = max(best, float(val))
    return best


# Extension operator.


def _mollifier_profile(r: np.ndarray) -> np.ndarray:
    """Radial bump ``exp(-1/(1 - r^2))`` on the unit ball (lattice units)."""
    r = np.asarray(r, dtype=float)
    inside = r < 1.0
    return np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - r**2, 1.0)), 0.0)


def extension(f: Field) -> Callable[[np.ndarray], np.ndarray]:
    """Continuum evaluator ``x -> (E f)(x)`` of a lattice field.

    ``(E f)(x) = sum_y w((x-y)/eps) f(y) / sum_y w((x-y)/eps)`` with ``w`` a
    radial bump of radius one lattice spacing.  Every point sees at least one
    site, constants are reproduced everywhere and lattice values are returned
    unchanged at lattice sites.
    """
    if not isinstance(f, Field) or f.domain != "physical":
        raise ConstraintError("extension needs a physical Field")
    lat = f.lattice
    n, eps = lat.n_side, lat.eps
    vals = f.values
    offsets = np.array([(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)])

    def evaluate(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = x / eps + n // 2
        base = np.floor(u).astype(int)
        num = np.zeros(x.shape[0])
        den = np.zeros(x.shape[0])
        for off in offsets:
            site = base + off
            w = _mollifier_profile(np.linalg.norm(u - site, axis=1))
            idx = np.mod(site, n)
            num += w * vals[idx[:, 0], idx[:, 1], idx[:, 2]]
            den += w
        return num / den

    return evaluate


def extension_to_fine(f: Field, levels: int = 1) -> Field:
    """Materialize the extension on the lattice with mesh ``eps / 2**levels``."""
    lat = f.lattice
    fine = Lattice(lat.N + levels, lat.M)
    c = fine.coords_1d
    X = np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1).reshape(-1, 3)
    vals = extension(f)(X).reshape(fine.shape)
    return Field(fine, vals)
