"""Monte Carlo estimators and lattice-exact identity checks.

Samples are arrays of shape ``(n_samples, n, n, n)`` ordered in simulation
time.  Error bars use batch means (20 batches) unless stated otherwise;
nonlinear statistics use the jackknife over the same batches.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import sympy

from ._validation import ConstraintError
from .besov import DyadicPartition, _res_arr, build_partition, lp_block, lp_lowpass, lp_stack, sobolev
from .gibbs import GibbsSpec, kinetic
from .lattice import Lattice, Weight, irfft3, rfft3, weight_array
from .stochastic import _inv_at_zero, _mu, _resonant_weight, covariance_kernel, stochastic_mass

N_BATCHES = 20
N_BOOTSTRAP = 1000


@dataclass(frozen=True)
class ObservableEstimate:
    value: float | complex
    stderr: float
    n_samples: int
    label: str = ""
    null: float = 0.0

    def __post_init__(self):
        if not (self.stderr >= 0):
            raise ConstraintError(f"stderr must be >= 0, got {self.stderr}")

    @property
    def z(self) -> float:
        """z-score against the null value (0 when both value and stderr vanish)."""
        d = abs(self.value - self.null)
        if self.stderr == 0:
            return 0.0 if d == 0 else math.inf
        return d / self.stderr

    def row(self) -> dict:
        v = self.value
        return {
            "label": self.label,
            "value": v.real if isinstance(v, complex) else v,
            "stderr": self.stderr,
            "n": self.n_samples,
            "z": self.z,
        }


# Error bars.


def _batches(x: np.ndarray, n_batches: int) -> np.ndarray:
    x = np.asarray(x)
    nb = min(n_batches, x.shape[0])
    if nb < 2:
        raise ConstraintError("need at least 2 samples for an error bar")
    return np.stack([c.mean(axis=0) for c in np.array_split(x, nb)])


def batch_means(x, n_batches: int = N_BATCHES) -> tuple[np.ndarray, np.ndarray]:
    """Mean along axis 0 and its batch-means standard error."""
    b = _batches(x, n_batches)
    return np.asarray(x).mean(axis=0), b.std(axis=0, ddof=1) / math.sqrt(b.shape[0])


def jackknife(fn: Callable[..., np.ndarray], *series, n_batches: int = N_BATCHES) -> tuple[np.ndarray, np.ndarray]:
    """``fn`` of the means of ``series`` with a delete-one-batch jackknife error."""
    bs = [_batches(s, n_batches) for s in series]
    nb = bs[0].shape[0]
    full = np.asarray(fn(*[np.asarray(s).mean(axis=0) for s in series]))
    tot = [b.sum(axis=0) for b in bs]
    loo = np.stack([np.asarray(fn(*[(t - b[i]) / (nb - 1) for t, b in zip(tot, bs)])) for i in range(nb)])
    err = np.sqrt((nb - 1) / nb * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return full, err


def bootstrap(
    fn: Callable[[np.ndarray], float], x: np.ndarray, n_resamples: int = N_BOOTSTRAP, seed: int = 0, n_blocks: int = 100
) -> tuple[float, float, tuple[float, float]]:
    """Block bootstrap of a statistic of the mean; returns ``(value, sigma, 95% interval)``."""
    b = _batches(x, n_blocks)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, b.shape[0], size=(n_resamples, b.shape[0]))
    stats = np.array([fn(b[i].mean(axis=0)) for i in idx])
    lo, hi = np.percentile(stats, [2.5, 97.5])
    return float(fn(np.asarray(x).mean(axis=0))), float(stats.std(ddof=1)), (float(lo), float(hi))


def _site_mean(a: np.ndarray) -> np.ndarray:
    return a.mean(axis=(-3, -2, -1))


def _offset_index(lat: Lattice, r) -> tuple[int, int, int]:
    n = lat.n_side
    return tuple(int(v) % n for v in r)


# Correlation functions.


def schwinger_two_point(samples: np.ndarray, offsets: Sequence, n_batches: int = N_BATCHES) -> list[ObservableEstimate]:
    """``E[phi(x) phi(x + r)]`` averaged over x; offsets in lattice units."""
    out = []
    for r in offsets:
        r = tuple(int(v) for v in r)
        shifted = np.roll(samples, shift=tuple(-v for v in r), axis=(-3, -2, -1))
        m, e = batch_means(_site_mean(samples * shifted), n_batches)
        out.append(ObservableEstimate(float(m), float(e), len(samples), f"S2{r}"))
    return out


def green_two_point(lat: Lattice, m2: float, offsets: Sequence, gamma: float = 1.0) -> np.ndarray:
    """Exact ``lam = 0`` two-point function ``G(r) = M^-3 sum_k e^{2 pi i k r} / (2 (m^2 + l^gamma))``."""
    G = covariance_kernel(lat, m2, gamma)
    return np.array([G[_offset_index(lat, r)] for r in offsets])


def connected_four_point_smeared(
    part: DyadicPartition, samples: np.ndarray, j: int, n_batches: int = N_BATCHES
) -> ObservableEstimate:
    """``E[(Delta_j phi)^4] - 3 E[(Delta_j phi)^2]^2`` with the base point averaged over the lattice."""
    D = np.asarray(lp_block(part, samples, j))
    m2 = _site_mean(D**2)
    m4 = _site_mean(D**4)
    v, e = jackknife(lambda a, b: b - 3.0 * a**2, m2, m4, n_batches=n_batches)
    return ObservableEstimate(float(v), float(e), len(samples), f"U4[j={j}]")


def nonempty_blocks(part: DyadicPartition) -> list[int]:
    """Blocks whose multiplier is nonzero on at least one lattice mode."""
    return [j for j in part.js if np.any(part.multiplier(j) > 0)]


def mid_band_j(part: DyadicPartition) -> int:
    """Middle non-empty block, rounding up when their number is even."""
    js = nonempty_blocks(part)
    return js[len(js) // 2]


# Test functions and cylinder functions.


def test_function(lat: Lattice, spec: str) -> np.ndarray:
    """Test function from a short description.

    ``delta:i,j,k`` unit mass at a site, ``gauss:x,y,z,s`` normalized Gaussian bump,
    ``cos:q1,q2,q3`` the plane wave ``cos(2 pi q.x / M)``.
    """
    kind, _, args = spec.partition(":")
    vals = [float(v) for v in args.split(",")] if args else []
    if kind == "delta" and len(vals) == 3:
        f = np.zeros(lat.shape)
        f[_offset_index(lat, vals)] = 1.0 / lat.cell
        return f
    if kind == "gauss" and len(vals) == 4:
        c = lat.coords_1d
        x0, y0, z0, s = vals
        d2 = (c[:, None, None] - x0) ** 2 + (c[None, :, None] - y0) ** 2 + (c[None, None, :] - z0) ** 2
        g = np.exp(-0.5 * d2 / s**2)
        return g / (lat.cell * g.sum())
    if kind == "cos" and len(vals) == 3:
        c = lat.coords_1d
        ph = (vals[0] * c[:, None, None] + vals[1] * c[None, :, None] + vals[2] * c[None, None, :]) / lat.M
        return np.cos(2 * np.pi * ph)
    raise ConstraintError(f"malformed test function {spec!r}")


def pairing(lat: Lattice, f: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """``<f, phi>_eps = eps^3 sum_x f(x) phi(x)``; batched over leading axes of phi."""
    return lat.cell * np.tensordot(phi, f, axes=([-3, -2, -1], [0, 1, 2]))


_VAR = re.compile(r"p(\d+)")


@dataclass
class Cylinder:
    """``F(phi) = Phi(<f_0, phi>, ..., <f_{n-1}, phi>)`` with ``Phi`` a polynomial in ``p0, p1, ...``."""

    expr: str
    fns: list = field(default_factory=list)
    descriptions: list = field(default_factory=list)

    def __post_init__(self):
        idx = [int(i) for i in _VAR.findall(self.expr)]
        if idx and max(idx) >= len(self.fns):
            raise ConstraintError(f"cylinder uses p{max(idx)} but only {len(self.fns)} test functions given")
        try:
            poly = sympy.sympify(self.expr, locals={f"p{i}": sympy.Symbol(f"p{i}") for i in range(len(self.fns))})
        except (sympy.SympifyError, SyntaxError) as exc:
            raise ConstraintError(f"malformed cylinder expression {self.expr!r}") from exc
        syms = [sympy.Symbol(f"p{i}") for i in range(len(self.fns))]
        if poly.free_symbols - set(syms) or not poly.is_polynomial(*syms):
            raise ConstraintError(f"cylinder expression must be a polynomial in p0..p{len(syms) - 1}: {self.expr!r}")
        self._syms = syms
        self._poly = poly

    @classmethod
    def from_descriptions(cls, lat: Lattice, expr: str, descriptions: Sequence[str]) -> "Cylinder":
        return cls(expr, [test_function(lat, d) for d in descriptions], list(descriptions))

    def to_config(self) -> dict:
        return {"expr": self.expr, "fns": list(self.descriptions)}

    @cached_property
    def _fn(self):
        return sympy.lambdify(self._syms, self._poly, "numpy")

    @cached_property
    def _grad(self):
        return [sympy.lambdify(self._syms, sympy.diff(self._poly, s), "numpy") for s in self._syms]

    def _p(self, lat: Lattice, phi: np.ndarray) -> list:
        return [pairing(lat, f, phi) for f in self.fns]

    def value(self, lat: Lattice, phi: np.ndarray) -> np.ndarray:
        p = self._p(lat, phi)
        return np.broadcast_to(self._fn(*p), np.shape(phi)[:-3]).astype(float)

    def gradient_at(self, lat: Lattice, phi: np.ndarray, site) -> np.ndarray:
        """``eps^-3 dF/dphi(x) = sum_i d_i Phi f_i(x)``."""
        p = self._p(lat, phi)
        out = np.zeros(np.shape(phi)[:-3])
        for g, f in zip(self._grad, self.fns):
            out = out + np.broadcast_to(g(*p), out.shape) * f[site]
        return out


# Identities.


def ibp_residual(
    spec: GibbsSpec, samples: np.ndarray, F: Cylinder, sites: Sequence, n_batches: int = N_BATCHES
) -> list[ObservableEstimate]:
    """``R(x) = eps^-3 E[dF/dphi(x)] - 2 E[F(phi) drift(x)]`` at each site; zero in expectation."""
    lat = spec.lattice
    drift = spec.drift(samples)
    Fv = F.value(lat, samples)
    out = []
    for s in sites:
        s = _offset_index(lat, s)
        series = F.gradient_at(lat, samples, s) - 2.0 * Fv * drift[(...,) + s]
        m, e = batch_means(series, n_batches)
        out.append(ObservableEstimate(float(m), float(e), len(samples), f"ibp{s}"))
    return out


def ibp_linear_gaussian_residual(spec: GibbsSpec, f: np.ndarray) -> np.ndarray:
    """Exact ``lam = 0`` residual for ``F = <f, phi>``: ``f - 2 (m^2 + (-Delta)^gamma)(eps^3 G * f)``."""
    if spec.lam != 0:
        raise ConstraintError("closed form needs lambda = 0")
    lat = spec.lattice
    G = covariance_kernel(lat, spec.m2, spec.gamma)
    Gf = lat.cell * irfft3(rfft3(G) * rfft3(f), lat.n_side)
    return f - 2.0 * (spec.m2 * Gf + kinetic(lat, Gf, spec.gamma))


def ds_two_point_residual(
    spec: GibbsSpec, samples: np.ndarray, x, y, n_batches: int = N_BATCHES, average: bool = True
) -> ObservableEstimate:
    """``eps^-3 1_{x=y} - 2 E[phi(y) drift(x)]``.

    With ``average`` the pair is translated over the whole lattice at fixed ``x - y``
    (exact symmetry, lower variance).
    """
    lat = spec.lattice
    x, y = _offset_index(lat, x), _offset_index(lat, y)
    drift = spec.drift(samples)
    delta = 1.0 / lat.cell if x == y else 0.0
    if average:
        r = tuple(xi - yi for xi, yi in zip(x, y))
        prod = np.roll(samples, shift=r, axis=(-3, -2, -1)) * drift
        series = delta - 2.0 * _site_mean(prod)
    else:
        series = delta - 2.0 * samples[(...,) + y] * drift[(...,) + x]
    m, e = batch_means(series, n_batches)
    return ObservableEstimate(float(m), float(e), len(samples), f"ds{x}{y}")


def ds_gaussian_residual(lat: Lattice, m2: float, gamma: float = 1.0) -> np.ndarray:
    """``2 (m^2 + (-Delta)^gamma) G - eps^-3 delta_0`` on all offsets; identically zero."""
    G = covariance_kernel(lat, m2, gamma)
    lhs = 2.0 * (m2 * G + kinetic(lat, G, gamma))
    lhs[0, 0, 0] -= 1.0 / lat.cell
    return lhs


def translation_invariance_residual(
    lat: Lattice,
    samples: np.ndarray,
    f: np.ndarray,
    shifts: Sequence,
    Phi: Callable[[np.ndarray], np.ndarray] = np.cos,
    n_batches: int = N_BATCHES,
) -> list[ObservableEstimate]:
    """``E[Phi(phi(f))] - E[Phi(phi(T_h f))]`` for lattice shifts h (in lattice units)."""
    base = Phi(pairing(lat, f, samples))
    out = []
    for h in shifts:
        h = tuple(int(v) for v in h)
        fh = np.roll(f, h, axis=(0, 1, 2))
        m, e = batch_means(base - Phi(pairing(lat, fh, samples)), n_batches)
        out.append(ObservableEstimate(float(m), float(e), len(samples), f"shift{h}"))
    return out


# Reflection positivity.


def reflect(lat: Lattice, f: np.ndarray) -> np.ndarray:
    """``(theta f)(x) = f(-x_1, x_2, x_3)``."""
    n = lat.n_side
    idx = (n - np.arange(n)) % n
    return np.asarray(f)[..., idx, :, :]


def _check_positive_half(lat: Lattice, f: np.ndarray) -> None:
    x1 = lat.coords_1d
    outside = ~(x1 > 0)
    if np.any(np.abs(f[outside]) > 0):
        raise ConstraintError("RP test functions must vanish for x_1 <= 0")


@dataclass
class GramResult:
    gram: np.ndarray
    min_eig: float
    sigma: float
    interval: tuple[float, float]

    @property
    def passes(self) -> bool:
        return self.min_eig >= -3.0 * self.sigma


def rp_gram(
    lat: Lattice, samples: np.ndarray, fns: Sequence[np.ndarray], n_resamples: int = N_BOOTSTRAP, seed: int = 0
) -> GramResult:
    """Gram matrix ``E[conj(theta F_k) F_l]`` with ``F_k = exp(i phi(f_k))`` and its smallest eigenvalue."""
    for f in fns:
        _check_positive_half(lat, f)
    u = np.stack([np.exp(1j * pairing(lat, f, samples)) for f in fns], axis=-1)
    v = np.stack([np.exp(1j * pairing(lat, reflect(lat, f), samples)) for f in fns], axis=-1)
    outer = np.conj(v)[:, :, None] * u[:, None, :]

    def min_eig(G: np.ndarray) -> float:
        return float(np.linalg.eigvalsh(0.5 * (G + G.conj().T))[0])

    G = outer.mean(axis=0)
    val, sig, ci = bootstrap(min_eig, outer, n_resamples, seed)
    return GramResult(0.5 * (G + G.conj().T), val, sig, ci)


def rp_test_functions(lat: Lattice, K: int = 4, m2: float = 1.0, gamma: float = 1.0) -> list[np.ndarray]:
    """``K`` Gaussian bumps in the positive half, scaled so ``<f_k, phi>`` has Gaussian-reference
    standard deviation ``0.5 + 0.25 k``."""
    M = lat.M
    s = max(lat.eps, M / 16)
    G_hat = rfft3(covariance_kernel(lat, m2, gamma))
    out = []
    for k in range(K):
        x1 = M / 4 + (k % 2) * M / 8 - M / 16
        x2 = (k // 2 - 0.5) * M / 4
        f = test_function(lat, f"gauss:{x1},{x2},0,{s}")
        f[~(lat.coords_1d > 0)] = 0.0
        Gf = lat.cell * irfft3(G_hat * rfft3(f), lat.n_side)
        var = lat.cell * float(np.sum(f * Gf))
        out.append(f * (0.5 + 0.25 * k) / math.sqrt(var))
    return out


# Operator product expansion form of the renormalized cube.


def ope_constant(part: DyadicPartition, m2: float, lam: float, K: int, gamma: float = 1.0) -> float:
    """``c_K = 3 lam E[(Delta_<=K X)^2] - 18 lam^2 E[[ (Delta_<=K X)^2 ] o Q^-1 [ (Delta_<=K X)^2 ]]``."""
    lat = part.lattice
    ms = stochastic_mass(m2)
    mu = _mu(lat, ms, gamma)
    low = part.blocks[: min(K, part.j_max) + 2].sum(axis=0)
    c_hat = low**2 / (2.0 * mu)
    var = _inv_at_zero(lat, c_hat)
    G = lat.n_sites / lat.volume * irfft3(c_hat, lat.n_side)
    S = lat.cell * rfft3(2.0 * G**2).real
    res = _inv_at_zero(lat, _resonant_weight(part) * S / mu)
    return 3.0 * lam * var - 18.0 * lam**2 * res


def renormalized_cube_ope(
    part: DyadicPartition,
    samples: np.ndarray,
    m2: float,
    lam: float,
    cutoffs: Sequence[int],
    F: Cylinder | None = None,
    f: np.ndarray | None = None,
    X_samples: np.ndarray | None = None,
    gamma: float = 1.0,
    n_batches: int = N_BATCHES,
    c_from_pairs: bool = False,
) -> list[ObservableEstimate]:
    """``E[F(phi) <f, (Delta_<=K phi)^3 - c_K Delta_<=K phi>]`` for each cutoff K.

    ``c_K`` comes from the Fourier sums of :func:`ope_constant`, or, with
    ``c_from_pairs``, from sample averages over the paired Gaussian field
    ``X_samples``.  The paired field is required when ``lam != 0``.
    """
    lat = part.lattice
    if lam != 0 and X_samples is None:
        raise ConstraintError("renormalized cube needs paired X samples when lambda != 0")
    f = np.ones(lat.shape) / lat.volume if f is None else f
    Fv = np.ones(len(samples)) if F is None else F.value(lat, samples)
    out = []
    for K in cutoffs:
        if c_from_pairs and X_samples is not None:
            c = _ope_constant_sampled(part, X_samples, m2, lam, K, gamma)
        else:
            c = ope_constant(part, m2, lam, K, gamma)
        D = np.asarray(lp_lowpass(part, samples, K))
        series = Fv * pairing(lat, f, D**3 - c * D)
        m, e = batch_means(series, n_batches)
        out.append(ObservableEstimate(float(m), float(e), len(samples), f"cube[K={K}]"))
    return out


def _ope_constant_sampled(part: DyadicPartition, X: np.ndarray, m2: float, lam: float, K: int, gamma: float) -> float:
    from .besov import q_inverse

    D = np.asarray(lp_lowpass(part, X, K))
    var = float(np.mean(D**2))
    W = D**2 - var
    R = _res_arr(lp_stack(part, W), lp_stack(part, q_inverse(W, stochastic_mass(m2), part.lattice, gamma)))
    return 3.0 * lam * var - 18.0 * lam**2 * float(np.mean(R))


# Exponential moments.


def star_norm(part: DyadicPartition, samples: np.ndarray, weight: Weight | None = None, kappa: float = 0.05) -> np.ndarray:
    """``<phi>_* = (1 + ||rho^2 phi||^2_{H^{-1/2-2 kappa}})^{1/2}`` per sample."""
    weight = weight or Weight(1.0, 3.0)
    lat = part.lattice
    from .besov import besov_norm

    h = besov_norm(part, samples * weight_array(lat, weight, 2.0), sobolev(-0.5 - 2 * kappa))
    return np.sqrt(1.0 + np.asarray(h) ** 2)


@dataclass
class ExpMoment:
    estimate: ObservableEstimate
    half_estimate: float
    stable: bool


def exp_moment(
    part: DyadicPartition,
    samples: np.ndarray,
    beta: float,
    upsilon: float,
    weight: Weight | None = None,
    kappa: float = 0.05,
    tol: float = 0.2,
    star: np.ndarray | None = None,
) -> ExpMoment:
    """``E[exp(beta <phi>_*^{1 - upsilon})]``; stable if the first half agrees with the full run within ``tol``."""
    if not (0 <= beta < 1) or not (0 < upsilon < 1):
        raise ConstraintError("need beta in [0, 1) and upsilon in (0, 1)")
    s = star_norm(part, samples, weight, kappa) if star is None else star
    vals = np.exp(beta * s ** (1.0 - upsilon))
    m, e = batch_means(vals)
    half = float(vals[: len(vals) // 2].mean())
    return ExpMoment(
        ObservableEstimate(float(m), float(e), len(vals), f"exp[beta={beta}]", null=1.0),
        half,
        abs(float(m) - half) <= tol * abs(float(m)),
    )


def moment_estimates(samples: np.ndarray, n_batches: int = N_BATCHES) -> dict[str, ObservableEstimate]:
    """Site-averaged ``E[phi^2]`` and ``E[phi^4]``."""
    out = {}
    for p in (2, 4):
        m, e = batch_means(_site_mean(samples**p), n_batches)
        out[f"phi{p}"] = ObservableEstimate(float(m), float(e), len(samples), f"phi^{p}")
    return out


def resonant_wick_sample(part: DyadicPartition, X: np.ndarray, a: float, m2: float, gamma: float = 1.0) -> np.ndarray:
    """``3 ([X^2] o Q^-1 [X^2])`` averaged over sites, one value per draw of X."""
    from .besov import q_inverse

    W = X**2 - a
    R = _res_arr(lp_stack(part, W), lp_stack(part, q_inverse(W, stochastic_mass(m2), part.lattice, gamma)))
    return 3.0 * _site_mean(R)


def default_partition(lat: Lattice, J: int | None = None) -> DyadicPartition:
    return build_partition(lat, J)
