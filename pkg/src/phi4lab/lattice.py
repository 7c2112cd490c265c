"""Periodic lattice geometry, discrete calculus and the lattice Fourier transform.

Physical arrays have shape ``(n, n, n)`` (possibly with leading batch axes) and
index ``i`` along an axis sits at the coordinate ``x = eps * (i - n/2)``, so the
coordinates cover ``[-M/2, M/2)``.  Public Fourier-domain fields are stored on
the centered mode grid ``k = q / M`` with ``q = -n/2, ..., n/2 - 1``.

Translation invariant Fourier multipliers are applied internally with real
FFTs in the natural (unshifted) ordering, which is origin independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
import scipy.fft as sfft

from ._validation import ConstraintError, check_nonneg_int, check_positive

DIM = 3

_FFT_WORKERS = 1


def set_threads(n: int) -> None:
    """Number of workers used by the FFT backend (results do not depend on it)."""
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(n))


def get_threads() -> int:
    return _FFT_WORKERS


@dataclass(frozen=True)
class Lattice:
    """The periodic grid with mesh ``eps = 2**-N`` and side ``M``."""

    N: int
    M: float
    d: int = field(default=DIM, repr=False)

    def __post_init__(self):
        check_nonneg_int(self.N, "N")
        check_positive(self.M, "M")
        if self.d != DIM:
            raise ConstraintError("only d = 3 is supported")
        half_sites = self.M * 2.0 ** (self.N - 1)
        if abs(half_sites - round(half_sites)) > 1e-9 or round(half_sites) < 1:
            raise ConstraintError(
                f"M/(2*eps) must be a positive integer, got M={self.M}, N={self.N} "
                f"(M/(2*eps) = {half_sites})"
            )
        object.__setattr__(self, "M", float(self.M))

    @property
    def eps(self) -> float:
        return 2.0 ** (-self.N)

    @property
    def n_side(self) -> int:
        return int(round(self.M * 2**self.N))

    @property
    def n_sites(self) -> int:
        return self.n_side**3

    @property
    def shape(self) -> tuple[int, int, int]:
        n = self.n_side
        return (n, n, n)

    @property
    def volume(self) -> float:
        return float(self.M) ** 3

    @property
    def cell(self) -> float:
        """Lattice cell volume ``eps**3``."""
        return self.eps**3

    @cached_property
    def coords_1d(self) -> np.ndarray:
        n = self.n_side
        return self.eps * (np.arange(n) - n // 2)

    @cached_property
    def radius(self) -> np.ndarray:
        """Euclidean norm of the centered coordinate at every site."""
        c = self.coords_1d
        return np.sqrt(c[:, None, None] ** 2 + c[None, :, None] ** 2 + c[None, None, :] ** 2)

    def site_index(self, x) -> tuple[int, int, int]:
        """Array index of the site with coordinates ``x`` (wrapped periodically)."""
        n = self.n_side
        idx = np.rint(np.asarray(x, dtype=float) / self.eps).astype(int) + n // 2
        return tuple(int(i) % n for i in idx)

    def site_coords(self, index) -> np.ndarray:
        n = self.n_side
        return self.eps * (np.asarray(index, dtype=float) - n // 2)

    # Mode grids.  ``_q`` are integer frequencies in natural FFT order.
    @cached_property
    def _q(self) -> np.ndarray:
        n = self.n_side
        return np.fft.fftfreq(n, 1.0 / n)

    @cached_property
    def _q_half(self) -> np.ndarray:
        n = self.n_side
        return np.arange(n // 2 + 1, dtype=float)

    @cached_property
    def modes_1d(self) -> np.ndarray:
        """Centered 1d mode grid ``{-n/2, ..., n/2 - 1} / M``."""
        n = self.n_side
        return (np.arange(n) - n // 2) / self.M

    def _grid(self, fn, rfft: bool) -> np.ndarray:
        q = self._q / self.M
        q_last = self._q_half / self.M if rfft else q
        return fn(q[:, None, None], q[None, :, None], q_last[None, None, :])

    @cached_property
    def kabs_r(self) -> np.ndarray:
        """|k| on the real-FFT half grid."""
        return self._grid(lambda a, b, c: np.sqrt(a**2 + b**2 + c**2), rfft=True)

    @cached_property
    def kabs(self) -> np.ndarray:
        """|k| on the full grid in natural FFT order."""
        return self._grid(lambda a, b, c: np.sqrt(a**2 + b**2 + c**2), rfft=False)

    @cached_property
    def symbol_r(self) -> np.ndarray:
        """``l_eps(k) = sum_j 4 sin^2(eps pi k_j) / eps^2`` on the real-FFT half grid."""
        return self._grid(self._sym, rfft=True)

    @cached_property
    def symbol(self) -> np.ndarray:
        """``l_eps(k)`` on the full grid in natural FFT order."""
        return self._grid(self._sym, rfft=False)

    def _sym(self, a, b, c):
        e = self.eps
        s = lambda k: 4.0 * np.sin(e * np.pi * k) ** 2 / e**2  # noqa: E731
        return s(a) + s(b) + s(c)


def make_lattice(N: int, M: float) -> Lattice:
    """Validated periodic lattice with ``eps = 2**-N`` and side ``M``."""
    return Lattice(N, M)


# Internal FFT helpers; arrays may carry leading batch axes.
_AXES = (-3, -2, -1)


def rfft3(f: np.ndarray) -> np.ndarray:
    return sfft.rfftn(f, axes=_AXES, workers=_FFT_WORKERS)


def irfft3(F: np.ndarray, n: int) -> np.ndarray:
    return sfft.irfftn(F, s=(n, n, n), axes=_AXES, workers=_FFT_WORKERS)


def apply_multiplier(f: np.ndarray, mult_r: np.ndarray) -> np.ndarray:
    """Apply a real, even Fourier multiplier given on the real-FFT half grid."""
    n = f.shape[-1]
    return irfft3(rfft3(f) * mult_r, n)


@dataclass(frozen=True, eq=False)
class Field:
    """A scalar field on a lattice, either in physical or Fourier domain."""

    lattice: Lattice
    values: np.ndarray
    domain: Literal["physical", "fourier"] = "physical"

    def __post_init__(self):
        if self.domain not in ("physical", "fourier"):
            raise ConstraintError(f"unknown domain {self.domain!r}")
        v = np.asarray(self.values)
        if v.shape != self.lattice.shape:
            raise ConstraintError(f"field shape {v.shape} does not match lattice {self.lattice.shape}")
        if self.domain == "physical":
            if np.iscomplexobj(v):
                raise ConstraintError("physical fields must be real")
            v = v.astype(float, copy=False)
        else:
            v = v.astype(complex, copy=False)
        object.__setattr__(self, "values", v)

    def __add__(self, other: "Field") -> "Field":
        _same(self, other)
        return Field(self.lattice, self.values + other.values, self.domain)

    def __sub__(self, other: "Field") -> "Field":
        _same(self, other)
        return Field(self.lattice, self.values - other.values, self.domain)

    def __mul__(self, c) -> "Field":
        if isinstance(c, Field):
            _same(self, c)
            return Field(self.lattice, self.values * c.values, self.domain)
        return Field(self.lattice, self.values * c, self.domain)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.lattice, -self.values, self.domain)


def _same(f: Field, g: Field) -> None:
    if f.lattice != g.lattice:
        raise ConstraintError("fields live on different lattices")
    if f.domain != g.domain:
        raise ConstraintError(f"domain mismatch: {f.domain} vs {g.domain}")


def _require(f: Field, domain: str) -> None:
    if not isinstance(f, Field):
        raise ConstraintError(f"expected a Field, got {type(f).__name__}")
    if f.domain != domain:
        raise ConstraintError(f"expected a {domain} field, got {f.domain}")


def constant_field(lat: Lattice, c: float) -> Field:
    return Field(lat, np.full(lat.shape, float(c)))


def forward_fourier(f: Field) -> Field:
    """``F f(k) = eps^3 sum_x f(x) exp(-2 pi i k.x)`` on the centered mode grid."""
    _require(f, "physical")
    lat = f.lattice
    F = sfft.fftn(sfft.ifftshift(f.values), workers=_FFT_WORKERS)
    return Field(lat, lat.cell * sfft.fftshift(F), "fourier")


def inverse_fourier(F: Field, real: bool = True) -> Field:
    """``f(x) = M^-3 sum_k F(k) exp(2 pi i k.x)``; the exact inverse of ``forward_fourier``."""
    _require(F, "fourier")
    lat = F.lattice
    f = sfft.fftshift(sfft.ifftn(sfft.ifftshift(F.values), workers=_FFT_WORKERS)) / lat.cell
    if real:
        f = f.real
    return Field(lat, f, "physical")


def duality_product(f: Field, g: Field) -> float:
    """``<f, g>_eps = eps^3 sum_x f(x) g(x)``."""
    _require(f, "physical")
    _require(g, "physical")
    _same(f, g)
    return float(f.lattice.cell * np.sum(f.values * g.values))


def gradient_array(f: np.ndarray, eps: float) -> np.ndarray:
    """Forward differences along the three lattice axes, stacked on a new leading axis."""
    return np.stack([(np.roll(f, -1, axis=ax) - f) / eps for ax in _AXES])


def laplacian_array(f: np.ndarray, eps: float) -> np.ndarray:
    out = -6.0 * f
    for ax in _AXES:
        out = out + np.roll(f, 1, axis=ax) + np.roll(f, -1, axis=ax)
    return out / eps**2


def discrete_gradient(f: Field) -> tuple[Field, Field, Field]:
    """Forward-difference gradient with periodic wrap, one Field per direction."""
    _require(f, "physical")
    g = gradient_array(f.values, f.lattice.eps)
    return tuple(Field(f.lattice, gi) for gi in g)


def discrete_laplacian(f: Field) -> Field:
    """Seven-point Laplacian; acts in Fourier as multiplication by ``-l_eps(k)``."""
    _require(f, "physical")
    return Field(f.lattice, laplacian_array(f.values, f.lattice.eps))


def laplacian_symbol(lat: Lattice) -> np.ndarray:
    """``l_eps(k)`` on the centered mode grid."""
    return np.fft.fftshift(lat.symbol)


@dataclass(frozen=True)
class Weight:
    """Polynomial weight ``rho(x) = (1 + |h x|^2)^(-nu/2)``."""

    h: float = 1.0
    nu: float = 3.0

    def __post_init__(self):
        check_positive(self.h, "h", strict=False)
        check_positive(self.nu, "nu", strict=False)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x**2, axis=-1)
        return (1.0 + self.h**2 * r2) ** (-self.nu / 2)

    def of_radius(self, r) -> np.ndarray:
        return (1.0 + (self.h * np.asarray(r, dtype=float)) ** 2) ** (-self.nu / 2)

    @property
    def admissibility_constant(self) -> float:
        """C with ``rho(x)/rho(y) <= C / rho(x - y)``, from Peetre's inequality."""
        return 2.0 ** (self.nu / 2)


def weight_array(lat: Lattice, w: Weight, power: float = 1.0) -> np.ndarray:
    if power == 0 or w.nu == 0:
        return np.ones(lat.shape)
    return w.of_radius(lat.radius) ** power


def weight_field(lat: Lattice, w: Weight, power: float = 1.0) -> Field:
    """``rho**power`` sampled at the centered lattice coordinates."""
    return Field(lat, weight_array(lat, w, float(power)))


def lp_norm(f: np.ndarray, p: float, eps: float) -> np.ndarray:
    """``L^{p,eps}`` norm over the last three axes; ``p = inf`` gives the sup."""
    a = np.abs(f)
    if np.isinf(p):
        return a.max(axis=_AXES)
    return (eps**3 * np.sum(a**p, axis=_AXES)) ** (1.0 / p)


def random_field(lat: Lattice, rng: np.random.Generator, bandlimit: float | None = None) -> Field:
    """White noise, optionally low-passed to ``|k| <= bandlimit`` (test helper)."""
    f = rng.standard_normal(lat.shape)
    if bandlimit is not None:
        f = apply_multiplier(f, (lat.kabs_r <= bandlimit).astype(float))
    return Field(lat, f)
