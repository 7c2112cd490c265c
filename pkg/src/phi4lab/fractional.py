"""Fractional variant: ``m^2 + l_eps(k)^gamma`` replaces ``m^2 + l_eps(k)`` everywhere.

At ``gamma == 1`` every entry point defers to the standard code path, so
results are bit-for-bit identical.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import ConstraintError
from .besov import DyadicPartition
from .dynamics import Couplings, TrajectoryState, init_state, step_langevin
from .gibbs import GibbsSpec, gibbs_log_density
from .lattice import Lattice, laplacian_symbol
from .stochastic import compute_a, compute_b

log = logging.getLogger(__name__)

GAMMA_THRESHOLD = 21.0 / 22.0


class UncoveredRegimeWarning(UserWarning):
    """``gamma <= 21/22``: the renormalization used here is not expected to suffice."""


def check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not (0.0 < gamma <= 1.0):
        raise ConstraintError(f"gamma must lie in (0, 1], got {gamma}")
    if gamma <= GAMMA_THRESHOLD:
        msg = f"gamma = {gamma:.4g} <= 21/22: the a, b counterterms alone are not expected to renormalize the model"
        log.warning(msg)
        warnings.warn(msg, UncoveredRegimeWarning, stacklevel=3)
    return gamma


def fractional_multiplier(lat: Lattice, gamma: float) -> np.ndarray:
    """``l_eps(k)^gamma`` on the centered mode grid."""
    check_gamma(gamma)
    sym = laplacian_symbol(lat)
    return sym if gamma == 1.0 else sym**gamma


@dataclass(frozen=True)
class FractionalSpec:
    lattice: Lattice
    lam: float
    m2: float
    gamma: float

    def __post_init__(self):
        check_gamma(self.gamma)

    def gibbs(self) -> GibbsSpec:
        return GibbsSpec(self.lattice, self.lam, self.m2, gamma=self.gamma)

    def couplings(self) -> Couplings:
        return Couplings(self.lattice, self.m2, self.lam, gamma=self.gamma)


def fractional_compute_a(lat: Lattice, m2: float, gamma: float) -> float:
    check_gamma(gamma)
    return compute_a(lat, m2, gamma)


def fractional_compute_b(lat: Lattice, m2: float, gamma: float, part: DyadicPartition | None = None) -> float:
    check_gamma(gamma)
    return compute_b(lat, m2, gamma, part)


def fractional_gibbs_log_density(spec: FractionalSpec, phi) -> float:
    return gibbs_log_density(spec.gibbs(), phi)


def fractional_init(spec: FractionalSpec, seed: int = 0, chain: int = 0, n_chains: int | None = None) -> TrajectoryState:
    return init_state(spec.couplings(), seed, chain, n_chains)


def fractional_langevin_step(state: TrajectoryState, dt: float) -> TrajectoryState:
    """One step of the fractional chain (the state carries its own ``gamma``)."""
    check_gamma(state.couplings.gamma)
    return step_langevin(state, dt)
