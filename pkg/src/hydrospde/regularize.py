"""Cut-off functions and the spectral projections P_n."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .norms import fourier_hs_norm
from .spectral import SpectralField, integer_wavenumbers

QUINTIC = "quintic"
EXPONENTIAL = "smooth-exponential"
POINCARE_CONSTANT = math.sqrt(2.0)


@dataclass(frozen=True)
class CutoffSpec:
    """theta = 1 on [0, radius/2], 0 on [radius, inf), non-increasing between."""

    radius: float
    family: str = QUINTIC

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("cut-off radius must be positive")
        if self.family not in (QUINTIC, EXPONENTIAL):
            raise ValueError(f"unknown cut-off family {self.family!r}")

    @property
    def lipschitz_bound(self) -> float:
        # quintic smoothstep has max slope 15/8 per unit of t
        if self.family == QUINTIC:
            return 15.0 / (8.0 * (self.radius / 2.0))
        return math.inf


def _g(t):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


def theta(x, spec: CutoffSpec):
    """Evaluate the cut-off; scalars in, float out, arrays broadcast."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("cut-off argument must be nonnegative")
    half = spec.radius / 2.0
    t = np.clip((xa - half) / half, 0.0, 1.0)
    if spec.family == QUINTIC:
        ramp = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
        val = 1.0 - ramp
    else:
        a, b = _g(1.0 - t), _g(t)
        val = a / (a + b)
    val = np.where(xa <= half, 1.0, np.where(xa >= spec.radius, 0.0, val))
    return float(val) if val.ndim == 0 else val


def _radius_mask(grid, n: float) -> np.ndarray:
    mx, mz = integer_wavenumbers(*grid)
    # compare on the integer lattice: |k| <= n  <=>  m1^2 + m2^2 <= (n / 2pi)^2
    return (mx**2 + mz**2) <= (n / (2.0 * np.pi)) ** 2 * (1.0 + 1e-12)


def spectral_projection(f: SpectralField, n: float) -> SpectralField:
    """Keep modes with Euclidean |k| <= n."""
    if not n > 0:
        raise ValueError("projection radius must be positive")
    return SpectralField(np.where(_radius_mask(f.grid_shape, n), f.coeffs, 0.0), f.parity)


@dataclass
class PoincareReport:
    n: float
    m: int
    tail_lhs: float
    tail_rhs: float
    tail_ratio: float | None
    tail_pass: bool | None
    inverse_lhs: float
    inverse_rhs: float
    inverse_ratio: float | None
    inverse_pass: bool | None
    constant: float = POINCARE_CONSTANT

    @property
    def tail_vacuous(self) -> bool:
        return self.tail_ratio is None

    @property
    def inverse_vacuous(self) -> bool:
        return self.inverse_ratio is None


def poincare_check(f: SpectralField, n: float, m: int, constant: float = POINCARE_CONSTANT) -> PoincareReport:
    """Measure both projection inequalities with Fourier-weight H^m norms.

    tail:    ||(I-P_n) f||_{H^m}   <= (C/n) ||(I-P_n) f||_{H^{m+1}}
    inverse: ||P_n f||_{H^{m+1}}   <= n C  ||P_n f||_{H^m}
    Ratios are the measured constants; None marks an empty (vacuous) side.
    """
    low = spectral_projection(f, n)
    tail = SpectralField(f.coeffs - low.coeffs, f.parity)
    t_lhs, t_top = fourier_hs_norm(tail, m), fourier_hs_norm(tail, m + 1)
    i_lhs, i_base = fourier_hs_norm(low, m + 1), fourier_hs_norm(low, m)
    # sides at transform round-off level count as empty
    floor = 1e-13 * fourier_hs_norm(f, m + 1)
    t_ratio = n * t_lhs / t_top if t_top > floor else None
    i_ratio = i_lhs / (n * i_base) if i_base > floor else None
    return PoincareReport(
        n=n, m=m,
        tail_lhs=t_lhs, tail_rhs=constant * t_top / n,
        tail_ratio=t_ratio, tail_pass=None if t_ratio is None else t_ratio <= constant,
        inverse_lhs=i_lhs, inverse_rhs=n * constant * i_base,
        inverse_ratio=i_ratio, inverse_pass=None if i_ratio is None else i_ratio <= constant,
        constant=constant,
    )
