"""Initial data compatible with the local Rayleigh condition on a z-band.

For an even, 1-periodic u the mean of d_zz u over a period is zero, so
d_zz u >= kappa can only hold on part of the column. The profile here has
d_zz u = A on most of the column and narrow negative dips at z = 0 and
z = 1/2, where the monitored band (0.05, 0.45) does not look.
"""
from __future__ import annotations

import numpy as np

from .fields import random_h_field
from .norms import dskappa_norm, rayleigh_monitor
from .spectral import EVEN, SpectralField, dealias_mask, integer_wavenumbers, wavenumbers


def rayleigh_profile(grid=(64, 64), amplitude: float = 0.5, width: float = 0.018) -> SpectralField:
    """x-independent u with d_zz u = A - (A/2) * (Gaussian bumps of std ``width`` at z = j/2).

    Built in Fourier space: the bump train has period 1/2, so only even m2
    appear, with coefficient -A exp(-(2 pi m2 width)^2 / 2).
    """
    mx, mz = integer_wavenumbers(*grid)
    _, kz = wavenumbers(*grid)
    g = np.where((mx == 0) & (mz != 0) & (mz % 2 == 0),
                 -amplitude * np.exp(-0.5 * (2 * np.pi * mz * width) ** 2), 0.0)
    safe = np.where(kz == 0, 1.0, kz)
    c = np.where(kz == 0, 0.0, g / -(safe**2))
    c = np.where(dealias_mask(*grid), c, 0.0)
    return SpectralField(c.astype(complex), EVEN)


def perturbed_profile(grid, rng: np.random.Generator, amplitude: float = 0.5, width: float = 0.018,
                      eps: float = 1e-3, max_mode: int = 3, batch: tuple[int, ...] = ()) -> SpectralField:
    """Profile plus eps * (random low-mode H field with unit L2 norm)."""
    base = rayleigh_profile(grid, amplitude, width)
    pert = random_h_field(grid, rng, max_mode=max_mode, amplitude=eps, batch=batch)
    return SpectralField(base.coeffs + pert.coeffs, EVEN)


def check_initial(u: SpectralField, kappa: float, band, s: int, M_bound: float | None = None) -> dict:
    """2*kappa monitor on the band and the ||u0||_s~ < M/2 requirement."""
    rep = rayleigh_monitor(u, 2 * kappa if 2 * kappa < 0.5 else 0.4999, band)
    norm = dskappa_norm(u, s, kappa).value
    ok = rep.min_val >= 2 * kappa and rep.max_val <= 1 / (2 * kappa)
    return {
        "rayleigh_2kappa": ok,
        "min": rep.min_val,
        "max": rep.max_val,
        "norm_s_kappa": norm,
        "within_M": None if M_bound is None else bool(norm < M_bound / 2),
    }
