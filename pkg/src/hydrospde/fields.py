"""Hydrostatic velocity fields: the space H, w and v recovered from u."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectral import (
    EVEN,
    ODD,
    SpectralError,
    SpectralField,
    derivative,
    forward_transform,
    integer_wavenumbers,
    symmetrize,
    wavenumbers,
)

H_TOL = 1e-10


class NotInHError(ValueError):
    """The field has nonzero vertical mean of d_x u."""


def _pressure_modes(grid) -> np.ndarray:
    mx, mz = integer_wavenumbers(*grid)
    return (mz == 0) & (mx != 0)


def h_violation(f: SpectralField):
    """Largest k2 = 0, k1 != 0 coefficient, relative to the largest coefficient."""
    c = np.abs(f.coeffs)
    bad = np.max(np.where(_pressure_modes(f.grid_shape), c, 0.0), axis=(-2, -1))
    scale = np.maximum(np.max(c, axis=(-2, -1)), 1e-300)
    out = bad / scale
    return float(out) if np.ndim(out) == 0 else out


def in_H(f: SpectralField, tol: float = H_TOL) -> bool:
    return f.parity == EVEN and bool(np.all(h_violation(f) <= tol))


def project_to_H(f: SpectralField, return_removed: bool = False):
    """Remove the z-independent, x-dependent modes.

    Those modes are exactly what a hydrostatic pressure gradient d_x p can
    absorb, so the removed part is the discrete -d_x p contribution.
    """
    if f.parity != EVEN:
        raise SpectralError(f"project_to_H needs an even field, got parity {f.parity!r}")
    mask = _pressure_modes(f.grid_shape)
    kept = SpectralField(np.where(mask, 0.0, f.coeffs), EVEN)
    if return_removed:
        return kept, SpectralField(np.where(mask, f.coeffs, 0.0), EVEN)
    return kept


def vorticity(u: SpectralField) -> SpectralField:
    return derivative(u, "z", 1)


def vertical_velocity(u: SpectralField, tol: float = H_TOL) -> SpectralField:
    """w(x, z) = -int_0^z d_x u, by antidifferentiating each mode in z.

    Raises NotInHError when the k2 = 0 part of d_x u is nonzero, since then
    the antiderivative grows linearly in z and w is not periodic.
    """
    if np.any(h_violation(u) > tol):
        raise NotInHError("nonintegrable vertical velocity: int_0^1 d_x u dz != 0")
    kx, kz = wavenumbers(*u.grid_shape)
    safe_kz = np.where(kz == 0, 1.0, kz)
    # -(i k1 / (i k2)) u_k; the k2 = 0 modes are zero by H-membership
    c = np.where(kz == 0, 0.0, -(kx / safe_kz) * u.coeffs)
    parity = ODD if u.parity == EVEN else u.parity
    return SpectralField(c, parity)


def vertical_velocity_grid(u: SpectralField) -> np.ndarray:
    """Grid values of -int_0^z d_x u without the H check.

    Modes with k2 = 0 contribute the secular term -z * d_x u_0(x), evaluated
    for z in [0, 1); used to show what breaks outside H.
    """
    kx, kz = wavenumbers(*u.grid_shape)
    nx, nz = u.grid_shape
    secular = np.where((kz == 0) & (kx != 0), u.coeffs, 0.0)
    periodic = SpectralField(np.where(kz == 0, 0.0, u.coeffs), u.parity)
    w = vertical_velocity(periodic).physical()
    dxu0 = SpectralField(secular * 1j * kx, u.parity).physical()
    z = np.arange(nz) / nz
    return w - dxu0 * z


@dataclass(frozen=True, eq=False)
class VelocityState:
    """Horizontal velocity u in H with eagerly derived v = d_z u and w."""

    u: SpectralField
    v: SpectralField
    w: SpectralField
    time: float = 0.0

    @classmethod
    def from_u(cls, u: SpectralField, time: float = 0.0) -> "VelocityState":
        if u.parity != EVEN:
            raise SpectralError("u must be even in z")
        return cls(u=u, v=vorticity(u), w=vertical_velocity(u), time=float(time))

    @property
    def grid_shape(self):
        return self.u.grid_shape

    def with_u(self, u: SpectralField, time: float) -> "VelocityState":
        return VelocityState.from_u(u, time)


def random_h_field(grid, rng: np.random.Generator, max_mode: int | None = None,
                   decay: float = 2.0, amplitude: float = 1.0, batch: tuple[int, ...] = ()) -> SpectralField:
    """Random band-limited even field in H with coefficients ~ (1+|m|)^-decay."""
    mx, mz = integer_wavenumbers(*grid)
    shape = tuple(batch) + tuple(grid)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    r = np.sqrt(mx**2 + mz**2)
    c = c * (1.0 + r) ** (-decay)
    if max_mode is not None:
        c = np.where((np.abs(mx) <= max_mode) & (np.abs(mz) <= max_mode), c, 0.0)
    c = np.where(_pressure_modes(grid), 0.0, c)
    c = symmetrize(c, EVEN)
    norm = np.sqrt(np.sum(np.abs(c) ** 2, axis=(-2, -1), keepdims=True))
    return SpectralField(amplitude * c / np.maximum(norm, 1e-300), EVEN)


# --- snapshots -------------------------------------------------------------
# <stem>.json: {"grid_shape": [Nx, Nz], "parity": ..., "time": ..., "dtype":
# "<f8", "order": "row-major-x", "format": "bin"|"csv"}; <stem>.bin holds Nx*Nz
# little-endian float64 values with index (i, j) at i*Nz + j, i.e. x is the
# slow axis. The csv variant has Nx rows of Nz comma-separated values.

def write_snapshot(stem, field: SpectralField, time: float = 0.0, fmt: str = "bin") -> Path:
    if field.batch_shape:
        raise ValueError("snapshots hold a single field")
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    values = field.physical()
    header = {
        "grid_shape": list(field.grid_shape),
        "parity": field.parity,
        "time": float(time),
        "dtype": "<f8",
        "order": "row-major-x",
        "format": fmt,
    }
    if fmt == "bin":
        data_path = stem.with_suffix(".bin")
        data_path.write_bytes(np.ascontiguousarray(values, dtype="<f8").tobytes())
    elif fmt == "csv":
        data_path = stem.with_suffix(".csv")
        np.savetxt(data_path, values, delimiter=",", fmt="%.17g")
    else:
        raise ValueError(f"unknown snapshot format {fmt!r}")
    stem.with_suffix(".json").write_text(json.dumps(header, sort_keys=True))
    return data_path


def read_snapshot(stem) -> tuple[SpectralField, dict]:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    shape = tuple(header["grid_shape"])
    if header["format"] == "bin":
        values = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8").reshape(shape)
    else:
        values = np.loadtxt(stem.with_suffix(".csv"), delimiter=",", ndmin=2).reshape(shape)
    return forward_transform(values, header["parity"]), header
