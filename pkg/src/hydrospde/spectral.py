"""Fourier representation of fields on the unit torus [0, 1)^2.

A field f(x, z) = sum_k c_k exp(i (k1 x + k2 z)), k in 2*pi*Z^2, is stored as
the complex coefficient array ``c`` in FFT order with shape (..., Nx, Nz);
axis -2 is x and axis -1 is z. Leading axes are an optional batch (ensemble)
dimension and every operation here broadcasts over them.

Coefficients outside the 2/3-rule band are kept at exactly zero, and the
reality (Hermitian) and z-parity symmetries are enforced by exact averaging,
so they hold bitwise rather than to round-off.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

EVEN = "even"
ODD = "odd"
NONE = "none"
PARITIES = (EVEN, ODD, NONE)

ROUNDTRIP_TOL = 1e-12


class SpectralError(ValueError):
    """Invalid spectral data (shape, parity or reality violations)."""


def band_limit(n: int) -> int:
    # (n-1)//3 equals floor(n/3) unless 3 | n, where floor(n/3) would alias
    return (n - 1) // 3


@functools.lru_cache(maxsize=None)
def integer_wavenumbers(nx: int, nz: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer lattice indices (m1, m2) broadcastable to (nx, nz)."""
    mx = np.rint(sfft.fftfreq(nx, 1.0 / nx)).astype(np.int64)[:, None]
    mz = np.rint(sfft.fftfreq(nz, 1.0 / nz)).astype(np.int64)[None, :]
    mx.setflags(write=False)
    mz.setflags(write=False)
    return mx, mz


@functools.lru_cache(maxsize=None)
def wavenumbers(nx: int, nz: int) -> tuple[np.ndarray, np.ndarray]:
    """Physical wavenumbers k1 = 2*pi*m1, k2 = 2*pi*m2."""
    mx, mz = integer_wavenumbers(nx, nz)
    kx = 2.0 * np.pi * mx.astype(float)
    kz = 2.0 * np.pi * mz.astype(float)
    kx.setflags(write=False)
    kz.setflags(write=False)
    return kx, kz


@functools.lru_cache(maxsize=None)
def dealias_mask(nx: int, nz: int) -> np.ndarray:
    mx, mz = integer_wavenumbers(nx, nz)
    mask = (np.abs(mx) <= band_limit(nx)) & (np.abs(mz) <= band_limit(nz))
    mask.setflags(write=False)
    return mask


@functools.lru_cache(maxsize=None)
def grid_points(nx: int, nz: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform grid x_i = i/nx, z_j = j/nz as broadcastable columns."""
    x = (np.arange(nx) / nx)[:, None]
    z = (np.arange(nz) / nz)[None, :]
    x.setflags(write=False)
    z.setflags(write=False)
    return x, z


def _check_grid(shape: tuple[int, ...]) -> None:
    if len(shape) < 2 or shape[-1] < 2 or shape[-2] < 2:
        raise SpectralError(f"grid must be at least 2x2, got shape {shape}")


def reflect_z(c: np.ndarray) -> np.ndarray:
    """Coefficients of f(x, -z): index k2 -> -k2."""
    return np.roll(np.flip(c, axis=-1), 1, axis=-1)


def reflect_k(c: np.ndarray) -> np.ndarray:
    """Index map k -> -k on both axes."""
    return np.roll(np.flip(c, axis=(-2, -1)), (1, 1), axis=(-2, -1))


def symmetrize(c: np.ndarray, parity: str) -> np.ndarray:
    """Enforce Hermitian symmetry, parity and the dealiasing band exactly."""
    if parity not in PARITIES:
        raise SpectralError(f"unknown parity {parity!r}")
    c = 0.5 * (c + np.conj(reflect_k(c)))
    if parity == EVEN:
        c = 0.5 * (c + reflect_z(c))
    elif parity == ODD:
        c = 0.5 * (c - reflect_z(c))
    return np.where(dealias_mask(*c.shape[-2:]), c, 0.0)


def parity_product(p: str, q: str) -> str:
    if NONE in (p, q):
        return NONE
    return EVEN if p == q else ODD


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a real field, with a z-parity tag.

    Direct construction stores ``coeffs`` as given; use :meth:`from_coeffs`
    to enforce the symmetry and band invariants.
    """

    coeffs: np.ndarray
    parity: str = NONE

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        _check_grid(c.shape)
        if self.parity not in PARITIES:
            raise SpectralError(f"unknown parity {self.parity!r}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_coeffs(cls, coeffs, parity: str = NONE) -> "SpectralField":
        return cls(symmetrize(np.asarray(coeffs, dtype=complex), parity), parity)

    @classmethod
    def zeros(cls, grid: tuple[int, int], parity: str = EVEN, batch: tuple[int, ...] = ()):
        return cls(np.zeros(tuple(batch) + tuple(grid), dtype=complex), parity)

    @classmethod
    def constant(cls, value: float, grid: tuple[int, int]) -> "SpectralField":
        c = np.zeros(grid, dtype=complex)
        c[0, 0] = value
        return cls(c, EVEN)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.coeffs.shape[-2:]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-2]

    def _combine(self, other, sign):
        if isinstance(other, SpectralField):
            if other.grid_shape != self.grid_shape:
                raise SpectralError("grid mismatch")
            parity = self.parity if self.parity == other.parity else NONE
            return SpectralField(self.coeffs + sign * other.coeffs, parity)
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __neg__(self):
        return SpectralField(-self.coeffs, self.parity)

    def __mul__(self, a):
        if isinstance(a, SpectralField):
            return NotImplemented
        a = np.asarray(a, dtype=float)
        if a.ndim:
            a = a[..., None, None]
        return SpectralField(self.coeffs * a, self.parity)

    __rmul__ = __mul__

    def __getitem__(self, idx):
        """Select batch members."""
        if not self.batch_shape:
            raise IndexError("field has no batch axis")
        return SpectralField(self.coeffs[idx], self.parity)

    def physical(self) -> np.ndarray:
        return inverse_transform(self).values


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Real grid values on x_i = i/Nx, z_j = j/Nz (axis -2 is x)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        _check_grid(v.shape)
        if not np.all(np.isfinite(v)):
            raise SpectralError("non-finite grid values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.values.shape[-2:]


def forward_transform(f, parity: str = NONE, grid: tuple[int, int] | None = None) -> SpectralField:
    """Grid values -> band-limited coefficients with the declared parity.

    Parity is imposed by averaging with the reflected field, which in
    coefficient space is the average with the k2 -> -k2 image.
    """
    values = f.values if isinstance(f, PhysicalField) else np.asarray(f, dtype=float)
    if grid is not None and tuple(values.shape[-2:]) != tuple(grid):
        raise SpectralError(f"shape {values.shape[-2:]} does not match grid {grid}")
    _check_grid(values.shape)
    if not np.all(np.isfinite(values)):
        raise SpectralError("non-finite grid values")
    nx, nz = values.shape[-2:]
    c = sfft.fft2(values, axes=(-2, -1)) / (nx * nz)
    return SpectralField(symmetrize(c, parity), parity)


def _synthesize(c: np.ndarray) -> np.ndarray:
    nx, nz = c.shape[-2:]
    return sfft.ifft2(c, axes=(-2, -1)) * (nx * nz)


def inverse_transform(F: SpectralField) -> PhysicalField:
    c = F.coeffs
    scale = np.max(np.abs(c), initial=0.0)
    if scale > 0 and np.max(np.abs(c - np.conj(reflect_k(c)))) > ROUNDTRIP_TOL * scale:
        raise SpectralError("coefficients violate the reality condition")
    g = _synthesize(c)
    return PhysicalField(g.real)


def derivative(F: SpectralField, axis: str, order: int = 1) -> SpectralField:
    """Multiply by (i k_axis)^order; odd z-orders flip the parity tag."""
    if order < 1:
        raise SpectralError("derivative order must be >= 1")
    kx, kz = wavenumbers(*F.grid_shape)
    if axis == "x":
        k = kx
    elif axis == "z":
        k = kz
    else:
        raise SpectralError(f"axis must be 'x' or 'z', got {axis!r}")
    # i^order applied separately keeps the multiplier exactly odd/even in k
    unit = (1.0, 1j, -1.0, -1j)[order % 4]
    c = F.coeffs * (k**order) * unit
    parity = F.parity
    if axis == "z" and order % 2 == 1 and parity != NONE:
        parity = ODD if parity == EVEN else EVEN
    return SpectralField(c, parity)


def product(F: SpectralField, G: SpectralField) -> SpectralField:
    """Dealiased pointwise product."""
    if F.grid_shape != G.grid_shape:
        raise SpectralError("grid mismatch")
    values = _synthesize(F.coeffs).real * _synthesize(G.coeffs).real
    return forward_transform(values, parity_product(F.parity, G.parity))


def l2_inner(F: SpectralField, G: SpectralField):
    """Integral of f*g over the torus (Parseval)."""
    val = np.sum((F.coeffs * np.conj(G.coeffs)).real, axis=(-2, -1))
    return float(val) if np.ndim(val) == 0 else val


def l2_norm(F: SpectralField):
    val = np.sqrt(np.sum(np.abs(F.coeffs) ** 2, axis=(-2, -1)))
    return float(val) if np.ndim(val) == 0 else val


def resample(F: SpectralField, grid: tuple[int, int]) -> SpectralField:
    """Zero-pad (or truncate) coefficients onto another grid.

    Nyquist modes are dropped on both sides.
    """
    nx, nz = F.grid_shape
    gx, gz = grid
    mx, mz = integer_wavenumbers(nx, nz)
    sx = np.nonzero(np.abs(mx[:, 0]) <= min((nx - 1) // 2, (gx - 1) // 2))[0]
    sz = np.nonzero(np.abs(mz[0, :]) <= min((nz - 1) // 2, (gz - 1) // 2))[0]
    out = np.zeros(F.batch_shape + (gx, gz), dtype=complex)
    tx = (mx[sx, 0] % gx)[:, None]
    tz = (mz[0, sz] % gz)[None, :]
    out[..., tx, tz] = F.coeffs[..., sx[:, None], sz[None, :]]
    return SpectralField(out, F.parity)


def is_parity_exact(F: SpectralField) -> bool:
    c = F.coeffs
    if F.parity == EVEN:
        return bool(np.array_equal(c, reflect_z(c)))
    if F.parity == ODD:
        return bool(np.array_equal(c, -reflect_z(c)))
    return True


def is_hermitian(F: SpectralField, tol: float = 0.0) -> bool:
    c = F.coeffs
    return bool(np.max(np.abs(c - np.conj(reflect_k(c))), initial=0.0) <= tol * max(np.max(np.abs(c), initial=0.0), 1e-300))
