"""Sobolev, weighted and D-space norms, plus the local Rayleigh monitor.

Integrals are over the unit torus, so L^2 norms are root-mean-squares on the
grid and Parseval sums in coefficient space. The weighted top-order term
||d_x^s v / sqrt(d_z v)|| is evaluated on the grid with the weight field
g = max(d_z v, kappa); strict mode additionally requires d_z v >= kappa on
the monitored band, so there the clamp is inactive.
"""
from __future__ import annotations

import functools
from dataclasses import asdict, dataclass, field

import numpy as np

from .fields import VelocityState
from .spectral import SpectralField, derivative, wavenumbers

MAX_S = 12
DEFAULT_BAND = (0.05, 0.45)

L2 = "L2"
HS = "Hs"
HS_WEIGHTED = "Hs_weighted"
DS = "Ds"
DS_KAPPA = "Ds_kappa"
CROSS_WEIGHTED = "cross_weighted"


class RayleighError(ValueError):
    """Strict-mode weight requested where d_z v < kappa."""

    def __init__(self, report: "RayleighReport"):
        super().__init__(
            f"local Rayleigh condition fails on band {report.monitored_band}: "
            f"min d_z v = {report.min_val:.6g} < kappa = {report.kappa:.6g}"
        )
        self.report = report


@dataclass(frozen=True)
class WeightMode:
    """How the 1/sqrt(d_z v) weight is formed.

    ``strict``: d_z v must be >= kappa on ``band`` (else RayleighError).
    ``floored``: d_z v is replaced by max(d_z v, kappa) everywhere.
    Both clamp outside the band, where the Rayleigh condition cannot hold
    for an even periodic field.
    """

    kind: str
    kappa: float
    band: tuple[float, float] = DEFAULT_BAND

    def __post_init__(self):
        if self.kind not in ("strict", "floored"):
            raise ValueError(f"unknown weight mode {self.kind!r}")
        if not self.kappa > 0:
            raise ValueError("weight floor must be positive")

    @classmethod
    def strict(cls, kappa: float, band=DEFAULT_BAND) -> "WeightMode":
        return cls("strict", kappa, tuple(band))

    @classmethod
    def floored(cls, kappa_floor: float) -> "WeightMode":
        return cls("floored", kappa_floor)

    def describe(self) -> str:
        if self.kind == "strict":
            return f"strict(kappa={self.kappa:g}, band=[{self.band[0]:g},{self.band[1]:g}])"
        return f"floored(kappa_floor={self.kappa:g})"


@dataclass
class NormReport:
    kind: str
    s: int
    value: float
    weight_mode: str = "none"
    components: dict = field(default_factory=dict)
    time: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RayleighReport:
    kappa: float
    min_val: float
    max_val: float
    violated_fraction: float
    monitored_band: tuple[float, float]
    passed: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        d["monitored_band"] = list(self.monitored_band)
        d["pass"] = d.pop("passed")
        return d


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def _check_s(s: int) -> None:
    if s < 0:
        raise ValueError("Sobolev index must be nonnegative")
    if s > MAX_S:
        raise ValueError(f"Sobolev index {s} exceeds the overflow guard {MAX_S}")


@functools.lru_cache(maxsize=None)
def hs_multiplier(grid: tuple[int, int], s: int) -> np.ndarray:
    """sum over multi-indices |a| <= s of k1^(2 a1) k2^(2 a2)."""
    kx, kz = wavenumbers(*grid)
    kx2, kz2 = kx**2, kz**2
    total = np.zeros(tuple(grid))
    for j in range(s + 1):
        for a in range(j + 1):
            total = total + kx2**a * kz2 ** (j - a)
    total.setflags(write=False)
    return total


def hs_norm(f: SpectralField, s: int):
    _check_s(s)
    m = hs_multiplier(tuple(f.grid_shape), s)
    return _scalar(np.sqrt(np.sum(m * np.abs(f.coeffs) ** 2, axis=(-2, -1))))


def fourier_hs_norm(f: SpectralField, m: int):
    """(sum_k (1 + |k|^(2m)) |f_k|^2)^(1/2), the Fourier-weight form."""
    kx, kz = wavenumbers(*f.grid_shape)
    w = 1.0 + (kx**2 + kz**2) ** m
    return _scalar(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2, axis=(-2, -1))))


def band_rows(nz: int, band) -> np.ndarray:
    lo, hi = band
    z = np.arange(nz) / nz
    eps = 1e-12
    return (z >= lo - eps) & (z <= hi + eps)


def _rayleigh_from_grid(g: np.ndarray, kappa: float, band) -> RayleighReport:
    rows = band_rows(g.shape[-1], band)
    if not rows.any():
        raise ValueError(f"monitored band {band} contains no grid rows")
    vals = g[..., rows]
    bad = (vals < kappa) | (vals > 1.0 / kappa)
    return RayleighReport(
        kappa=float(kappa),
        min_val=float(vals.min()),
        max_val=float(vals.max()),
        violated_fraction=float(bad.mean()),
        monitored_band=(float(band[0]), float(band[1])),
        passed=bool(not bad.any()),
    )


def effective_weight(dzv: np.ndarray, mode: WeightMode) -> np.ndarray:
    """The field g entering 1/sqrt(g); validates strict mode."""
    if mode.kind == "strict":
        rows = band_rows(dzv.shape[-1], mode.band)
        if not rows.any():
            raise ValueError(f"monitored band {mode.band} contains no grid rows")
        if np.min(dzv[..., rows]) < mode.kappa:
            raise RayleighError(_rayleigh_from_grid(dzv, mode.kappa, mode.band))
    return np.maximum(dzv, mode.kappa)


def weighted_parts(v: SpectralField, s: int, mode: WeightMode, v_ref: SpectralField | None = None,
                   dzv_ref: np.ndarray | None = None) -> dict:
    """Pieces of ||v||_{H~^s}: all |a| <= s except d_x^s, and the weighted d_x^s term.

    The weight comes from ``v_ref`` (default ``v``) or a precomputed grid of
    d_z v_ref. Values are arrays over the batch axes.
    """
    _check_s(s)
    grid = tuple(v.grid_shape)
    kx, _ = wavenumbers(*grid)
    power = np.abs(v.coeffs) ** 2
    other_mult = hs_multiplier(grid, s) - kx ** (2 * s)
    other = np.sqrt(np.sum(other_mult * power, axis=(-2, -1)))
    top_plain = np.sqrt(np.sum(kx ** (2 * s) * power, axis=(-2, -1)))
    if dzv_ref is None:
        ref = v if v_ref is None else v_ref
        dzv_ref = derivative(ref, "z", 1).physical()
    g = effective_weight(dzv_ref, mode)
    top = derivative(v, "x", s).physical() if s > 0 else v.physical()
    top_weighted = np.sqrt(np.mean(top**2 / g, axis=(-2, -1)))
    inv_sqrt = 1.0 / np.sqrt(g)
    return {
        "other": other,
        "top_weighted": top_weighted,
        "top_unweighted": top_plain,
        "weight_min": np.min(inv_sqrt, axis=(-2, -1)),
        "weight_max": np.max(inv_sqrt, axis=(-2, -1)),
    }


def _combine(parts: dict):
    return np.sqrt(parts["other"] ** 2 + parts["top_weighted"] ** 2)


def weighted_hs_norm(v: SpectralField, s: int, mode: WeightMode) -> NormReport:
    parts = weighted_parts(v, s, mode)
    return NormReport(
        kind=HS_WEIGHTED,
        s=s,
        value=float(_combine(parts)),
        weight_mode=mode.describe(),
        components={k: float(val) for k, val in parts.items()},
    )


def _u_and_v(u) -> tuple[SpectralField, SpectralField]:
    if isinstance(u, VelocityState):
        return u.u, u.v
    return u, derivative(u, "z", 1)


def ds_norm(u, s: int):
    """||u|| + ||d_z u||_{H^s}."""
    uu, v = _u_and_v(u)
    l2 = np.sqrt(np.sum(np.abs(uu.coeffs) ** 2, axis=(-2, -1)))
    return _scalar(l2 + np.asarray(hs_norm(v, s)))


def dskappa_value(u, s: int, mode: WeightMode, dzv: np.ndarray | None = None):
    """||u|| + ||d_z u||_{H~^s} as a (batched) array."""
    uu, v = _u_and_v(u)
    l2 = np.sqrt(np.sum(np.abs(uu.coeffs) ** 2, axis=(-2, -1)))
    return _scalar(l2 + _combine(weighted_parts(v, s, mode, dzv_ref=dzv)))


def dskappa_norm(u, s: int, kappa: float | None = None, mode: WeightMode | None = None) -> NormReport:
    if mode is None:
        if kappa is None:
            raise ValueError("give kappa or a weight mode")
        mode = WeightMode.floored(kappa)
    uu, v = _u_and_v(u)
    parts = weighted_parts(v, s, mode)
    l2 = float(np.sqrt(np.sum(np.abs(uu.coeffs) ** 2)))
    comps = {k: float(val) for k, val in parts.items()}
    comps["l2"] = l2
    return NormReport(kind=DS_KAPPA, s=s, value=l2 + float(_combine(parts)),
                      weight_mode=mode.describe(), components=comps)


def cross_weighted_norm(d: SpectralField, v_ref: SpectralField, s: int, mode: WeightMode):
    """||d||_{H~^s} with the top x-derivative weighted by 1/sqrt(d_z v_ref)."""
    return _scalar(_combine(weighted_parts(d, s, mode, v_ref=v_ref)))


def rayleigh_monitor(u, kappa: float, band=DEFAULT_BAND) -> RayleighReport:
    """Extrema of d_z v = d_zz u over grid rows with z in ``band``."""
    if not 0 < kappa < 0.5:
        raise ValueError("kappa must lie in (0, 1/2)")
    _, v = _u_and_v(u)
    g = derivative(v, "z", 1).physical()
    return _rayleigh_from_grid(g, kappa, band)


def linf_distance(f: SpectralField, g: SpectralField):
    if f.grid_shape != g.grid_shape:
        raise ValueError("grid mismatch")
    diff = SpectralField(f.coeffs - g.coeffs).physical()
    return _scalar(np.max(np.abs(diff), axis=(-2, -1)))


def poincare_constants(u: SpectralField, k: int) -> tuple[float, float]:
    """Measured ratios ||d_x^(k+1) u|| / ||d_x^(k+1) v|| and ||d_x^k w|| / ||d_x^(k+1) v||."""
    from .fields import vertical_velocity

    v = derivative(u, "z", 1)
    w = vertical_velocity(u)
    dv = np.sqrt(np.sum(np.abs(derivative(v, "x", k + 1).coeffs) ** 2))
    du = np.sqrt(np.sum(np.abs(derivative(u, "x", k + 1).coeffs) ** 2))
    dw = np.sqrt(np.sum(np.abs((derivative(w, "x", k) if k else w).coeffs) ** 2))
    return float(du / dv), float(dw / dv)


def multi_index_norm(f: SpectralField, a1: int, a2: int):
    """||d_x^a1 d_z^a2 f|| via Parseval."""
    kx, kz = wavenumbers(*f.grid_shape)
    return _scalar(np.sqrt(np.sum((kx ** (2 * a1)) * (kz ** (2 * a2)) * np.abs(f.coeffs) ** 2, axis=(-2, -1))))

