"""Truncated cylindrical Wiener noise and the affine multiplicative operator

    sigma(u) dW = sum_k dW^k (psi_k u + chi_k).

Each Monte Carlo path owns a counter-based Philox stream keyed by
(seed, path index), so ensembles are reproducible however they are split.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .fields import random_h_field
from .norms import ds_norm
from .spectral import (
    EVEN,
    SpectralError,
    SpectralField,
    derivative,
    forward_transform,
    grid_points,
    product,
    wavenumbers,
)


def path_rng(seed: int, path: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(path,))))


@dataclass(frozen=True, eq=False)
class WienerIncrement:
    dW: np.ndarray
    dt: float
    seed_state: dict | None = None

    @property
    def K(self) -> int:
        return self.dW.shape[-1]


def sample_increment(dt: float, K: int, rng: np.random.Generator) -> WienerIncrement:
    if not dt > 0:
        raise ValueError("dt must be positive")
    state = rng.bit_generator.state
    return WienerIncrement(rng.standard_normal(K) * np.sqrt(dt), float(dt), state)


def draw_increments(seed: int, paths, n_steps: int, K: int, dt: float, substeps: int = 1) -> np.ndarray:
    """Brownian increments of shape (len(paths), n_steps, K).

    Each step of size dt is the sum of ``substeps`` draws of size dt/substeps,
    so runs at dt and dt/r with the same seed see the same Brownian path.
    With substeps=1 the values coincide with repeated sample_increment calls.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    out = np.empty((len(paths), n_steps, K))
    h = np.sqrt(dt / substeps)
    for i, p in enumerate(paths):
        z = path_rng(seed, p).standard_normal((n_steps * substeps, K)) * h
        out[i] = z.reshape(n_steps, substeps, K).sum(axis=1)
    return out


def w_inf_norm(f: SpectralField, order: int) -> float:
    """max over |a| <= order of the grid max of |D^a f|."""
    best = np.max(np.abs(f.physical()))
    for j in range(1, order + 1):
        for a in range(j + 1):
            g = f
            if a:
                g = derivative(g, "x", a)
            if j - a:
                g = derivative(g, "z", j - a)
            best = max(best, np.max(np.abs(g.physical())))
    return float(best)


def trig_mode(grid, m1: int, m2: int, phase: float = 0.0) -> SpectralField:
    """cos(2 pi m1 x + phase) cos(2 pi m2 z), even in z."""
    x, z = grid_points(*grid)
    vals = np.cos(2 * np.pi * m1 * x + phase) * np.cos(2 * np.pi * m2 * z)
    return forward_transform(vals, EVEN)


def low_modes(count: int, skip_mean: bool = False) -> list[tuple[int, int]]:
    """Lattice points (m1 >= 0, m2 >= 0) ordered by |m|, then m1."""
    pts = [(a, b) for a in range(count + 1) for b in range(count + 1)]
    pts.sort(key=lambda p: (p[0] ** 2 + p[1] ** 2, p[0]))
    if skip_mean:
        pts = pts[1:]
    return pts[:count]


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """psi_k, chi_k (even in z) with declared envelope sums kappa1^2, kappa2^2.

    ``s`` is the regularity index of the envelope norm W^{s+1, inf}.
    ``descriptor`` holds the mode list used to rebuild the model.
    """

    psi: tuple
    chi: tuple
    kappa1: float
    kappa2: float
    s: int
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.psi) != len(self.chi):
            raise ValueError("psi and chi must have the same length")
        for f in tuple(self.psi) + tuple(self.chi):
            if f.parity != EVEN:
                raise SpectralError("noise fields must be even in z")
        grids = {tuple(f.grid_shape) for f in tuple(self.psi) + tuple(self.chi)}
        if len(grids) > 1:
            raise ValueError("noise fields on different grids")
        if self.psi:
            psi = np.stack([f.coeffs for f in self.psi])
            chi = np.stack([f.coeffs for f in self.chi])
        else:
            psi = chi = np.zeros((0, 2, 2), dtype=complex)
        psi.setflags(write=False)
        chi.setflags(write=False)
        object.__setattr__(self, "_psi", psi)
        object.__setattr__(self, "_chi", chi)

    @property
    def K(self) -> int:
        return len(self.psi)

    @property
    def grid_shape(self):
        return tuple(self.psi[0].grid_shape) if self.psi else None

    @property
    def psi_stack(self) -> np.ndarray:
        return self._psi

    @property
    def chi_stack(self) -> np.ndarray:
        return self._chi

    def measured_envelopes(self) -> tuple[float, float]:
        a = sum(w_inf_norm(f, self.s + 1) ** 2 for f in self.psi)
        b = sum(w_inf_norm(f, self.s + 1) ** 2 for f in self.chi)
        return float(np.sqrt(a)), float(np.sqrt(b))

    @property
    def is_zero(self) -> bool:
        return not (np.any(self._psi) or np.any(self._chi))

    def to_json(self) -> str:
        return json.dumps(self.descriptor, sort_keys=True)

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @classmethod
    def from_descriptor(cls, desc: dict) -> "NoiseModel":
        grid = tuple(desc["grid"])
        psi = [a * trig_mode(grid, m1, m2, ph) for m1, m2, ph, a in desc["psi"]]
        chi = [a * trig_mode(grid, m1, m2, ph) for m1, m2, ph, a in desc["chi"]]
        return cls(tuple(psi), tuple(chi), desc["kappa1"], desc["kappa2"], desc["s"], desc)

    @classmethod
    def from_modes(cls, grid, psi_modes, chi_modes, kappa1: float | None, kappa2: float | None,
                   s: int) -> "NoiseModel":
        """Build from (m1, m2, phase, weight) lists.

        ``weight`` is the W^{s+1,inf} norm given to that mode. When kappa1
        (kappa2) is set the weights are rescaled so the envelope sum equals it;
        with None the declared value is the measured one.
        """
        grid = tuple(grid)

        def scaled(modes, target):
            out = []
            for m1, m2, ph, w in modes:
                unit = w_inf_norm(trig_mode(grid, m1, m2, ph), s + 1)
                out.append([m1, m2, ph, w / unit if unit > 0 else 0.0])
            total = float(np.sqrt(sum(w**2 for *_, w in modes)))
            if target is None or total == 0:
                return out, total
            c = target / total
            return [[m1, m2, ph, a * c] for m1, m2, ph, a in out], float(target)

        psi_d, k1 = scaled(psi_modes, kappa1)
        chi_d, k2 = scaled(chi_modes, kappa2)
        desc = {"grid": list(grid), "s": s, "kappa1": k1, "kappa2": k2, "psi": psi_d, "chi": chi_d}
        return cls.from_descriptor(desc)


def default_noise_model(grid=(64, 64), K: int = 16, kappa1: float = 1.0, kappa2: float = 1.0,
                        s: int = 6, decay: float = 2.0) -> NoiseModel:
    """K low trigonometric modes with envelope (1+k)^-decay.

    psi_k runs over the low lattice points starting at the constant mode;
    chi_k over the same points shifted by a quarter-period in x.
    """
    modes = low_modes(K)
    env = [(1.0 + k) ** (-decay) for k in range(K)]
    psi = [(m1, m2, 0.0, a) for (m1, m2), a in zip(modes, env)]
    chi = [(m1, m2, np.pi / 2 if m1 else 0.0, a) for (m1, m2), a in zip(modes, env)]
    return NoiseModel.from_modes(grid, psi, chi, kappa1, kappa2, s)


def zero_noise_model(grid, K: int = 1, s: int = 6) -> NoiseModel:
    return NoiseModel.from_descriptor({"grid": list(grid), "s": s, "kappa1": 0.0, "kappa2": 0.0,
                                       "psi": [[0, 0, 0.0, 0.0]] * K, "chi": [[0, 0, 0.0, 0.0]] * K})


def geometric_noise_model(grid, c: float, s: int = 6) -> NoiseModel:
    """K = 1, psi = c (constant), chi = 0: du = c u dW."""
    return NoiseModel.from_descriptor({"grid": list(grid), "s": s, "kappa1": abs(c), "kappa2": 0.0,
                                       "psi": [[0, 0, 0.0, c]], "chi": [[0, 0, 0.0, 0.0]]})


def vertical_additive_model(grid, modes, amplitude: float, s: int = 6) -> NoiseModel:
    """psi = 0, chi_k = amplitude cos(2 pi m_k z): x-independent additive noise."""
    psi = [[0, 0, 0.0, 0.0] for _ in modes]
    chi = [[0, int(m), 0.0, amplitude] for m in modes]
    model = NoiseModel.from_descriptor({"grid": list(grid), "s": s, "kappa1": 0.0, "kappa2": 0.0,
                                        "psi": psi, "chi": chi})
    _, k2 = model.measured_envelopes()
    d = dict(model.descriptor, kappa2=k2)
    return NoiseModel.from_descriptor(d)


def combine_modes(stack: np.ndarray, dW: np.ndarray) -> np.ndarray:
    """sum_k dW^k stack_k, broadcasting batch axes of dW."""
    return np.tensordot(dW, stack, axes=([-1], [0]))


def apply_noise(u: SpectralField, inc: WienerIncrement | np.ndarray, model: NoiseModel) -> SpectralField:
    """sum_k dW^k (psi_k u + chi_k), with dealiased products."""
    dW = inc.dW if isinstance(inc, WienerIncrement) else np.asarray(inc, dtype=float)
    if dW.shape[-1] != model.K:
        raise ValueError(f"increment has {dW.shape[-1]} modes, model has {model.K}")
    if u.parity != EVEN:
        raise SpectralError("apply_noise expects an even field")
    if model.grid_shape != tuple(u.grid_shape):
        raise ValueError("noise model grid does not match the field")
    psi = SpectralField(combine_modes(model.psi_stack, dW), EVEN)
    chi = combine_modes(model.chi_stack, dW)
    return SpectralField(product(psi, u).coeffs + chi, EVEN)


# --- empirical check of the growth and Lipschitz bounds ---------------------

@dataclass
class NoiseBoundReport:
    constants: dict
    bound: float
    samples: int
    passed: bool

    def to_dict(self) -> dict:
        return {"constants": self.constants, "bound": self.bound, "samples": self.samples, "pass": self.passed}


def _sigma_stack(u: SpectralField, model: NoiseModel, with_chi: bool = True) -> np.ndarray:
    """(K, Nx, Nz) coefficients of psi_k u (+ chi_k)."""
    psi = SpectralField(model.psi_stack, EVEN)
    uu = SpectralField(np.broadcast_to(u.coeffs, model.psi_stack.shape), EVEN)
    out = product(psi, uu).coeffs
    if with_chi:
        out = out + model.chi_stack
    return out


def _max_derivative_hs(stack: np.ndarray, grid, s: int) -> float:
    """max over |a| <= s of sqrt(sum_k ||D^a d_z sigma_k||^2)."""
    kx, kz = wavenumbers(*grid)
    power = np.sum(np.abs(stack) ** 2, axis=0) * kz**2
    best = 0.0
    for j in range(s + 1):
        for a in range(j + 1):
            best = max(best, float(np.sqrt(np.sum(kx ** (2 * a) * kz ** (2 * (j - a)) * power))))
    return best


def verify_noise_bounds(model: NoiseModel, s: int, sample_count: int, rng: np.random.Generator,
                        max_mode: int | None = 8, bound_factor: float = 2.0) -> NoiseBoundReport:
    """Smallest constants making the four growth/Lipschitz inequalities hold.

    growth:      ||sigma(u)||_HS           <= C (1 + ||u||)
    growth_top:  ||D^a d_z sigma(u)||_HS   <= C (1 + ||u||_s)     for |a| <= s
    lipschitz:   ||sigma(u) - sigma(u#)||  <= C ||u - u#||
    lipschitz_top: same with D^a d_z and ||u - u#||_s
    Passes when every constant is <= bound_factor * (kappa1 + kappa2).
    """
    if sample_count < 10:
        raise ValueError("need at least 10 samples")
    grid = model.grid_shape
    consts = {"growth": 0.0, "growth_top": 0.0, "lipschitz": 0.0, "lipschitz_top": 0.0}
    for _ in range(sample_count):
        amp = float(np.exp(rng.uniform(np.log(1e-2), np.log(1e2))))
        u = random_h_field(grid, rng, max_mode=max_mode, amplitude=amp)
        u2 = random_h_field(grid, rng, max_mode=max_mode, amplitude=amp * rng.uniform(0.1, 2.0))
        sig = _sigma_stack(u, model)
        l2u = np.sqrt(np.sum(np.abs(u.coeffs) ** 2))
        consts["growth"] = max(consts["growth"], float(np.sqrt(np.sum(np.abs(sig) ** 2))) / (1 + l2u))
        consts["growth_top"] = max(consts["growth_top"], _max_derivative_hs(sig, grid, s) / (1 + ds_norm(u, s)))
        d = SpectralField(u.coeffs - u2.coeffs, EVEN)
        dsig = _sigma_stack(d, model, with_chi=False)
        l2d = np.sqrt(np.sum(np.abs(d.coeffs) ** 2))
        if l2d > 0:
            consts["lipschitz"] = max(consts["lipschitz"], float(np.sqrt(np.sum(np.abs(dsig) ** 2))) / l2d)
            consts["lipschitz_top"] = max(consts["lipschitz_top"], _max_derivative_hs(dsig, grid, s) / ds_norm(d, s))
    bound = bound_factor * (model.kappa1 + model.kappa2)
    passed = all(c <= bound * (1 + 1e-12) for c in consts.values())
    return NoiseBoundReport(consts, bound, sample_count, passed)

