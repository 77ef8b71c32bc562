"""Diagnostics: cancellation identity, Galerkin failure, Cauchy tables,
pathwise uniqueness, Rayleigh preservation and ensemble moments."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .dynamics import TAU, SimConfig, simulate_ensemble
from .fields import in_H, random_h_field, vertical_velocity, vertical_velocity_grid
from .initial import check_initial, perturbed_profile
from .norms import hs_multiplier
from .regularize import spectral_projection
from .spectral import (
    EVEN,
    SpectralField,
    _synthesize,
    derivative,
    integer_wavenumbers,
    l2_inner,
    l2_norm,
    resample,
)
from .stochastic import (
    NoiseModel,
    default_noise_model,
    draw_increments,
    geometric_noise_model,
    vertical_additive_model,
    zero_noise_model,
)

EPS = 1e-300


@dataclass(frozen=True)
class NoiseSettings:
    kind: str = "default"          # default | zero | geometric | vertical
    K: int = 16
    kappa1: float = 0.01
    kappa2: float = 0.001
    decay: float = 2.0
    amplitude: float = 1e-7        # geometric: c; vertical: mode amplitude
    modes: tuple = ()              # vertical: list of m2

    def build(self, grid, s: int) -> NoiseModel:
        if self.kind == "default":
            return default_noise_model(grid, self.K, self.kappa1, self.kappa2, s, self.decay)
        if self.kind == "zero":
            return zero_noise_model(grid, self.K, s)
        if self.kind == "geometric":
            return geometric_noise_model(grid, self.amplitude, s)
        if self.kind == "vertical":
            modes = self.modes or tuple(range(1, self.K + 1))
            return vertical_additive_model(grid, modes, self.amplitude, s)
        raise ValueError(f"unknown noise kind {self.kind!r}")


@dataclass(frozen=True)
class InitialSettings:
    kind: str = "profile"          # profile | random | constant
    amplitude: float = 0.5
    width: float = 0.018
    eps: float = 1e-3
    max_mode: int = 3
    decay: float = 2.0
    seed: int = 12345

    def build(self, grid) -> SpectralField:
        rng = np.random.default_rng(self.seed)
        if self.kind == "profile":
            return perturbed_profile(grid, rng, self.amplitude, self.width, self.eps, self.max_mode)
        if self.kind == "random":
            return random_h_field(grid, rng, max_mode=self.max_mode, decay=self.decay, amplitude=self.amplitude)
        if self.kind == "constant":
            return SpectralField.constant(self.amplitude, grid)
        raise ValueError(f"unknown initial kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    ensemble_size: int = 8
    ladder: tuple = (4 * np.pi, 8 * np.pi, 16 * np.pi, 32 * np.pi)
    reference: float = 64 * np.pi
    M_bound: float | None = None
    noise: NoiseSettings = field(default_factory=NoiseSettings)
    initial: InitialSettings = field(default_factory=InitialSettings)

    def __post_init__(self):
        if self.ensemble_size < 1:
            raise ValueError("ensemble size must be positive")
        lad = tuple(float(j) for j in self.ladder)
        if any(b <= a for a, b in zip(lad, lad[1:])):
            raise ValueError("ladder must be strictly increasing")
        object.__setattr__(self, "ladder", lad)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sim"] = self.sim.to_dict()
        d["ladder"] = list(self.ladder)
        d["noise"]["modes"] = list(self.noise.modes)
        return d

    def noise_model(self) -> NoiseModel:
        return self.noise.build(self.sim.grid, self.sim.s)

    def initial_field(self) -> SpectralField:
        u0 = self.initial.build(self.sim.grid)
        if self.M_bound is not None:
            rep = check_initial(u0, self.sim.kappa, self.sim.band, self.sim.s, self.M_bound)
            if not rep["within_M"]:
                raise ValueError(f"initial ||u0||_s~ = {rep['norm_s_kappa']:.6g} is not below M/2")
        return u0


def content_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=float).encode()).hexdigest()


# --- cancellation ----------------------------------------------------------

def _x_derivative_grid(values: np.ndarray, order: int) -> np.ndarray:
    """d_x^order of grid data periodic in x only."""
    nx = values.shape[-2]
    kx = 2 * np.pi * sfft.fftfreq(nx, 1.0 / nx)[:, None]
    return sfft.ifft((1j * kx) ** order * sfft.fft(values, axis=-2), axis=-2).real


def cancellation_check(u, s: int) -> float:
    """|int d_x^s w d_x^s v| / (||d_x^s w|| ||d_x^s v|| + eps).

    For u in H this is a Parseval sum. Outside H, w picks up the secular
    term -z d_x u_0(x) and the integral is a grid quadrature over [0,1)^2.
    """
    u = getattr(u, "u", u)
    v = derivative(u, "z", 1)
    dv = derivative(v, "x", s) if s else v
    if in_H(u):
        w = vertical_velocity(u)
        dw = derivative(w, "x", s) if s else w
        num = abs(l2_inner(dw, dv))
        den = l2_norm(dw) * l2_norm(dv)
    else:
        wg = _x_derivative_grid(vertical_velocity_grid(u), s) if s else vertical_velocity_grid(u)
        vg = dv.physical()
        num = abs(float(np.mean(wg * vg)))
        den = float(np.sqrt(np.mean(wg**2) * np.mean(vg**2)))
    return float(num / (den + EPS)) if den > 0 else 0.0


def galerkin_cancellation_demo(u, s: int, n: float, kappa_floor: float = 0.1) -> float:
    """Normalized gap |int P_n(h) q - int h q| with h = d_x^s w d_z v, q = d_x^s v / g.

    g = max(d_z v, kappa_floor). Without the projection the two integrals
    agree, and both reduce to int d_x^s w d_x^s v where d_z v >= kappa_floor.
    Products are formed on a grid padded 2x so h is represented exactly.
    """
    u = getattr(u, "u", u)
    nx, nz = u.grid_shape
    big = (2 * nx, 2 * nz)
    up = resample(u, big)
    v = derivative(up, "z", 1)
    dv = derivative(v, "x", s) if s else v
    w = vertical_velocity(up)
    dw = derivative(w, "x", s) if s else w
    dzv = derivative(v, "z", 1).physical()
    h = dw.physical() * dzv
    q = dv.physical() / np.maximum(dzv, kappa_floor)
    hc = sfft.fft2(h) / h.size
    h_proj = _synthesize(spectral_projection(SpectralField(hc), n).coeffs).real
    gap = abs(float(np.mean((h_proj - h) * q)))
    scale = float(np.sqrt(np.mean(h**2) * np.mean(q**2)))
    return gap / scale if scale > 0 else 0.0


def product_band(u: SpectralField) -> float:
    """Largest |k| carried by a product of two fields with u's support."""
    mx, mz = integer_wavenumbers(*u.grid_shape)
    a = np.abs(u.coeffs)
    if not a.any():
        return 0.0
    nz_mask = a > 1e-12 * a.max()  # ignore transform round-off
    if not nz_mask.any():
        return 0.0
    bx = np.max(np.abs(np.broadcast_to(mx, u.grid_shape)[nz_mask]))
    bz = np.max(np.abs(np.broadcast_to(mz, u.grid_shape)[nz_mask]))
    return float(2 * np.pi * np.hypot(2 * bx, 2 * bz))


# --- Cauchy table ----------------------------------------------------------

def ds_distance(a: np.ndarray, b: np.ndarray, s: int) -> np.ndarray:
    """||a - b|| + ||d_z (a - b)||_{H^s} over leading axes."""
    d = a - b
    grid = d.shape[-2:]
    from .spectral import wavenumbers

    _, kz = wavenumbers(*grid)
    p = np.abs(d) ** 2
    return np.sqrt(np.sum(p, axis=(-2, -1))) + np.sqrt(np.sum(hs_multiplier(tuple(grid), s) * kz**2 * p, axis=(-2, -1)))


@dataclass
class CauchyTable:
    levels: list
    mean: np.ndarray
    stderr: np.ndarray
    column_max: np.ndarray
    stop_times: dict

    def rows(self):
        for i, j in enumerate(self.levels):
            for k_idx, k in enumerate(self.levels):
                yield {"j": j, "k": k, "mean": float(self.mean[i, k_idx]), "stderr": float(self.stderr[i, k_idx])}


def cauchy_study(xcfg: ExperimentConfig, model: NoiseModel | None = None, initial: SpectralField | None = None) -> CauchyTable:
    """sup_{t <= tau_jk} ||u^j - u^k||_s over the ladder plus the reference level.

    Every level starts from P_j u0 and sees the same Brownian increments.
    """
    if len(xcfg.ladder) < 2:
        raise ValueError("ladder needs at least two levels")
    cfg = xcfg.sim.replace(stopping=TAU, run_past_stopping=True)
    model = model if model is not None else xcfg.noise_model()
    u0 = initial if initial is not None else xcfg.initial_field()
    levels = list(xcfg.ladder) + [float(xcfg.reference)]
    paths = np.arange(xcfg.ensemble_size)
    incs = draw_increments(cfg.seed, paths, cfg.n_steps, model.K, cfg.dt, cfg.noise_substeps)
    runs = {}
    for j in levels:
        runs[j] = simulate_ensemble(cfg, model, spectral_projection(u0, j), paths=paths,
                                    increments=incs, keep_history=True)
    L = len(levels)
    mean = np.zeros((L, L))
    err = np.zeros((L, L))
    for a in range(L):
        for b in range(a + 1, L):
            ra, rb = runs[levels[a]], runs[levels[b]]
            dist = ds_distance(ra.history, rb.history, cfg.s)           # (T+1, M)
            stop = np.minimum(ra.stop_step, rb.stop_step)
            tmask = np.arange(dist.shape[0])[:, None] <= stop[None, :]
            sup = np.max(np.where(tmask, dist, 0.0), axis=0)
            mean[a, b] = mean[b, a] = sup.mean()
            err[a, b] = err[b, a] = sup.std(ddof=1) / np.sqrt(len(sup)) if len(sup) > 1 else 0.0
    col = np.array([mean[k + 1:, k].max() for k in range(L - 1)])
    stops = {j: runs[j].stop_time.tolist() for j in levels}
    return CauchyTable(levels, mean, err, col, stops)


# --- uniqueness ------------------------------------------------------------

@dataclass
class UniquenessReport:
    times: np.ndarray
    distance: np.ndarray
    max_distance: float
    rate: float
    slope: float
    identical: bool | None = None


def fitted_rates(times: np.ndarray, d: np.ndarray):
    """(smallest C with d(t) <= d(0) e^{Ct}, least-squares slope of log d)."""
    t, d = np.asarray(times), np.asarray(d)
    ok = (t > 0) & (d > 0)
    if d[0] <= 0 or not ok.any():
        return 0.0, 0.0
    logs = np.log(d[ok] / d[0])
    rate = float(np.max(logs / t[ok]))
    tt = np.concatenate([[0.0], t[ok]])
    ll = np.concatenate([[0.0], logs])
    slope = float(np.polyfit(tt, ll, 1)[0])
    return rate, slope


def uniqueness_check(xcfg: ExperimentConfig, delta: float = 0.0, seed2: int | None = None,
                     model: NoiseModel | None = None, initial: SpectralField | None = None,
                     direction_seed: int = 777) -> UniquenessReport:
    """Two runs with the same noise; the second starts at u0 + delta * e (||e|| = 1, e in H).

    With delta = 0 and the same seed the two histories must agree bitwise.
    ``seed2`` runs the second path on a different stream instead.
    """
    cfg = xcfg.sim
    model = model if model is not None else xcfg.noise_model()
    u0 = initial if initial is not None else xcfg.initial_field()
    e = random_h_field(cfg.grid, np.random.default_rng(direction_seed), max_mode=4)
    u1 = u0
    u2 = SpectralField(u0.coeffs + delta * e.coeffs, EVEN) if delta else u0
    r1 = simulate_ensemble(cfg, model, u1, paths=[0], keep_history=True)
    cfg2 = cfg if seed2 is None else cfg.replace(seed=seed2)
    r2 = simulate_ensemble(cfg2, model, u2, paths=[0], keep_history=True)
    diff = r1.history[:, 0] - r2.history[:, 0]
    dist = np.sqrt(np.sum(np.abs(diff) ** 2, axis=(-2, -1)))
    identical = bool(np.array_equal(r1.history, r2.history))
    rate, slope = fitted_rates(r1.times, dist)
    return UniquenessReport(r1.times, dist, float(dist.max()), rate, slope, identical)


# --- Rayleigh preservation -------------------------------------------------

@dataclass
class RayleighStudy:
    dts: list
    max_deviation: list
    overshoot: list
    activated_fraction: list
    constant: list
    kappa: float

    def rows(self):
        for i, dt in enumerate(self.dts):
            yield {"dt": dt, "max_deviation": self.max_deviation[i], "overshoot": self.overshoot[i],
                   "activated_fraction": self.activated_fraction[i], "C": self.constant[i]}


def rayleigh_preservation_study(xcfg: ExperimentConfig, dts=None, model: NoiseModel | None = None,
                                initial: SpectralField | None = None) -> RayleighStudy:
    """max over paths and time of ||d_zz u - d_zz u0||_inf, per dt.

    All dt levels share one Brownian path per member: each coarse increment
    is the sum of the finest-level draws it covers. The modified system is
    run past eta so the kappa cut-off is what keeps the deviation in check.
    """
    base = xcfg.sim
    dts = sorted(dts or [base.dt, base.dt / 2], reverse=True)
    fine = dts[-1]
    model = model if model is not None else xcfg.noise_model()
    u0 = initial if initial is not None else xcfg.initial_field()
    paths = np.arange(xcfg.ensemble_size)
    out = RayleighStudy([], [], [], [], [], base.kappa)
    for dt in dts:
        r = int(round(dt / fine))
        if abs(r * fine - dt) > 1e-12 * dt:
            raise ValueError("dt levels must be integer multiples of the finest")
        cfg = base.replace(dt=dt, run_past_stopping=True, noise_substeps=r)
        res = simulate_ensemble(cfg, model, u0, paths=paths)
        mx = float(res.deviation.max())
        over = max(0.0, mx - cfg.kappa)
        out.dts.append(dt)
        out.max_deviation.append(mx)
        out.overshoot.append(over)
        out.activated_fraction.append(float(np.mean(np.any(res.theta_kappa < 1.0, axis=1))))
        out.constant.append(over / np.sqrt(dt))
    return out


# --- moments ---------------------------------------------------------------

@dataclass
class MomentSeries:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    envelope: float
    p: int
    norm: str

    def rows(self):
        for t, m, e in zip(self.times, self.mean, self.stderr):
            yield {"t": float(t), "mean": float(m), "stderr": float(e)}


def envelope_constant(times: np.ndarray, m: np.ndarray) -> float:
    """Least-squares slope of log(m(t)/m(0)) through the origin."""
    t = np.asarray(times)
    if not m[0] > 0:
        return float("nan")
    y = np.log(np.asarray(m) / m[0])
    return float(np.dot(t, y) / np.dot(t, t)) if np.dot(t, t) > 0 else 0.0


def ensemble_moments(xcfg: ExperimentConfig, p: int = 2, norm: str = "ds_kappa", running_sup: bool = True,
                     model: NoiseModel | None = None, initial: SpectralField | None = None) -> MomentSeries:
    """Sample mean of sup_{t' <= t} ||u(t')||^p with its standard error."""
    if p not in (2, 4):
        raise ValueError("p must be 2 or 4")
    if xcfg.ensemble_size < 8:
        raise ValueError("ensemble size must be at least 8")
    model = model if model is not None else xcfg.noise_model()
    u0 = initial if initial is not None else xcfg.initial_field()
    res = simulate_ensemble(xcfg.sim, model, u0, paths=np.arange(xcfg.ensemble_size))
    series = {"ds_kappa": res.ds_kappa, "l2": res.l2, "ds": res.ds_cut}[norm] ** p
    if running_sup:
        series = np.maximum.accumulate(series, axis=1)
    mean = series.mean(axis=0)
    err = series.std(axis=0, ddof=1) / np.sqrt(series.shape[0])
    return MomentSeries(res.times, mean, err, envelope_constant(res.times, mean), p, norm)


def viscosity_uniformity(xcfg: ExperimentConfig, n_values=(8, 32, 128), p: int = 2, **kw) -> dict:
    """Envelope constants across n_visc and their relative spread."""
    consts = {}
    for n in n_values:
        ms = ensemble_moments(xcfg.replace(sim=xcfg.sim.replace(n_visc=int(n))), p=p, **kw)
        consts[int(n)] = ms.envelope
    vals = np.array(list(consts.values()))
    spread = float((vals.max() - vals.min()) / max(np.max(np.abs(vals)), EPS))
    return {"constants": consts, "spread": spread}


def linear_rate(times, mean) -> float:
    """Least-squares slope of mean(t) with free intercept."""
    return float(np.polyfit(np.asarray(times), np.asarray(mean), 1)[0])


@dataclass
class StrongOrderStudy:
    dts: list
    errors: list
    stderr: list
    order: float

    def rows(self):
        for dt, e, se in zip(self.dts, self.errors, self.stderr):
            yield {"dt": dt, "error": e, "stderr": se}


def strong_order_study(dts, paths: int = 1024, c: float = 1.0, a0: float = 1.0, T: float = 1.0,
                       seed: int = 2024, grid=(4, 4)) -> StrongOrderStudy:
    """E|u_T - u(T)| for du = c u dW started from the constant a0.

    With psi = c constant and u x-independent and z-constant, the full
    stepper reduces to scalar Euler-Maruyama; the exact solution
    a0 exp(c W_T - c^2 T / 2) uses the same Brownian path at every level.
    """
    dts = sorted(float(d) for d in dts)
    fine = dts[0]
    n_fine = int(round(T / fine))
    model = geometric_noise_model(grid, c)
    ids = np.arange(paths)
    w_T = draw_increments(seed, ids, 1, 1, T, n_fine)[:, 0, 0]
    exact = a0 * np.exp(c * w_T - 0.5 * c * c * T)
    u0 = SpectralField.constant(a0, grid)
    errs, ses = [], []
    for dt in dts:
        r = int(round(dt / fine))
        cfg = SimConfig(dt=dt, T=T, grid=grid, seed=seed, noise_substeps=r, run_past_stopping=True,
                        rho=1e12, kappa=0.1)
        res = simulate_ensemble(cfg, model, u0, paths=ids)
        err = np.abs(res.final[:, 0, 0].real - exact)
        errs.append(float(err.mean()))
        ses.append(float(err.std(ddof=1) / np.sqrt(paths)))
    order = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    return StrongOrderStudy(dts, errs, ses, order)


def ito_rate(model: NoiseModel) -> float:
    """sum_k ||P_H chi_k||^2: the growth rate of E||u||^2 for the additive linear case."""
    from .fields import project_to_H

    return float(sum(l2_norm(project_to_H(c)) ** 2 for c in model.chi))


# --- output ----------------------------------------------------------------

def write_csv(path, rows) -> Path:
    rows = list(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if rows:
            wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
            wr.writeheader()
            for r in rows:
                wr.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    return path


def metadata_record(name: str, xcfg: ExperimentConfig, model: NoiseModel, extra: dict | None = None) -> dict:
    cfg = xcfg.to_dict()
    rec = {
        "experiment": name,
        "config_hash": content_hash(cfg),
        "seed": xcfg.sim.seed,
        "paths": list(range(xcfg.ensemble_size)),
        "noise_hash": model.content_hash(),
        "config": cfg,
    }
    rec.update(extra or {})
    return rec


def append_ndjson(path, record: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a") as fh:
        fh.write(json.dumps(record, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")

