"""Modified and approximating systems, Euler-Maruyama stepping, stopping times.

All four variants share one drift

    du = -theta_rho(||u||_c) theta_kappa(||d_zz u - d_zz u0||_inf) P_H(u u_x + w u_z + L u) dt
         + theta_rho theta_kappa P_H sigma(u) dW

with L the variant's (positive) linear operator in Fourier space:

    euler_modified   0
    euler_approx     |k|^2 / n
    nse_modified     nu k2^2
    nse_approx       nu k2^2 + k1^2 / n

and c = s-1 for the Euler variants, s-2 for the viscous ones. Paths are
integrated as a batch along a leading axis; each path draws from its own
Philox stream so results do not depend on how the batch is split.
"""
from __future__ import annotations

import dataclasses
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fields import H_TOL, NotInHError, VelocityState, h_violation, project_to_H
from .norms import (
    DEFAULT_BAND,
    DS,
    DS_KAPPA,
    L2,
    NormReport,
    RayleighReport,
    WeightMode,
    _rayleigh_from_grid,
    ds_norm,
    dskappa_value,
    rayleigh_monitor,
)
from .regularize import QUINTIC, CutoffSpec, theta
from .spectral import (
    EVEN,
    SpectralField,
    _synthesize,
    dealias_mask,
    forward_transform,
    symmetrize,
    wavenumbers,
)
from .stochastic import NoiseModel, WienerIncrement, combine_modes, draw_increments, sample_increment

EULER_MODIFIED = "euler_modified"
EULER_APPROX = "euler_approx"
NSE_MODIFIED = "nse_modified"
NSE_APPROX = "nse_approx"
VARIANTS = (EULER_MODIFIED, EULER_APPROX, NSE_MODIFIED, NSE_APPROX)

EXPLICIT = "explicit"
EXPONENTIAL = "exponential"

ETA = "eta"
TAU = "tau_jT"

NORM_THRESHOLD = "norm_threshold"
RAYLEIGH_DRIFT = "rayleigh_drift"
HORIZON = "horizon"


class ConfigError(ValueError):
    pass


class StabilityError(RuntimeError):
    def __init__(self, dt: float, budget: float):
        super().__init__(f"dt = {dt:g} exceeds the explicit stability budget {budget:.6g}")
        self.dt = dt
        self.budget = budget


@dataclass(frozen=True)
class SimConfig:
    variant: str = EULER_MODIFIED
    nu: float = 0.0
    n_visc: int = 32
    rho: float = 1e12
    kappa: float = 0.1
    s: int = 6
    dt: float = 1e-3
    T: float = 0.1
    grid: tuple[int, int] = (64, 64)
    seed: int = 0
    linear_treatment: str = EXPONENTIAL
    cutoff_family: str = QUINTIC
    band: tuple[float, float] = DEFAULT_BAND
    stopping: str = ETA
    run_past_stopping: bool = False
    noise_substeps: int = 1
    snapshot_every: int = 0
    deviation_domain: str = "band"

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(int(g) for g in self.grid))
        object.__setattr__(self, "band", tuple(float(b) for b in self.band))
        self.validate()

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.is_nse:
            if not self.nu > 0:
                raise ConfigError(f"{self.variant} needs nu > 0")
            if self.s < 7:
                raise ConfigError(f"{self.variant} needs s >= 7, got s = {self.s}")
        else:
            if self.nu != 0:
                raise ConfigError(f"{self.variant} needs nu = 0")
            if self.s < 6:
                raise ConfigError(f"{self.variant} needs s >= 6, got s = {self.s}")
        if self.s > 12:
            raise ConfigError("s > 12 is not supported")
        if self.is_approx and not (isinstance(self.n_visc, (int, np.integer)) and self.n_visc > 0):
            raise ConfigError("n_visc must be a positive integer")
        if not (0 < self.kappa < 0.5):
            raise ConfigError(f"kappa must lie in (0, 1/2), got {self.kappa}")
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise ConfigError("rho must be positive and finite")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.T >= 0:
            raise ConfigError("T must be nonnegative")
        if abs(self.T / self.dt - round(self.T / self.dt)) > 1e-9 * max(1.0, self.T / self.dt):
            raise ConfigError("T must be an integer multiple of dt")
        if len(self.grid) != 2 or min(self.grid) < 4:
            raise ConfigError("grid must be two sizes >= 4")
        if self.linear_treatment not in (EXPLICIT, EXPONENTIAL):
            raise ConfigError(f"unknown linear treatment {self.linear_treatment!r}")
        if self.stopping not in (ETA, TAU):
            raise ConfigError(f"unknown stopping flavor {self.stopping!r}")
        if self.deviation_domain not in ("band", "torus"):
            raise ConfigError(f"deviation_domain must be 'band' or 'torus', got {self.deviation_domain!r}")
        if self.noise_substeps < 1 or self.snapshot_every < 0:
            raise ConfigError("noise_substeps >= 1 and snapshot_every >= 0 required")
        lo, hi = self.band
        if not 0 <= lo < hi <= 1:
            raise ConfigError(f"bad monitored band {self.band}")
        CutoffSpec(self.rho, self.cutoff_family)

    @property
    def is_nse(self) -> bool:
        return self.variant in (NSE_MODIFIED, NSE_APPROX)

    @property
    def is_approx(self) -> bool:
        return self.variant in (EULER_APPROX, NSE_APPROX)

    @property
    def cutoff_norm_index(self) -> int:
        return self.s - 2 if self.is_nse else self.s - 1

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def nu_eff(self) -> float:
        return self.nu + (1.0 / self.n_visc if self.is_approx else 0.0)

    def linear_symbol(self) -> np.ndarray:
        kx, kz = wavenumbers(*self.grid)
        lam = np.zeros(self.grid)
        if self.variant == EULER_APPROX:
            lam = (kx**2 + kz**2) / self.n_visc
        elif self.variant == NSE_MODIFIED:
            lam = self.nu * kz**2 + 0.0 * kx
        elif self.variant == NSE_APPROX:
            lam = self.nu * kz**2 + kx**2 / self.n_visc
        return lam

    def stability_budget(self) -> float:
        """0.5 / (nu_eff k_max^2) over the retained band; inf without dissipation."""
        if self.nu_eff == 0:
            return math.inf
        kx, kz = wavenumbers(*self.grid)
        kmax2 = float(np.max(np.where(dealias_mask(*self.grid), kx**2 + kz**2, 0.0)))
        return 0.5 / (self.nu_eff * kmax2)

    def check_stability(self) -> None:
        if self.linear_treatment == EXPLICIT and self.dt > self.stability_budget():
            raise StabilityError(self.dt, self.stability_budget())

    def replace(self, **kw) -> "SimConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["grid"] = list(self.grid)
        d["band"] = list(self.band)
        return d


@dataclass(frozen=True)
class StoppingEvent:
    time: float
    cause: str
    value_at_trigger: float
    step: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# --- drift and diffusion ---------------------------------------------------

def _grid_max(a: np.ndarray):
    out = np.max(np.abs(a), axis=(-2, -1))
    return float(out) if np.ndim(out) == 0 else out


def deviation(dzz: np.ndarray, dzz_u0: np.ndarray, cfg: "SimConfig"):
    """Grid max of |d_zz u - d_zz u0| over the monitored band (or the whole torus)."""
    d = dzz - dzz_u0
    if cfg.deviation_domain == "band":
        d = d[..., _band_rows(cfg)]
    return _grid_max(d)


def _dzz_grid(c: np.ndarray) -> np.ndarray:
    _, kz = wavenumbers(*c.shape[-2:])
    return _synthesize(-(kz**2) * c).real


def cutoff_factors(u: SpectralField, dzz_u0: np.ndarray, cfg: SimConfig, dzz_u: np.ndarray | None = None):
    """(theta_rho, theta_kappa, D-norm argument, L-inf deviation)."""
    norm = ds_norm(u, cfg.cutoff_norm_index)
    if dzz_u is None:
        dzz_u = _dzz_grid(u.coeffs)
    dev = deviation(dzz_u, dzz_u0, cfg)
    t_rho = theta(norm, CutoffSpec(cfg.rho, cfg.cutoff_family))
    t_kap = theta(dev, CutoffSpec(cfg.kappa, cfg.cutoff_family))
    return t_rho, t_kap, norm, dev


def advection(u: SpectralField) -> SpectralField:
    """P_H(u u_x + w u_z), dealiased."""
    c = u.coeffs
    kx, kz = wavenumbers(*u.grid_shape)
    if np.any(h_violation(u) > H_TOL):
        raise NotInHError("state left H: nonintegrable vertical velocity")
    safe_kz = np.where(kz == 0, 1.0, kz)
    w_c = np.where(kz == 0, 0.0, -(kx / safe_kz) * c)
    uu, ux, uz, ww = _synthesize(np.stack([c, 1j * kx * c, 1j * kz * c, w_c])).real
    return project_to_H(forward_transform(uu * ux + ww * uz, EVEN))


def _as_state(u) -> SpectralField:
    return u.u if isinstance(u, VelocityState) else u


def _broadcast_factor(f, c: np.ndarray):
    f = np.asarray(f, dtype=float)
    return f[..., None, None] if f.ndim else f


def drift(state, u0_state, cfg: SimConfig) -> SpectralField:
    """-theta_rho theta_kappa P_H(u u_x + w u_z + L u)."""
    u = _as_state(state)
    u0 = _as_state(u0_state)
    t_rho, t_kap, _, _ = cutoff_factors(u, _dzz_grid(u0.coeffs), cfg)
    f = _broadcast_factor(np.asarray(t_rho) * np.asarray(t_kap), u.coeffs)
    inner = advection(u).coeffs + cfg.linear_symbol() * u.coeffs
    return SpectralField(-f * inner, EVEN)


def diffusion(state, u0_state, inc, model: NoiseModel, cfg: SimConfig) -> SpectralField:
    """theta_rho theta_kappa P_H sigma(u) dW."""
    from .stochastic import apply_noise

    u = _as_state(state)
    u0 = _as_state(u0_state)
    t_rho, t_kap, _, _ = cutoff_factors(u, _dzz_grid(u0.coeffs), cfg)
    f = _broadcast_factor(np.asarray(t_rho) * np.asarray(t_kap), u.coeffs)
    return SpectralField(f * project_to_H(apply_noise(u, inc, model)).coeffs, EVEN)


class _Stepper:
    """Pre-bound pieces of one Euler-Maruyama step for a fixed (cfg, model, u0)."""

    def __init__(self, cfg: SimConfig, model: NoiseModel, u0: SpectralField):
        if model.grid_shape != cfg.grid:
            raise ConfigError(f"noise model grid {model.grid_shape} differs from {cfg.grid}")
        if tuple(u0.grid_shape) != cfg.grid:
            raise ConfigError(f"initial grid {tuple(u0.grid_shape)} differs from {cfg.grid}")
        cfg.check_stability()
        self.cfg = cfg
        self.model = model
        self.lam = cfg.linear_symbol()
        self.dzz_u0 = _dzz_grid(u0.coeffs)
        self.rho_spec = CutoffSpec(cfg.rho, cfg.cutoff_family)
        self.kap_spec = CutoffSpec(cfg.kappa, cfg.cutoff_family)
        self.noisy = not model.is_zero

    def factors(self, c: np.ndarray, dzz: np.ndarray):
        u = SpectralField(c, EVEN)
        norm = np.asarray(ds_norm(u, self.cfg.cutoff_norm_index))
        dev = np.asarray(deviation(dzz, self.dzz_u0, self.cfg))
        return theta(norm, self.rho_spec), theta(dev, self.kap_spec), norm, dev

    def noise(self, c: np.ndarray, dW: np.ndarray) -> np.ndarray:
        psi = _synthesize(combine_modes(self.model.psi_stack, dW)).real
        vals = psi * _synthesize(c).real
        g = forward_transform(vals, EVEN).coeffs + combine_modes(self.model.chi_stack, dW)
        return project_to_H(SpectralField(symmetrize(g, EVEN), EVEN)).coeffs

    def step(self, c: np.ndarray, f, dW: np.ndarray | None) -> np.ndarray:
        """One step with combined cut-off factor f (scalar or per-path)."""
        cfg = self.cfg
        fb = _broadcast_factor(f, c)
        nonlin = advection(SpectralField(c, EVEN)).coeffs
        g = fb * self.noise(c, dW) if (self.noisy and dW is not None) else 0.0
        if cfg.linear_treatment == EXPONENTIAL:
            new = np.exp(-cfg.dt * fb * self.lam) * (c - cfg.dt * fb * nonlin + g)
        else:
            new = c - cfg.dt * fb * (nonlin + self.lam * c) + g
        return project_to_H(SpectralField(symmetrize(new, EVEN), EVEN)).coeffs


def em_step(state: VelocityState, u0_state: VelocityState, cfg: SimConfig, model: NoiseModel,
            rng: np.random.Generator):
    """Advance one step; returns (state', (theta_rho, theta_kappa), increment)."""
    stepper = _Stepper(cfg, model, _as_state(u0_state))
    c = state.u.coeffs
    t_rho, t_kap, _, _ = stepper.factors(c, _dzz_grid(c))
    inc = sample_increment(cfg.dt, model.K, rng)
    new = stepper.step(c, float(t_rho) * float(t_kap), inc.dW)
    return VelocityState.from_u(SpectralField(new, EVEN), state.time + cfg.dt), (float(t_rho), float(t_kap)), inc


# --- trajectories ----------------------------------------------------------

@dataclass
class TrajectoryRecord:
    times: list = field(default_factory=list)
    norm_series: list = field(default_factory=list)
    cutoff_series: list = field(default_factory=list)
    rayleigh_series: list = field(default_factory=list)
    deviation_series: list = field(default_factory=list)
    stopping: StoppingEvent | None = None
    snapshots: list = field(default_factory=list)
    seed: int = 0
    config: dict = field(default_factory=dict)
    final: VelocityState | None = None

    def norm(self, kind: str) -> np.ndarray:
        return np.array([[r.value for r in reps if r.kind == kind][0] for reps in self.norm_series])

    def ndjson_lines(self):
        for i, t in enumerate(self.times):
            yield json.dumps({
                "t": t,
                "norms": [r.to_dict() for r in self.norm_series[i]],
                "theta": list(self.cutoff_series[i]),
                "deviation": self.deviation_series[i],
                "rayleigh": self.rayleigh_series[i].to_dict(),
            }, sort_keys=True)

    def write_ndjson(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            for line in self.ndjson_lines():
                fh.write(line + "\n")
        return path


@dataclass
class EnsembleResult:
    """Per-path series, arrays of shape (M, n_times) unless noted."""

    times: np.ndarray
    paths: np.ndarray
    l2: np.ndarray
    ds_cut: np.ndarray
    ds_kappa: np.ndarray
    deviation: np.ndarray
    theta_rho: np.ndarray
    theta_kappa: np.ndarray
    rayleigh_min: np.ndarray
    rayleigh_max: np.ndarray
    stop_step: np.ndarray
    stop_cause: list
    final: np.ndarray
    history: np.ndarray | None = None

    @property
    def stop_time(self) -> np.ndarray:
        return self.times[self.stop_step]


def _stop_check(cfg: SimConfig, ds_cut, ds_kappa, dev, ds_kappa0):
    """Per-path (fired, cause, value) at one time index."""
    if cfg.stopping == ETA:
        hit_n = ds_cut >= cfg.rho / 2
        hit_r = dev >= cfg.kappa / 2
        val_n = ds_cut
    else:
        hit_n = ds_kappa >= 2.0 + ds_kappa0
        hit_r = dev >= cfg.kappa / 4
        val_n = ds_kappa
    cause = np.where(hit_n, NORM_THRESHOLD, np.where(hit_r, RAYLEIGH_DRIFT, ""))
    value = np.where(hit_n, val_n, dev)
    return hit_n | hit_r, cause, value


def simulate_ensemble(cfg: SimConfig, model: NoiseModel, initial, paths=None, increments=None,
                      keep_history: bool = False) -> EnsembleResult:
    """Integrate a batch of paths from a shared (or per-path) initial field.

    ``initial`` is a SpectralField, either unbatched or with one batch axis
    matching ``paths``. The Rayleigh reference u0 is per path. Without
    ``run_past_stopping`` a path is frozen from its stopping step on, so the
    series show u(t ^ stop). ``increments`` (M, n_steps, K) overrides the
    seeded draws.
    """
    u0 = _as_state(initial)
    if u0.parity != EVEN:
        raise ConfigError("initial field must be even in z")
    if np.any(h_violation(u0) > H_TOL):
        raise NotInHError("initial field is not in H")
    if paths is None:
        paths = np.arange(u0.batch_shape[0] if u0.batch_shape else 1)
    paths = np.asarray(paths)
    M = len(paths)
    c = np.broadcast_to(symmetrize(u0.coeffs, EVEN), (M,) + cfg.grid).copy()
    c = project_to_H(SpectralField(c, EVEN)).coeffs
    stepper = _Stepper(cfg, model, SpectralField(c, EVEN))
    n = cfg.n_steps
    if increments is None:
        increments = (draw_increments(cfg.seed, paths, n, model.K, cfg.dt, cfg.noise_substeps)
                      if stepper.noisy else None)
    elif increments.shape != (M, n, model.K):
        raise ValueError(f"increments shape {increments.shape} != {(M, n, model.K)}")

    times = np.arange(n + 1) * cfg.dt
    out = {k: np.empty((M, n + 1)) for k in
           ("l2", "ds_cut", "ds_kappa", "dev", "t_rho", "t_kap", "rmin", "rmax")}
    history = np.empty((n + 1, M) + cfg.grid, dtype=complex) if keep_history else None
    mode = WeightMode.floored(cfg.kappa)
    rows = _band_rows(cfg)

    def diagnose(i, c):
        dzz = _dzz_grid(c)
        t_rho, t_kap, norm, dev = stepper.factors(c, dzz)
        u = SpectralField(c, EVEN)
        out["l2"][:, i] = np.sqrt(np.sum(np.abs(c) ** 2, axis=(-2, -1)))
        out["ds_cut"][:, i] = norm
        out["ds_kappa"][:, i] = dskappa_value(u, cfg.s, mode, dzv=dzz)
        out["dev"][:, i] = dev
        out["t_rho"][:, i] = t_rho
        out["t_kap"][:, i] = t_kap
        out["rmin"][:, i] = dzz[..., rows].min(axis=(-2, -1))
        out["rmax"][:, i] = dzz[..., rows].max(axis=(-2, -1))
        if history is not None:
            history[i] = c
        return np.asarray(t_rho) * np.asarray(t_kap)

    stop_step = np.full(M, n)
    stop_cause = np.full(M, HORIZON, dtype=object)
    active = np.ones(M, dtype=bool)
    f = diagnose(0, c)
    ds_kappa0 = out["ds_kappa"][:, 0].copy()

    def check(i):
        fired, cause, _ = _stop_check(cfg, out["ds_cut"][:, i], out["ds_kappa"][:, i], out["dev"][:, i], ds_kappa0)
        new = fired & (stop_step == n) & (stop_cause == HORIZON)
        for p in np.nonzero(new)[0]:
            stop_step[p] = i
            stop_cause[p] = cause[p]
        if not cfg.run_past_stopping:
            active[new] = False

    check(0)
    for i in range(n):
        if not active.any():
            # every path is frozen: copy the last state forward
            for k in out:
                out[k][:, i + 1] = out[k][:, i]
            if history is not None:
                history[i + 1] = c
            continue
        dW = None if increments is None else increments[:, i, :]
        new = stepper.step(c, f, dW)
        c = np.where(active[:, None, None], new, c)
        f = diagnose(i + 1, c)
        check(i + 1)

    return EnsembleResult(
        times=times, paths=paths, l2=out["l2"], ds_cut=out["ds_cut"], ds_kappa=out["ds_kappa"],
        deviation=out["dev"], theta_rho=out["t_rho"], theta_kappa=out["t_kap"],
        rayleigh_min=out["rmin"], rayleigh_max=out["rmax"], stop_step=stop_step,
        stop_cause=list(stop_cause), final=c, history=history,
    )


def _band_rows(cfg: SimConfig) -> np.ndarray:
    from .norms import band_rows

    rows = band_rows(cfg.grid[1], cfg.band)
    if not rows.any():
        raise ConfigError(f"monitored band {cfg.band} contains no grid rows")
    return rows


def simulate(cfg: SimConfig, model: NoiseModel, initial, path: int = 0) -> TrajectoryRecord:
    """One path with the full per-step record.

    The run ends at the first stopping event unless ``cfg.run_past_stopping``.
    """
    u0 = _as_state(initial)
    rep = rayleigh_monitor(u0, cfg.kappa, cfg.band)
    if not (rep.min_val >= 2 * cfg.kappa and rep.max_val <= 1 / (2 * cfg.kappa)):
        warnings.warn("initial data does not satisfy the 2*kappa Rayleigh bounds on the band", stacklevel=2)
    stepper = _Stepper(cfg, model, u0)
    rec = TrajectoryRecord(seed=cfg.seed, config=cfg.to_dict())
    n = cfg.n_steps
    incs = (draw_increments(cfg.seed, [path], n, model.K, cfg.dt, cfg.noise_substeps)[0]
            if stepper.noisy else None)
    mode = WeightMode.floored(cfg.kappa)
    c = project_to_H(SpectralField(symmetrize(u0.coeffs, EVEN), EVEN)).coeffs
    ds_kappa0 = None

    for i in range(n + 1):
        t = i * cfg.dt
        dzz = _dzz_grid(c)
        t_rho, t_kap, norm, dev = stepper.factors(c, dzz)
        u = SpectralField(c, EVEN)
        dsk = float(dskappa_value(u, cfg.s, mode, dzv=dzz))
        if ds_kappa0 is None:
            ds_kappa0 = dsk
        rec.times.append(t)
        rec.norm_series.append([
            NormReport(L2, 0, float(np.sqrt(np.sum(np.abs(c) ** 2))), time=t),
            NormReport(DS, cfg.cutoff_norm_index, float(norm), time=t),
            NormReport(DS_KAPPA, cfg.s, dsk, weight_mode=mode.describe(), time=t),
        ])
        rec.cutoff_series.append((float(t_rho), float(t_kap)))
        rec.deviation_series.append(float(dev))
        rec.rayleigh_series.append(_rayleigh_from_grid(dzz, cfg.kappa, cfg.band))
        if cfg.snapshot_every and i % cfg.snapshot_every == 0:
            rec.snapshots.append(VelocityState.from_u(u, t))
        if rec.stopping is None:
            fired, cause, value = _stop_check(cfg, norm, dsk, dev, ds_kappa0)
            if fired:
                rec.stopping = StoppingEvent(t, str(cause), float(value), i)
                if not cfg.run_past_stopping:
                    break
        if i == n:
            break
        dW = None if incs is None else incs[i]
        c = stepper.step(c, float(t_rho) * float(t_kap), dW)

    if rec.stopping is None:
        rec.stopping = StoppingEvent(n * cfg.dt, HORIZON, rec.deviation_series[-1], n)
    rec.final = VelocityState.from_u(SpectralField(c, EVEN), rec.times[-1])
    return rec


def detect_stopping(record: TrajectoryRecord, cfg: SimConfig, flavor: str = ETA) -> StoppingEvent:
    """First recorded index at which a threshold of ``flavor`` is met.

    eta:     ||u||_{c} >= rho/2   or  ||d_zz u - d_zz u0||_inf >= kappa/2
    tau_jT:  ||u||_s~  >= 2 + ||u(0)||_s~  or  deviation >= kappa/4
    Falls back to a horizon event at the last recorded time (capped at T).
    """
    if not record.times:
        raise ValueError("empty record")
    cfg = cfg.replace(stopping=flavor)
    ds_cut = record.norm(DS)
    ds_kappa = record.norm(DS_KAPPA)
    dev = np.asarray(record.deviation_series)
    for i, t in enumerate(record.times):
        fired, cause, value = _stop_check(cfg, ds_cut[i], ds_kappa[i], dev[i], ds_kappa[0])
        if fired:
            return StoppingEvent(float(t), str(cause), float(value), i)
    t_end = min(float(record.times[-1]), cfg.T)
    return StoppingEvent(t_end, HORIZON, float(dev[-1]), len(record.times) - 1)


def stopping_from_series(times, values, threshold: float, cause: str = NORM_THRESHOLD) -> StoppingEvent | None:
    """First index with values[i] >= threshold."""
    values = np.asarray(values)
    hit = np.nonzero(values >= threshold)[0]
    if not len(hit):
        return None
    i = int(hit[0])
    return StoppingEvent(float(times[i]), cause, float(values[i]), i)


def rayleigh_reports(result: EnsembleResult, cfg: SimConfig) -> list[RayleighReport]:
    """Worst-case monitor report per path over its whole series."""
    reps = []
    for p in range(len(result.paths)):
        lo = float(result.rayleigh_min[p].min())
        hi = float(result.rayleigh_max[p].max())
        reps.append(RayleighReport(cfg.kappa, lo, hi, float(np.mean((result.rayleigh_min[p] < cfg.kappa)
                                                                     | (result.rayleigh_max[p] > 1 / cfg.kappa))),
                                   cfg.band, lo >= cfg.kappa and hi <= 1 / cfg.kappa))
    return reps
