import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hydrospde.dynamics import (EULER_APPROX, EULER_MODIFIED, EXPLICIT, EXPONENTIAL, HORIZON, NORM_THRESHOLD,
                                NSE_APPROX, NSE_MODIFIED, RAYLEIGH_DRIFT, TAU, VARIANTS, ConfigError, SimConfig,
                                StabilityError, TrajectoryRecord, advection, cutoff_factors, detect_stopping,
                                diffusion, drift, em_step, simulate, simulate_ensemble, stopping_from_series)
from hydrospde.fields import NotInHError, VelocityState, in_H, project_to_H
from hydrospde.initial import perturbed_profile, rayleigh_profile
from hydrospde.norms import DS, DS_KAPPA, L2, NormReport, ds_norm
from hydrospde.spectral import (EVEN, SpectralField, derivative, forward_transform, grid_points, is_parity_exact, l2_inner,
                                wavenumbers)
from hydrospde.stochastic import (apply_noise, default_noise_model, path_rng, vertical_additive_model,
                                  zero_noise_model)

from conftest import h_field

GRID = (32, 32)
X, Z = grid_points(*GRID)
TWO_PI = 2 * np.pi


def cfg_for(variant, **kw):
    base = dict(variant=variant, grid=GRID, dt=1e-3, T=0.01, rho=1e14)
    if variant in (NSE_MODIFIED, NSE_APPROX):
        base.update(nu=0.01, s=7)
    base.update(kw)
    return SimConfig(**base)


def cosz(A=1.0):
    return forward_transform(A * np.cos(TWO_PI * Z) + 0 * X, EVEN)


# --- config ---------------------------------------------------------------

def test_config_invariants():
    with pytest.raises(ConfigError):
        SimConfig(variant=EULER_MODIFIED, nu=0.1)
    with pytest.raises(ConfigError):
        SimConfig(variant=NSE_MODIFIED, nu=0.0, s=7)
    with pytest.raises(ConfigError, match="s >= 7"):
        SimConfig(variant=NSE_MODIFIED, nu=0.1, s=6)
    with pytest.raises(ConfigError):
        SimConfig(kappa=0.7)
    with pytest.raises(ConfigError):
        SimConfig(dt=0.003, T=0.01)
    with pytest.raises(ConfigError):
        SimConfig(variant="euler")
    assert SimConfig(variant=EULER_APPROX).cutoff_norm_index == 5
    assert cfg_for(NSE_APPROX).cutoff_norm_index == 5


def test_stability_budget_enforced():
    cfg = cfg_for(NSE_APPROX, linear_treatment=EXPLICIT, dt=0.01, T=0.02, n_visc=8)
    kmax2 = (TWO_PI * 10) ** 2 * 2
    assert cfg.stability_budget() == pytest.approx(0.5 / ((0.01 + 1 / 8) * kmax2))
    with pytest.raises(StabilityError) as exc:
        simulate(cfg, zero_noise_model(GRID), rayleigh_profile(GRID))
    assert exc.value.budget == pytest.approx(cfg.stability_budget())
    assert math.isinf(cfg_for(EULER_MODIFIED, linear_treatment=EXPLICIT).stability_budget())


# --- drift / diffusion ----------------------------------------------------

@pytest.mark.parametrize("variant", VARIANTS)
def test_drift_zero_above_rho(variant):
    u = h_field(GRID, 1)
    cfg = cfg_for(variant, rho=0.5 * ds_norm(u, cfg_for(variant).cutoff_norm_index))
    assert np.all(drift(u, u, cfg).coeffs == 0)


def test_drift_x_independent_euler():
    u = cosz(0.3)
    d = drift(u, u, cfg_for(EULER_MODIFIED))
    assert np.max(np.abs(d.coeffs)) == 0


def test_drift_x_independent_nse():
    A, nu = 0.3, 0.01
    u = cosz(A)
    cfg = cfg_for(NSE_MODIFIED, nu=nu)
    t_rho, t_kap, _, _ = cutoff_factors(u, derivative(u, "z", 2).physical(), cfg)
    expect = -t_rho * t_kap * nu * TWO_PI**2 * A * np.cos(TWO_PI * Z) + 0 * X
    assert np.allclose(drift(u, u, cfg).physical(), expect, atol=1e-14)


def test_drift_rejects_state_outside_H():
    u = forward_transform(np.cos(TWO_PI * X) + 0 * Z, EVEN)
    with pytest.raises(NotInHError):
        drift(u, u, cfg_for(EULER_MODIFIED))


@given(st.integers(0, 2**31 - 1))
def test_advection_energy_neutral(seed):
    # int (u u_x + w u_z) u = 0 for u in H (dealiased quadratic term)
    u = h_field(GRID, seed, max_mode=5)
    n = advection(u)
    assert abs(l2_inner(n, u)) <= 1e-12 * max(1.0, float(np.sqrt(np.sum(np.abs(n.coeffs) ** 2))))


def test_diffusion_examples():
    model = vertical_additive_model(GRID, [1, 2], 0.2)
    u = rayleigh_profile(GRID)
    cfg = cfg_for(EULER_MODIFIED)
    dW = np.array([0.3, -0.1])
    out = diffusion(u, u, dW, model, cfg)
    expect = sum(a * project_to_H(f).coeffs for a, f in zip(dW, model.chi))
    assert np.allclose(out.coeffs, expect, atol=1e-16)
    assert np.allclose(diffusion(u, u, 2 * dW, model, cfg).coeffs, 2 * out.coeffs, atol=1e-16)
    frozen = cfg.replace(rho=0.1)
    assert np.all(diffusion(u, u, dW, model, frozen).coeffs == 0)


# --- stepping -------------------------------------------------------------

def test_step_without_drift_or_noise_is_identity():
    u = VelocityState.from_u(cosz(0.2))
    new, th, _ = em_step(u, u, cfg_for(EULER_MODIFIED), zero_noise_model(GRID), path_rng(0))
    assert np.array_equal(new.u.coeffs, u.u.coeffs) and th == (1.0, 1.0)


def test_exponential_linear_factor():
    nu, dt = 0.05, 0.01
    u = VelocityState.from_u(cosz(0.2))
    cfg = cfg_for(NSE_MODIFIED, nu=nu, dt=dt, T=dt, linear_treatment=EXPONENTIAL)
    new, (t_rho, t_kap), _ = em_step(u, u, cfg, zero_noise_model(GRID), path_rng(0))
    assert t_rho == 1.0 and t_kap == 1.0
    assert new.u.coeffs[0, 1] == pytest.approx(u.u.coeffs[0, 1] * math.exp(-nu * TWO_PI**2 * dt), rel=1e-14)


def test_em_step_deterministic():
    u = VelocityState.from_u(perturbed_profile(GRID, np.random.default_rng(0), eps=1e-4))
    model = default_noise_model(GRID, K=4, kappa1=0.05, kappa2=0.01)
    cfg = cfg_for(EULER_MODIFIED)
    a = em_step(u, u, cfg, model, path_rng(9, 1))
    b = em_step(u, u, cfg, model, path_rng(9, 1))
    assert np.array_equal(a[0].u.coeffs, b[0].u.coeffs) and np.array_equal(a[2].dW, b[2].dW)


def test_em_step_matches_components():
    # u' = exp(-dt lam) (u + dt*drift_nonlinear + diffusion) with inactive cut-offs
    u = VelocityState.from_u(perturbed_profile(GRID, np.random.default_rng(1), eps=1e-4))
    model = default_noise_model(GRID, K=4, kappa1=0.05, kappa2=0.01)
    cfg = cfg_for(EULER_MODIFIED, dt=1e-3)
    new, _, inc = em_step(u, u, cfg, model, path_rng(2))
    expect = u.u.coeffs + cfg.dt * drift(u, u, cfg).coeffs + diffusion(u, u, inc, model, cfg).coeffs
    assert np.allclose(new.u.coeffs, expect, atol=1e-14)


@pytest.mark.parametrize("variant", VARIANTS)
def test_steps_preserve_H_and_parity(variant):
    model = default_noise_model(GRID, K=4, kappa1=0.05, kappa2=0.01)
    res = simulate_ensemble(cfg_for(variant, T=0.02), model, perturbed_profile(GRID, np.random.default_rng(0), eps=1e-4),
                            paths=[0, 1], keep_history=True)
    for c in res.history.reshape(-1, *GRID):
        f = SpectralField(c, EVEN)
        assert in_H(f) and is_parity_exact(f)


@pytest.mark.filterwarnings("ignore:initial data does not satisfy")
def test_self_convergence_first_order():
    # A = 0.01 single mode, no noise, nu = 0.01, T = 1; error against dt/4 reference halves with dt
    x, z = grid_points(16, 16)
    u0 = forward_transform(0.01 * np.cos(TWO_PI * x) * np.cos(TWO_PI * z), EVEN)
    # kappa = 0.45 keeps the Rayleigh cut-off out of play while the mode decays
    base = dict(variant=NSE_MODIFIED, nu=0.01, s=7, grid=(16, 16), T=1.0, rho=1e14, kappa=0.45,
                linear_treatment=EXPLICIT, run_past_stopping=True)
    model = zero_noise_model((16, 16))
    finals = {}
    for dt in (0.004, 0.002, 0.0005):
        rec = simulate(SimConfig(dt=dt, **base), model, u0)
        assert all(th == (1.0, 1.0) for th in rec.cutoff_series)
        finals[dt] = rec.final.u.coeffs
    e1 = np.linalg.norm(finals[0.004] - finals[0.0005])
    e2 = np.linalg.norm(finals[0.002] - finals[0.0005])
    assert e1 / e2 == pytest.approx(2 * (0.004 - 0.0005) / (2 * (0.002 - 0.0005)), rel=0.15)
    assert e2 < e1 / 2


def test_viscous_dissipation():
    u0 = h_field(GRID, 3, max_mode=4, amplitude=0.05)
    cfg = cfg_for(NSE_MODIFIED, nu=0.02, dt=1e-3, T=0.2)
    res = simulate_ensemble(cfg, zero_noise_model(GRID), u0, keep_history=True)
    energy = res.l2[0] ** 2
    assert np.all(np.diff(energy) <= 1e-15 * energy[0])
    _, kz = wavenumbers(*GRID)
    diss = cfg.nu * cfg.dt * np.sum(kz**2 * np.abs(res.history[:, 0]) ** 2)
    assert diss >= 0


# --- simulate / stopping --------------------------------------------------

def test_zero_horizon():
    rec = simulate(cfg_for(EULER_MODIFIED, T=0.0), zero_noise_model(GRID), rayleigh_profile(GRID))
    assert rec.times == [0.0]
    assert rec.stopping.cause == HORIZON and rec.stopping.time == 0.0


@pytest.mark.parametrize("variant", VARIANTS)
def test_frozen_below_rho(variant):
    u0 = perturbed_profile(GRID, np.random.default_rng(0), eps=1e-4)
    idx = cfg_for(variant).cutoff_norm_index
    cfg = cfg_for(variant, rho=0.5 * ds_norm(u0, idx), run_past_stopping=True, snapshot_every=1)
    model = default_noise_model(GRID, K=4, kappa1=0.1, kappa2=0.01)
    rec = simulate(cfg, model, u0)
    assert rec.stopping.cause == NORM_THRESHOLD and rec.stopping.time == 0.0
    assert len(rec.snapshots) == cfg.n_steps + 1
    assert all(np.array_equal(s.u.coeffs, rec.snapshots[0].u.coeffs) for s in rec.snapshots)
    assert all(th == (0.0, 1.0) for th in rec.cutoff_series)
    stopped = simulate(cfg.replace(run_past_stopping=False), model, u0)
    assert stopped.times == [0.0]


def test_record_series_consistent():
    model = default_noise_model(GRID, K=4, kappa1=0.05, kappa2=0.01)
    rec = simulate(cfg_for(EULER_MODIFIED, T=0.01), model, perturbed_profile(GRID, np.random.default_rng(0), eps=1e-4))
    n = len(rec.times)
    assert n == 11 and len(rec.norm_series) == n == len(rec.cutoff_series) == len(rec.rayleigh_series)
    assert np.all(np.diff(rec.times) > 0)
    assert rec.stopping.cause == HORIZON and rec.stopping.time == pytest.approx(0.01)
    lines = list(rec.ndjson_lines())
    assert len(lines) == n


def test_cutoffs_inactive_before_eta():
    # modified and unmodified drifts coincide while theta = 1
    model = default_noise_model(GRID, K=4, kappa1=0.05, kappa2=0.01)
    rec = simulate(cfg_for(EULER_MODIFIED, T=0.02), model, perturbed_profile(GRID, np.random.default_rng(0), eps=1e-4))
    assert rec.stopping.cause == HORIZON
    assert all(th == (1.0, 1.0) for th in rec.cutoff_series)


def test_simulate_matches_ensemble():
    model = default_noise_model(GRID, K=4, kappa1=0.05, kappa2=0.01)
    u0 = perturbed_profile(GRID, np.random.default_rng(0), eps=1e-4)
    cfg = cfg_for(EULER_MODIFIED, T=0.01, seed=4)
    rec = simulate(cfg, model, u0, path=2)
    ens = simulate_ensemble(cfg, model, u0, paths=[5, 2])
    assert np.array_equal(rec.final.u.coeffs, ens.final[1])


def _record(ds_cut, dev=None, ds_kappa=None, dt=0.1):
    rec = TrajectoryRecord()
    n = len(ds_cut)
    dev = np.zeros(n) if dev is None else dev
    ds_kappa = np.ones(n) if ds_kappa is None else ds_kappa
    for i in range(n):
        rec.times.append(i * dt)
        rec.norm_series.append([NormReport(L2, 0, 1.0), NormReport(DS, 5, ds_cut[i]), NormReport(DS_KAPPA, 6, ds_kappa[i])])
        rec.deviation_series.append(float(dev[i]))
    return rec


def test_detect_stopping_examples():
    cfg = SimConfig(rho=10.0, kappa=0.1, dt=0.1, T=3.0)
    at_once = detect_stopping(_record([5.0, 6.0]), cfg)
    assert at_once.time == 0.0 and at_once.cause == NORM_THRESHOLD
    series = np.concatenate([np.linspace(1, 4.9, 17), np.linspace(5.0, 9, 13)])
    ev = detect_stopping(_record(series), cfg)
    assert ev.step == 17 and ev.time == pytest.approx(1.7) and ev.value_at_trigger == 5.0
    none = detect_stopping(_record(np.ones(31)), cfg)
    assert none.cause == HORIZON and none.time == pytest.approx(3.0)
    drifted = detect_stopping(_record(np.ones(5), dev=np.array([0, 0.01, 0.03, 0.05, 0.06])), cfg)
    assert drifted.cause == RAYLEIGH_DRIFT and drifted.step == 3
    tau = detect_stopping(_record(np.ones(5), dev=np.array([0, 0.01, 0.03, 0.05, 0.06])), cfg, TAU)
    assert tau.step == 2
    grow = detect_stopping(_record(np.ones(4), ds_kappa=np.array([1.0, 2.0, 3.0, 3.5])), cfg, TAU)
    assert grow.step == 2 and grow.cause == NORM_THRESHOLD
    assert stopping_from_series([0, 1, 2], [0, 1, 2], 1.5).step == 2
    assert stopping_from_series([0, 1], [0, 1], 5) is None
