"""Desk-scale acceptance runs, one test per criterion.

Each test records a one-line detail via ``record_property``; conftest prints
the collected lines in the terminal summary.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from hydrospde import experiments as ex
from hydrospde.cli import SAMPLE_FIELD, load_config
from hydrospde.dynamics import EULER_APPROX, EULER_MODIFIED, NSE_APPROX, NSE_MODIFIED, SimConfig, simulate_ensemble
from hydrospde.fields import in_H, random_h_field, read_snapshot
from hydrospde.initial import perturbed_profile
from hydrospde.norms import WeightMode, ds_norm, rayleigh_monitor, weighted_parts
from hydrospde.regularize import POINCARE_CONSTANT, poincare_check
from hydrospde.spectral import derivative
from hydrospde.stochastic import default_noise_model, verify_noise_bounds

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
GRID = (64, 64)

pytestmark = pytest.mark.acceptance


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def cfg(name):
    return load_config(CONFIGS / f"{name}.ini")


def test_crit01_cancellation_identity(record_property):
    rng = np.random.default_rng(101)
    with Clock() as c:
        worst = 0.0
        for _ in range(100):
            u = random_h_field(GRID, rng, decay=1.0)
            assert in_H(u)
            for s in (1, 2, 3):
                worst = max(worst, ex.cancellation_check(u, s))
    record_property("detail", f"max residual {worst:.2e} (<= 1e-10), {c.elapsed:.1f}s (< 10s)")
    assert worst <= 1e-10
    assert c.elapsed < 10


def test_crit02_galerkin_failure(record_property):
    rng = np.random.default_rng(202)
    sample, _ = read_snapshot(SAMPLE_FIELD)
    corpus = [sample] + [random_h_field((32, 32), rng, max_mode=4) for _ in range(4)]
    with Clock() as c:
        cut, full = [], []
        for u in corpus:
            band = ex.product_band(u)
            for s in (1, 2, 3):
                cut.append(ex.galerkin_cancellation_demo(u, s, band / 2))
                full.append(ex.galerkin_cancellation_demo(u, s, band + 1.0))
    record_property("detail", f"max projected {max(cut):.2e} (> 1e-3), max inactive {max(full):.2e} (<= 1e-10), "
                              f"{c.elapsed:.1f}s (< 10s)")
    assert max(cut) > 1e-3
    assert max(full) <= 1e-10
    assert c.elapsed < 10


def test_crit03_norm_equivalence_sandwich(record_property):
    kappa = 0.1
    mode = WeightMode.strict(kappa)
    rng = np.random.default_rng(303)
    with Clock() as c:
        slack = np.inf
        fields = []
        while len(fields) < 100:
            u = perturbed_profile(GRID, rng, eps=10 ** rng.uniform(-6, -3), max_mode=4)
            if rayleigh_monitor(u, kappa).passed:
                fields.append(u)
        for u in fields:
            v = derivative(u, "z", 1)
            for s in (1, 2, 3):
                p = weighted_parts(v, s, mode)
                lo = p["weight_min"] * p["top_unweighted"]
                hi = p["weight_max"] * p["top_unweighted"]
                tol = 1e-12 * hi
                assert lo - tol <= p["top_weighted"] <= hi + tol
                slack = min(slack, float(min(p["top_weighted"] - lo, hi - p["top_weighted"]) / hi))
    record_property("detail", f"100 fields x s=1..3 inside the sandwich, min relative slack {slack:.2e}, "
                              f"{c.elapsed:.1f}s (< 10s)")
    assert c.elapsed < 10


def test_crit04_poincare_inequalities(record_property):
    rng = np.random.default_rng(404)
    assert POINCARE_CONSTANT == pytest.approx(math.sqrt(2))
    with Clock() as c:
        worst_tail = worst_inv = 0.0
        fails = 0
        for _ in range(100):
            f = random_h_field(GRID, rng, decay=1.0)
            for n in (2 * np.pi, 4 * np.pi, 8 * np.pi):
                for m in (0, 1, 2):
                    r = poincare_check(f, n, m)
                    fails += r.tail_pass is False or r.inverse_pass is False
                    worst_tail = max(worst_tail, r.tail_ratio or 0.0)
                    worst_inv = max(worst_inv, r.inverse_ratio or 0.0)
    record_property("detail", f"{fails} failures in 900 checks, max ratios {worst_tail:.3f}/{worst_inv:.3f} "
                              f"(<= 1), {c.elapsed:.1f}s (< 10s)")
    assert fails == 0
    assert c.elapsed < 10


def test_crit05_noise_bounds(record_property):
    xcfg, params, _ = cfg("verify_noise")
    with Clock() as c:
        model = xcfg.noise_model()
        rep = verify_noise_bounds(model, xcfg.sim.s, params["samples"], np.random.default_rng(505))
    worst = max(rep.constants.values())
    record_property("detail", f"max constant {worst:.3f} <= 2(k1+k2) = {rep.bound:.3f}, {c.elapsed:.1f}s (< 30s)")
    assert rep.samples == 100
    assert rep.bound == pytest.approx(2 * (model.kappa1 + model.kappa2))
    assert rep.passed
    assert c.elapsed < 30


def test_crit06_pathwise_uniqueness(record_property):
    xcfg, _, _ = cfg("uniqueness")
    with Clock() as c:
        out = []
        for variant in (EULER_MODIFIED, EULER_APPROX, NSE_MODIFIED, NSE_APPROX):
            extra = {"nu": 1e-3, "s": 7} if variant.startswith("nse") else {}
            sim = xcfg.sim.replace(variant=variant, T=0.5, grid=GRID, **extra)
            rep = ex.uniqueness_check(xcfg.replace(sim=sim))
            out.append((variant, rep.identical, rep.max_distance, len(rep.times)))
    record_property("detail", ", ".join(f"{v}: identical={i}" for v, i, _, _ in out) + f", {c.elapsed:.1f}s (< 120s)")
    for variant, identical, dist, n in out:
        assert identical, variant
        assert dist == 0.0
        assert n == 101
    assert c.elapsed < 120


def test_crit07_rayleigh_preservation(record_property):
    xcfg, params, _ = cfg("rayleigh")
    assert xcfg.ensemble_size == 32
    with Clock() as c:
        r = ex.rayleigh_preservation_study(xcfg, dts=params["dts"])
    kappa = xcfg.sim.kappa
    C = max(o / math.sqrt(dt) for o, dt in zip(r.overshoot, r.dts))
    ratios = [a / b if b > 0 else math.inf for a, b in zip(r.overshoot, r.overshoot[1:])]
    record_property("detail", f"overshoots {', '.join(f'{o:.3e}' for o in r.overshoot)} at dt {r.dts}, "
                              f"halving ratios {', '.join(f'{q:.2f}' for q in ratios)} (>= 1.1), C = {C:.3f}, "
                              f"{c.elapsed:.1f}s (< 300s)")
    assert all(o > 0 for o in r.overshoot[:-1]), "no overshoot at coarse dt: refinement is not measurable"
    for mx, dt in zip(r.max_deviation, r.dts):
        assert mx <= kappa + C * math.sqrt(dt) * (1 + 1e-12)
    for q in ratios:
        assert q >= 1.1
        assert q >= math.sqrt(2) * 0.8
    assert c.elapsed < 300


def test_crit08_frozen_dynamics(record_property):
    model = default_noise_model(GRID, 16, 0.3, 0.03, 7)
    u0 = perturbed_profile(GRID, np.random.default_rng(808), eps=1e-2)
    with Clock() as c:
        counts = []
        for variant in (EULER_MODIFIED, EULER_APPROX, NSE_MODIFIED, NSE_APPROX):
            extra = {"nu": 1e-2} if variant.startswith("nse") else {}
            sim = SimConfig(variant=variant, s=7, grid=GRID, dt=0.01, T=0.2, **extra)
            rho = 0.5 * ds_norm(u0, sim.cutoff_norm_index)
            sim = sim.replace(rho=rho, run_past_stopping=True)
            res = simulate_ensemble(sim, model, u0, paths=[0, 1], keep_history=True)
            same = np.all(res.history == res.history[:1], axis=(0, 2, 3))
            assert same.all(), variant
            assert np.all(res.theta_rho == 0.0)
            counts.append(res.history.shape[0])
    record_property("detail", f"4 variants x 2 paths x {counts[0]} states equal to u0 bitwise, "
                              f"{c.elapsed:.1f}s (< 10s)")
    assert c.elapsed < 10


def test_crit09_deterministic_self_convergence(record_property):
    xcfg, _, _ = cfg("cauchy")
    assert xcfg.noise.kind == "zero"
    with Clock() as c:
        tab = ex.cauchy_study(xcfg)
    m = tab.mean
    ladder = tab.column_max[: len(xcfg.ladder)]
    record_property("detail", f"column maxima {', '.join(f'{v:.3e}' for v in ladder)} strictly decreasing, "
                              f"{c.elapsed:.1f}s (< 300s)")
    assert np.all(np.diag(m) == 0.0)
    assert np.array_equal(m, m.T)
    assert np.all(np.diff(ladder) < 0)
    assert c.elapsed < 300


def test_crit10_linear_moment_oracle(record_property):
    xcfg, params, _ = cfg("moments_linear")
    assert xcfg.ensemble_size == 256
    with Clock() as c:
        ms = ex.ensemble_moments(xcfg, p=params["p"], norm=params["norm"], running_sup=params["running_sup"])
    rate = ex.linear_rate(ms.times, ms.mean)
    oracle = ex.ito_rate(xcfg.noise_model())
    rel = abs(rate / oracle - 1)
    record_property("detail", f"fitted rate {rate:.4e} vs Ito rate {oracle:.4e}, rel err {rel:.3f} (<= 0.10), "
                              f"{c.elapsed:.1f}s (< 300s)")
    assert rel <= 0.10
    assert c.elapsed < 300


def test_crit11_strong_order(record_property):
    dts = [1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4]
    with Clock() as c:
        st = ex.strong_order_study(dts, paths=1024)
    record_property("detail", f"order {st.order:.3f} (0.5 +- 0.1) over dt 1e-2..1e-4, M=1024, {c.elapsed:.1f}s (< 300s)")
    assert abs(st.order - 0.5) <= 0.1
    assert c.elapsed < 300


def test_crit12_viscosity_uniformity(record_property):
    xcfg, params, _ = cfg("moments_viscosity")
    kw = {"norm": params["norm"], "running_sup": params["running_sup"]}
    with Clock() as c:
        res = ex.viscosity_uniformity(xcfg, params["n_values"], p=params["p"], **kw)
        info = ex.viscosity_uniformity(xcfg.replace(sim=xcfg.sim.replace(variant=EULER_APPROX, nu=0.0, s=6)),
                                       params["n_values"], p=params["p"], **kw)
    consts = ", ".join(f"n={n}: {v:.4f}" for n, v in res["constants"].items())
    record_property("detail", f"nse_approx {consts}, spread {res['spread']:.3f} (<= 0.25); "
                              f"euler_approx constants {list(info['constants'].values())} (info), "
                              f"{c.elapsed:.1f}s (< 600s)")
    assert sorted(res["constants"]) == [8, 32, 128]
    assert res["spread"] <= 0.25
    assert c.elapsed < 600
