"""Command-line runner.

    hydrospde <subcommand> --config run.ini [--out DIR] [--seed N] [--threads N]
              [--override section.key=value ...]

Config files are INI with sections [sim], [noise], [initial], [experiment];
unknown sections or keys are rejected. Exit codes: 0 ok, 2 invalid
configuration, 3 numerical failure (stability budget, strict Rayleigh).
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import datetime as _dt
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import experiments as ex
from .dynamics import ConfigError, SimConfig, StabilityError, simulate
from .fields import random_h_field, read_snapshot, write_snapshot
from .norms import RayleighError, ds_norm, rayleigh_monitor
from .regularize import poincare_check
from .stochastic import verify_noise_bounds

ENV_OUT = "HYDROSPDE_OUT"
SUBCOMMANDS = ("simulate", "cancellation", "galerkin-demo", "cauchy", "uniqueness", "rayleigh",
               "moments", "verify-noise", "poincare", "validate")

EXPERIMENT_KEYS = {
    "ensemble_size": int,
    "ladder": "floats",
    "reference": float,
    "M_bound": float,
    "s_values": "ints",
    "n_proj": float,
    "p": int,
    "norm": str,
    "running_sup": bool,
    "n_values": "ints",
    "dts": "floats",
    "samples": int,
    "delta": float,
    "n_values_proj": "floats",
    "m_values": "ints",
    "field": str,
}

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class NumericFailure(RuntimeError):
    pass


NULLABLE = {"max_mode", "kappa1", "kappa2", "M_bound"}

SAMPLE_FIELD = Path(__file__).with_name("data") / "sample_u"


def _parse_bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _parse_list(v: str, kind):
    parts = [p for p in v.replace(";", ",").split(",") if p.strip()]
    return tuple(kind(_eval_number(p) if kind is float else p.strip()) for p in parts)


def _eval_number(v: str) -> float:
    """Floats, with 'pi' allowed as a factor (e.g. 4pi, 4*pi)."""
    t = v.strip().lower().replace("*", "")
    if t.endswith("pi"):
        head = t[:-2]
        return (float(head) if head else 1.0) * math.pi
    return float(t)


def _convert(value: str, default, name: str):
    if value.strip().lower() == "none" and name in NULLABLE:
        return None
    try:
        if isinstance(default, bool):
            return _parse_bool(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float) or default is None:
            return _eval_number(value)
        if isinstance(default, tuple):
            kind = float if (default and isinstance(default[0], float)) or name in ("band",) else int
            return _parse_list(value, kind)
        return value.strip()
    except ValueError as e:
        raise ConfigError(f"bad value for {name}: {value!r} ({e})") from None


def _dataclass_from(section: dict, cls, required=()):
    defaults = {f.name: f.default if f.default is not dataclasses.MISSING else f.default_factory()
                for f in dataclasses.fields(cls)}
    unknown = set(section) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    for r in required:
        if r not in section:
            raise ConfigError(f"missing required key {r!r}")
    kw = {k: _convert(v, defaults[k], k) for k, v in section.items()}
    return cls(**kw)


def _experiment_params(section: dict) -> dict:
    out = {}
    for k, v in section.items():
        if k not in EXPERIMENT_KEYS:
            raise ConfigError(f"unknown key in [experiment]: {k!r}")
        kind = EXPERIMENT_KEYS[k]
        try:
            if kind == "floats":
                out[k] = _parse_list(v, float)
            elif kind == "ints":
                out[k] = _parse_list(v, int)
            elif kind is bool:
                out[k] = _parse_bool(v)
            elif kind is float:
                out[k] = _eval_number(v)
            else:
                out[k] = kind(v.strip())
        except ValueError as e:
            raise ConfigError(f"bad value for {k}: {v!r} ({e})") from None
    return out


def load_config(path, overrides=(), seed: int | None = None):
    """Parse and validate; returns (ExperimentConfig, experiment params, raw sections)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            cp.read_string(path.read_text())
        except configparser.Error as e:
            raise ConfigError(f"cannot parse {path}: {e}") from None
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {ov!r}")
        key, value = ov.split("=", 1)
        sec, name = key.split(".", 1)
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, name, value)
    allowed = {"sim", "noise", "initial", "experiment"}
    bad = set(cp.sections()) - allowed
    if bad:
        raise ConfigError(f"unknown sections: {sorted(bad)}")
    raw = {sec: dict(cp.items(sec)) for sec in cp.sections()}
    sim_raw = dict(raw.get("sim", {}))
    if seed is not None:
        sim_raw["seed"] = str(seed)
    sim = _dataclass_from(sim_raw, SimConfig, required=("grid",))
    noise = _dataclass_from(raw.get("noise", {}), ex.NoiseSettings)
    init = _dataclass_from(raw.get("initial", {}), ex.InitialSettings)
    params = _experiment_params(raw.get("experiment", {}))
    xkw = {k: params.pop(k) for k in ("ensemble_size", "ladder", "reference", "M_bound") if k in params}
    try:
        xcfg = ex.ExperimentConfig(sim=sim, noise=noise, initial=init, **xkw)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return xcfg, params, raw


# --- output ----------------------------------------------------------------

def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise FloatingPointError("non-finite value in artifact")
    if isinstance(obj, dict):
        for v in obj.values():
            _finite(v)
    if isinstance(obj, (list, tuple)):
        for v in obj:
            _finite(v)
    return obj


class Writer:
    """Single sink for every artifact of one run."""

    def __init__(self, out: Path):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []
        # metadata is appended per record; start each run from an empty file
        (self.out / "metadata.ndjson").unlink(missing_ok=True)

    def table(self, name: str, rows) -> Path:
        rows = [_finite({k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
                for r in rows]
        p = ex.write_csv(self.out / "tables" / f"{name}.csv", rows)
        self.files.append(p)
        return p

    def meta(self, record: dict) -> Path:
        p = ex.append_ndjson(self.out / "metadata.ndjson", record)
        if p not in self.files:
            self.files.append(p)
        return p

    def add(self, p: Path) -> None:
        self.files.append(Path(p))

    def manifest(self, config_path, xcfg, params, started: str) -> Path:
        hashes = {str(p.relative_to(self.out)): hashlib.sha256(p.read_bytes()).hexdigest()
                  for p in sorted(set(self.files))}
        cfg_bytes = Path(config_path).read_bytes() if config_path else b""
        man = {
            "config_path": str(config_path) if config_path else None,
            "config_sha256": hashlib.sha256(cfg_bytes).hexdigest(),
            "resolved": xcfg.to_dict(),
            "experiment_params": {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()},
            "output_dir": str(self.out),
            "started": started,
            "finished": _now(),
            "artifacts": hashes,
        }
        p = self.out / "manifest.json"
        p.write_text(json.dumps(man, indent=2, sort_keys=True, default=float) + "\n")
        return p


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _out_dir(args, cmd: str, xcfg) -> Path:
    if args.out:
        return Path(args.out)
    root = Path(os.environ.get(ENV_OUT, "runs"))
    return root / f"{cmd}-{ex.content_hash(xcfg.to_dict())[:12]}"


def _sample_field(params: dict, grid):
    path = params.get("field")
    stem = Path(path) if path else SAMPLE_FIELD
    u, _ = read_snapshot(stem)
    if tuple(u.grid_shape) != tuple(grid):
        raise ConfigError(f"sample field grid {tuple(u.grid_shape)} differs from [sim] grid {tuple(grid)}")
    return u


# --- subcommands -----------------------------------------------------------

def cmd_simulate(xcfg, params, w: Writer):
    model = xcfg.noise_model()
    rec = simulate(xcfg.sim, model, xcfg.initial_field())
    w.add(rec.write_ndjson(w.out / "trajectory.ndjson"))
    for snap in rec.snapshots:
        step = int(round(snap.time / xcfg.sim.dt))
        w.add(write_snapshot(w.out / "snapshots" / f"u_{step:06d}", snap.u, snap.time))
        w.add(w.out / "snapshots" / f"u_{step:06d}.json")
    w.meta(ex.metadata_record("simulate", xcfg, model, {"stopping": rec.stopping.to_dict()}))
    print(f"steps={len(rec.times) - 1} stop={rec.stopping.cause}@{rec.stopping.time:g}")


def cmd_cancellation(xcfg, params, w: Writer):
    u = _sample_field(params, xcfg.sim.grid)
    rows = []
    for s in params.get("s_values", (1, 2, 3)):
        r = ex.cancellation_check(u, s)
        rows.append({"s": s, "residual": r})
        print(f"cancellation s={s} residual={r:.3e}")
    w.table("cancellation", rows)
    w.meta(ex.metadata_record("cancellation", xcfg, xcfg.noise_model()))


def cmd_galerkin(xcfg, params, w: Writer):
    u = _sample_field(params, xcfg.sim.grid)
    band = ex.product_band(u)
    n = params.get("n_proj", band / 2)
    rows = []
    for s in params.get("s_values", (1, 2, 3)):
        r_full = ex.galerkin_cancellation_demo(u, s, band + 1.0, xcfg.sim.kappa)
        r_cut = ex.galerkin_cancellation_demo(u, s, n, xcfg.sim.kappa)
        rows.append({"s": s, "n": n, "residual_projected": r_cut, "residual_inactive": r_full})
        print(f"galerkin s={s} n={n:.4g} residual={r_cut:.3e} (inactive projection {r_full:.3e})")
    w.table("galerkin", rows)
    w.meta(ex.metadata_record("galerkin-demo", xcfg, xcfg.noise_model(), {"product_band": band}))


def cmd_cauchy(xcfg, params, w: Writer):
    tab = ex.cauchy_study(xcfg)
    w.table("cauchy", tab.rows())
    w.table("cauchy_column_max", [{"k": k, "sup_j_ge_k": float(v)} for k, v in zip(tab.levels, tab.column_max)])
    w.meta(ex.metadata_record("cauchy", xcfg, xcfg.noise_model(), {"stop_times": {str(k): v for k, v in tab.stop_times.items()}}))
    print("column maxima: " + " ".join(f"{v:.4e}" for v in tab.column_max))


def cmd_uniqueness(xcfg, params, w: Writer):
    delta = params.get("delta", 0.0)
    rep = ex.uniqueness_check(xcfg, delta=delta)
    w.table("uniqueness", [{"t": float(t), "distance": float(d)} for t, d in zip(rep.times, rep.distance)])
    w.meta(ex.metadata_record("uniqueness", xcfg, xcfg.noise_model(),
                              {"delta": delta, "max_distance": rep.max_distance, "rate": rep.rate,
                               "slope": rep.slope, "identical": rep.identical}))
    print(f"delta={delta:g} max_distance={rep.max_distance:.3e} rate={rep.rate:.4g} identical={rep.identical}")


def cmd_rayleigh(xcfg, params, w: Writer):
    study = ex.rayleigh_preservation_study(xcfg, dts=params.get("dts"))
    w.table("rayleigh", study.rows())
    w.meta(ex.metadata_record("rayleigh", xcfg, xcfg.noise_model()))
    for row in study.rows():
        print(f"dt={row['dt']:g} max_dev={row['max_deviation']:.4g} overshoot={row['overshoot']:.3e}")


def cmd_moments(xcfg, params, w: Writer):
    p = params.get("p", 2)
    kw = {"norm": params.get("norm", "ds_kappa"), "running_sup": params.get("running_sup", True)}
    if "n_values" in params:
        res = ex.viscosity_uniformity(xcfg, params["n_values"], p=p, **kw)
        w.table("moments_uniformity", [{"n_visc": n, "envelope": c} for n, c in res["constants"].items()])
        w.meta(ex.metadata_record("moments", xcfg, xcfg.noise_model(), {"spread": res["spread"]}))
        print(f"envelope constants {res['constants']} spread={res['spread']:.3f}")
        return
    ms = ex.ensemble_moments(xcfg, p=p, **kw)
    w.table("moments", ms.rows())
    w.meta(ex.metadata_record("moments", xcfg, xcfg.noise_model(), {"envelope": ms.envelope, "p": p}))
    print(f"envelope={ms.envelope:.4g}")


def cmd_verify_noise(xcfg, params, w: Writer):
    model = xcfg.noise_model()
    rep = verify_noise_bounds(model, xcfg.sim.s, params.get("samples", 100), np.random.default_rng(xcfg.sim.seed))
    w.table("noise_bounds", [{"constant": k, "value": v, "bound": rep.bound} for k, v in rep.constants.items()])
    w.meta(ex.metadata_record("verify-noise", xcfg, model, {"report": rep.to_dict(), "descriptor": model.descriptor}))
    (w.out / "noise.json").write_text(model.to_json() + "\n")
    w.add(w.out / "noise.json")
    print(f"noise bounds pass={rep.passed} " + " ".join(f"{k}={v:.4g}" for k, v in rep.constants.items()))
    if not rep.passed:
        raise NumericFailure("noise bounds exceeded")


def cmd_poincare(xcfg, params, w: Writer):
    rng = np.random.default_rng(xcfg.sim.seed)
    rows = []
    ok = True
    for i in range(params.get("samples", 100)):
        f = random_h_field(xcfg.sim.grid, rng, decay=1.0)
        for n in params.get("n_values_proj", (2 * math.pi, 4 * math.pi, 8 * math.pi)):
            for m in params.get("m_values", (0, 1, 2)):
                r = poincare_check(f, n, m)
                ok &= r.tail_pass in (True, None) and r.inverse_pass in (True, None)
                rows.append({"sample": i, "n": n, "m": m, "tail_ratio": r.tail_ratio, "inverse_ratio": r.inverse_ratio})
    w.table("poincare", rows)
    w.meta(ex.metadata_record("poincare", xcfg, xcfg.noise_model(), {"pass": bool(ok)}))
    print(f"poincare pass={ok} max_tail={max(r['tail_ratio'] or 0 for r in rows):.4f} "
          f"max_inverse={max(r['inverse_ratio'] or 0 for r in rows):.4f}")


def cmd_validate(xcfg, params, w: Writer | None):
    sim = xcfg.sim
    print(f"variant={sim.variant} s={sim.s} grid={sim.grid} dt={sim.dt:g} T={sim.T:g}")
    budget = sim.stability_budget()
    print(f"explicit stability budget: {budget:.6g}" + (" (exponential treatment)" if sim.linear_treatment == "exponential" else ""))
    u0 = xcfg.initial_field()
    norm = ds_norm(u0, sim.cutoff_norm_index)
    print(f"||u0||_(s-{sim.s - sim.cutoff_norm_index}) = {norm:.6g}; rho/2 = {sim.rho / 2:.6g}"
          + ("" if norm < sim.rho / 2 else "  [advisory: eta fires at t = 0]"))
    rep = rayleigh_monitor(u0, sim.kappa, sim.band)
    two = rep.min_val >= 2 * sim.kappa and rep.max_val <= 1 / (2 * sim.kappa)
    print(f"rayleigh on {sim.band}: min={rep.min_val:.4g} max={rep.max_val:.4g} kappa-pass={rep.passed} 2kappa-pass={two}")
    sim.check_stability()
    print("ok")


HANDLERS = {
    "simulate": cmd_simulate,
    "cancellation": cmd_cancellation,
    "galerkin-demo": cmd_galerkin,
    "cauchy": cmd_cauchy,
    "uniqueness": cmd_uniqueness,
    "rayleigh": cmd_rayleigh,
    "moments": cmd_moments,
    "verify-noise": cmd_verify_noise,
    "poincare": cmd_poincare,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hydrospde", description="stochastic hydrostatic Euler/NSE diagnostics")
    ap.add_argument("command", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="INI config file")
    ap.add_argument("--out", help=f"output directory (default ${ENV_OUT}/<command>-<hash>)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="FFT worker threads")
    ap.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = _now()
    try:
        xcfg, params, _ = load_config(args.config, args.override, args.seed)
        with sfft.set_workers(max(1, args.threads)):
            if args.command == "validate":
                cmd_validate(xcfg, params, None)
                return EXIT_OK
            w = Writer(_out_dir(args, args.command, xcfg))
            HANDLERS[args.command](xcfg, params, w)
            w.manifest(args.config, xcfg, params, started)
            print(f"wrote {w.out}")
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (StabilityError, RayleighError, FloatingPointError, NumericFailure) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
