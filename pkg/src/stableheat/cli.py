"""Batch experiment runner: config in, reports and plot-ready data out.

Subcommands map one-to-one onto the library modules; every artifact embeds
the config hash, tool version and master seed, and reruns with the same
config and seed overwrite byte-identically.

Exit codes: 0 success, 2 config error, 3 numerical failure.
"""

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .params import (BesovIndices, DomainError, ParameterError, StableParams,
                     check_gr, l_integral_diverges, rho_range)
from .density import (ExactKernel, comparability_constant, export_grid_csv,
                      gradient_bound_constant)
from .besov import SampledField, ThermicConfig, thermic_norm, validate_duality
from .drift import make_drift, mollify, save_drift
from .sim import (StableSampler, estimate_marginal, euler_paths,
                  marginal_to_csv, save_samples)
from .parametrix import (NonContractionError, SolverConfig, diagnostics,
                         duhamel_solve)
from .verify import (m_stabilization, validate_besov_kernel_lemma,
                     cross_validate)
from ._rng import substream

INF = math.inf

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

DEFAULT_CONFIG = {
    "seed": 0,
    "noise": {"alpha": 1.5, "dim": 1},
    "indices": {"beta": -0.1, "p": "inf", "q": "inf", "r": "inf"},
    "drift": {"builtin": "synthetic", "shells": 8, "constant": 1.0,
              "scale": 1.0},
    "solver": {"s": 0.0, "x": 0.0, "T": 0.5, "rho": 0.15, "ny": 2048,
               "extent": 64.0, "n_slices": 32, "n_quad": 24, "tol": 1e-6,
               "max_iter": 40},
    "simulation": {"n_paths": 100000, "steps": 128, "grid_halfwidth": 16.0},
    "mollification": {"levels": [2, 4, 6, 8]},
    "besov": {"n_fields": 20, "n": 2048, "extent": 16.0},
}


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


def _float_or_inf(v, key):
    if v in ("inf", "Inf", "INF"):
        return INF
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number or 'inf', got {v!r}")


def _merge(base, override, prefix=""):
    out = dict(base)
    for k, v in override.items():
        key = f"{prefix}{k}"
        if k not in base:
            raise ConfigError(key, "unknown configuration key")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(key, "expected a nested section")
            out[k] = _merge(base[k], v, prefix=key + ".")
        else:
            out[k] = v
    return out


def load_config(path=None):
    if path is None:
        return dict(DEFAULT_CONFIG)
    try:
        with open(path) as fh:
            user = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}")
    if not isinstance(user, dict):
        raise ConfigError("config", "top level must be an object")
    return _merge(DEFAULT_CONFIG, user)


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _build_objects(cfg):
    """Validated parameter objects from the config; errors name the key."""
    noise = cfg["noise"]
    try:
        sp = StableParams(float(noise["alpha"]), int(noise["dim"]))
    except (ParameterError, ValueError, TypeError) as exc:
        raise ConfigError("noise", str(exc))
    idx = cfg["indices"]
    try:
        bi = BesovIndices(float(idx["beta"]),
                          _float_or_inf(idx["p"], "indices.p"),
                          _float_or_inf(idx["q"], "indices.q"),
                          _float_or_inf(idx["r"], "indices.r"))
    except (ParameterError, ValueError, TypeError) as exc:
        raise ConfigError("indices", str(exc))
    return sp, bi


def _solver_config(cfg):
    s = cfg["solver"]
    try:
        return SolverConfig(ny=int(s["ny"]), extent=float(s["extent"]),
                            n_slices=int(s["n_slices"]),
                            n_quad=int(s["n_quad"]), tol=float(s["tol"]),
                            max_iter=int(s["max_iter"]))
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError("solver", str(exc))


def _drift_object(cfg, sp, bi):
    d = cfg["drift"]
    kind = d.get("builtin", "synthetic")
    T = float(cfg["solver"]["T"])
    if kind == "zero":
        return None
    if kind == "constant":
        return float(d["constant"])
    if kind == "smooth":
        return lambda t, x: 0.5 * np.cos(np.asarray(x))
    if kind == "synthetic":
        try:
            return make_drift(bi, T, int(cfg["seed"]), int(d["shells"]),
                              sp=sp, scale=float(d.get("scale", 1.0)))
        except ParameterError as exc:
            raise ConfigError("drift", str(exc))
    raise ConfigError("drift.builtin", f"unknown drift kind {kind!r}")


def _stamp(cfg):
    return {"config_hash": config_hash(cfg), "version": __version__,
            "seed": int(cfg["seed"])}


def _emit(doc, cfg, out_dir, name, fmt):
    doc = dict(doc)
    doc.update(_stamp(cfg))
    os.makedirs(out_dir, exist_ok=True)
    if fmt == "json":
        path = os.path.join(out_dir, name + ".json")
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True, default=float)
            fh.write("\n")
    else:
        path = os.path.join(out_dir, name + ".csv")
        flat = _flatten(doc)
        with open(path, "w") as fh:
            fh.write("key,value\n")
            for k in sorted(flat):
                fh.write(f"{k},{flat[k]}\n")
    return path


def _flatten(doc, prefix=""):
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            out[key] = ";".join(repr(x) for x in v)
        else:
            out[key] = repr(v) if isinstance(v, float) else str(v)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_check_params(cfg, out_dir, fmt):
    sp, bi = _build_objects(cfg)
    adm = check_gr(sp, bi)
    lo, hi = (None, None)
    if adm.gr and adm.gamma > 0:
        lo, hi = rho_range(bi, sp)
    doc = {"gr": adm.gr, "grd": adm.grd, "theta": adm.theta,
           "gamma": adm.gamma, "alpha_lower": adm.alpha_lower,
           "rho_range": [lo, hi]}
    print(json.dumps(doc, sort_keys=True, default=float))
    _emit(doc, cfg, out_dir, "params", fmt)
    return EXIT_OK


def cmd_density(cfg, out_dir, fmt):
    sp, _ = _build_objects(cfg)
    kern = ExactKernel(sp)
    os.makedirs(out_dir, exist_ok=True)
    x = np.linspace(-20.0, 20.0, 801)
    t_vals = (0.1, 1.0)
    export_grid_csv(os.path.join(out_dir, "kernel.csv"), t_vals, x,
                    [kern(t, x) for t in t_vals])
    doc = {f"mass_t{t:g}": kern.mass(t) for t in t_vals}
    doc["comparability"] = comparability_constant(sp)
    doc["gradient_bound"] = gradient_bound_constant(sp)
    _emit(doc, cfg, out_dir, "density", fmt)
    return EXIT_OK


def cmd_besov(cfg, out_dir, fmt):
    sp, bi = _build_objects(cfg)
    bc = cfg["besov"]
    rng = substream(int(cfg["seed"]), "cli-besov")
    n, extent = int(bc["n"]), float(bc["extent"])
    cfg_norm = ThermicConfig(theta=-bi.beta, alpha=sp.alpha)
    norms, duals = [], []
    for _ in range(int(bc["n_fields"])):
        spec = rng.normal(size=n // 2 + 1) + 1j * rng.normal(size=n // 2 + 1)
        f = SampledField.from_spectrum(spec * np.exp(
            -np.abs(np.arange(n // 2 + 1)) / (n / 8)), extent, n)
        res = thermic_norm(f, cfg_norm)
        norms.append(res["total"])
        g = SampledField.from_spectrum(
            rng.normal(size=n // 2 + 1) + 0j, extent, n)
        duals.append(validate_duality(f, g, cfg_norm, cfg_norm.conjugate()))
    doc = {"n_fields": int(bc["n_fields"]),
           "norm_max": float(np.max(norms)),
           "duality_ratio_max": float(np.max(duals))}
    _emit(doc, cfg, out_dir, "besov", fmt)
    return EXIT_OK


def cmd_simulate(cfg, out_dir, fmt):
    sp, bi = _build_objects(cfg)
    sim = cfg["simulation"]
    drift = _drift_object(cfg, sp, bi)
    T = float(cfg["solver"]["T"])
    x0 = float(cfg["solver"]["x"])
    term, aborted = euler_paths(x0, drift, T, int(sim["steps"]),
                                int(sim["n_paths"]), sp,
                                seed=int(cfg["seed"]))
    os.makedirs(out_dir, exist_ok=True)
    save_samples(os.path.join(out_dir, "samples.npz"), term, sp, T,
                 int(sim["steps"]), int(cfg["seed"]))
    half = float(sim["grid_halfwidth"])
    grid = np.linspace(x0 - half, x0 + half, 513)
    me = estimate_marginal(term, grid, T, sp)
    marginal_to_csv(me, os.path.join(out_dir, "marginal.csv"))
    doc = {"n_paths": int(sim["n_paths"]), "aborted": int(aborted),
           "bandwidth": me.bandwidth, "mass_in_grid": me.mass_in_grid}
    _emit(doc, cfg, out_dir, "simulate", fmt)
    return EXIT_OK


def cmd_solve(cfg, out_dir, fmt):
    sp, bi = _build_objects(cfg)
    scfg = _solver_config(cfg)
    drift = _drift_object(cfg, sp, bi)
    s = cfg["solver"]
    dg = duhamel_solve(sp, drift, float(s["s"]), float(s["x"]),
                       float(s["T"]), config=scfg, with_grad=True)
    os.makedirs(out_dir, exist_ok=True)
    dg.to_csv(os.path.join(out_dir, "density.csv"))
    dg.sidecar(os.path.join(out_dir, "density_meta.json"), extra=_stamp(cfg))
    doc = {"iterations": dg.iterations,
           "final_residual": float(dg.residuals[-1]),
           "mass_final": float(dg.mass[-1]),
           "tail_mass_final": float(dg.tail_mass[-1])}
    rho = float(s["rho"])
    adm = check_gr(sp, bi)
    if adm.gr and adm.gamma > 0:
        lo, hi = rho_range(bi, sp)
        if lo < rho < hi:
            diag = diagnostics(dg, rho, sp, bi)
            doc["g_max"] = float(np.max(diag.g))
            doc["G_max"] = float(np.max(diag.G))
    _emit(doc, cfg, out_dir, "solve", fmt)
    return EXIT_OK


def cmd_verify(cfg, out_dir, fmt):
    sp, bi = _build_objects(cfg)
    scfg = _solver_config(cfg)
    s = cfg["solver"]
    base = _drift_object(cfg, sp, bi)
    if not hasattr(base, "coeffs"):
        raise ConfigError("drift.builtin",
                          "verify requires the synthetic drift")
    levels = [int(m) for m in cfg["mollification"]["levels"]]
    rep = m_stabilization(base, levels, sp, bi, float(s["rho"]),
                          s=float(s["s"]), x=float(s["x"]),
                          T=float(s["T"]), config=scfg)
    os.makedirs(out_dir, exist_ok=True)
    rep.to_json(os.path.join(out_dir, "bound_report.json"))
    rep.to_csv(os.path.join(out_dir, "bound_report.csv"))
    ratio = validate_besov_kernel_lemma(
        sp, bi, float(s["s"]), float(s["s"]) + 0.5 * float(s["T"]),
        float(s["s"]) + float(s["T"]), float(s["x"]), float(s["x"]) + 0.3,
        zeta=min(1.0, -bi.beta + 0.3))
    doc = {"verdict": rep.verdict, "levels": levels,
           "kernel_lemma_ratio": float(ratio)}
    _emit(doc, cfg, out_dir, "verify", fmt)
    return EXIT_OK


def cmd_all(cfg, out_dir, fmt):
    for fn in (cmd_check_params, cmd_density, cmd_besov, cmd_simulate,
               cmd_solve, cmd_verify):
        rc = fn(cfg, out_dir, fmt)
        if rc != EXIT_OK:
            return rc
    return EXIT_OK


COMMANDS = {
    "check-params": cmd_check_params,
    "density": cmd_density,
    "besov": cmd_besov,
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "all": cmd_all,
}


def build_parser():
    ap = argparse.ArgumentParser(
        prog="stableheat",
        description="numerical laboratory for stable heat-kernel estimates")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", default=None, help="JSON config path")
    ap.add_argument("--seed", type=int, default=None,
                    help="master seed (overrides the config)")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--threads", type=int, default=0,
                    help="worker threads (0 = auto)")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    return ap


def _error_json(kind, key, message):
    return json.dumps({"error": kind, "key": key, "message": message},
                      sort_keys=True)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads > 0:
        try:
            import numba
            numba.set_num_threads(args.threads)
        except ImportError:
            pass
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = int(args.seed)
        return COMMANDS[args.command](cfg, args.out, args.format)
    except ConfigError as exc:
        print(_error_json("config", exc.key, str(exc)), file=sys.stderr)
        return EXIT_CONFIG
    except (ParameterError, DomainError) as exc:
        print(_error_json("config", type(exc).__name__, str(exc)),
              file=sys.stderr)
        return EXIT_CONFIG
    except (NonContractionError, ArithmeticError, RuntimeError) as exc:
        print(_error_json("numerical", type(exc).__name__, str(exc)),
              file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
