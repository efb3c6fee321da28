"""Command-line front end: config-driven pipelines over the library modules.

Subcommands: spectrum, simulate, expand, verify-special, helicity,
sweep-omega, report.  All outputs are deterministic given config + seed,
embed the config hash and artifact version, and use JSON/JSON-lines for
structured data with CSV reserved for plot series.  Errors are emitted as
machine-readable JSON on stderr with exit codes 0 (ok), 2 (config), 3
(numerical failure), 4 (verification failure).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from fractions import Fraction
from typing import List, Optional, Sequence

import jsonschema
import numpy as np

from . import __version__
from .lattice import LatticeError, build_lattice, semigroup_table, spectrum_to_json
from .fields import SpectralField, field_from_json, random_gevrey
from .spoly import OdeResonanceError, spoly_to_json
from .solver import (SolverConfig, config_hash, integrate, trajectory_from_jsonl,
                     trajectory_to_jsonl, transform_trajectory)
from .expansion import (FitPolicy, expand, remainder_rate, time_average_Q,
                        to_u_expansion, verify_expansion_system)
from .special import (DriftingSolution, MeanFlow, VkData, helicity,
                      helicity_series, linear_evolution, pde_residual)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECK = 4

OUTDIR_ENV = "ROTSPEC_OUTDIR"


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


_POSNUM = {"type": "number", "exclusiveMinimum": 0}
_COEFS = {
    "type": "object",
    "patternProperties": {r"^[0-9]+$": {
        "type": "array", "minItems": 3, "maxItems": 3,
        "items": {"type": "array", "minItems": 2, "maxItems": 2,
                  "items": {"type": "number"}},
    }},
    "additionalProperties": False,
}
CONFIG_SCHEMA = {
    "type": "object",
    "required": ["lattice", "omega", "initial", "solver"],
    "additionalProperties": False,
    "properties": {
        "lattice": {
            "type": "object",
            "required": ["cutoff"],
            "additionalProperties": False,
            "properties": {
                "L": {"type": "array", "minItems": 3, "maxItems": 3,
                      "items": {"type": ["string", "integer"]}},
                "cutoff": {"type": ["string", "integer"]},
            },
        },
        "omega": {"type": "number"},
        "initial": {
            "type": "object",
            "oneOf": [
                {"properties": {"kind": {"const": "random-gevrey"},
                                "seed": {"type": "integer"},
                                "sigma": _POSNUM,
                                "amplitude": _POSNUM},
                 "required": ["kind", "seed"], "additionalProperties": False},
                {"properties": {"kind": {"const": "vk"},
                                "k": {"type": "array", "minItems": 3, "maxItems": 3,
                                      "items": {"type": "integer"}},
                                "coefficients": _COEFS},
                 "required": ["kind", "k", "coefficients"],
                 "additionalProperties": False},
                {"properties": {"kind": {"const": "drift"},
                                "k": {"type": "array", "minItems": 3, "maxItems": 3,
                                      "items": {"type": "integer"}},
                                "coefficients": _COEFS,
                                "U0": {"type": "array", "minItems": 3, "maxItems": 3,
                                       "items": {"type": "number"}}},
                 "required": ["kind", "k", "coefficients", "U0"],
                 "additionalProperties": False},
                {"properties": {"kind": {"const": "file"},
                                "path": {"type": "string"}},
                 "required": ["kind", "path"], "additionalProperties": False},
            ],
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": _POSNUM,
                "t_end": _POSNUM,
                "t0": {"type": "number"},
                "form": {"enum": ["u", "v"]},
                "record_stride": {"type": "integer", "minimum": 1},
            },
        },
        "expansion": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "order": {"type": "integer", "minimum": 1},
                "xi_windows": {"type": "array", "items": {
                    "type": "array", "minItems": 2, "maxItems": 2,
                    "items": {"type": "number"}}},
                "norm": {"type": "array", "minItems": 2, "maxItems": 2,
                         "items": {"type": "number"}},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "gevrey_norms": {"type": "array", "items": {
                    "type": "array", "minItems": 2, "maxItems": 2,
                    "items": {"type": "number"}}},
            },
        },
    },
}


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise CliError(EXIT_CONFIG, "config", f"cannot read config: {e}")
    except json.JSONDecodeError as e:
        raise CliError(EXIT_CONFIG, "config", f"config is not valid JSON: {e}")
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        raise CliError(EXIT_CONFIG, "config", f"config schema violation: {e.message}")
    return cfg


def _lattice_from(cfg: dict):
    lc = cfg["lattice"]
    return build_lattice(ell=lc.get("L"), cutoff=lc["cutoff"])


def _vk_from(init: dict) -> VkData:
    coeffs = {}
    for m, rows in init["coefficients"].items():
        coeffs[int(m)] = np.array([complex(re, im) for re, im in rows])
    return VkData(tuple(init["k"]), coeffs)


def _initial_field(cfg: dict, lat) -> SpectralField:
    init = cfg["initial"]
    kind = init["kind"]
    if kind == "random-gevrey":
        return random_gevrey(lat, seed=init["seed"], sigma=init.get("sigma", 1.0),
                             amplitude=init.get("amplitude", 0.1))
    if kind in ("vk", "drift"):
        return _vk_from(init).field(lat)
    if kind == "file":
        try:
            with open(init["path"]) as fh:
                return field_from_json(fh.read(), lat)
        except OSError as e:
            raise CliError(EXIT_CONFIG, "config", f"cannot read field file: {e}")
    raise CliError(EXIT_CONFIG, "config", f"unknown initial kind {kind!r}")


def _resolve_out(path: Optional[str]) -> Optional[str]:
    if path is None or path == "-":
        return path
    base = os.environ.get(OUTDIR_ENV)
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def _write_text(path: Optional[str], text: str):
    path = _resolve_out(path)
    if path is None or path == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _stamp(doc: dict, cfg: Optional[dict]) -> dict:
    doc["artifact"] = {"name": "rotspec", "version": __version__}
    doc["config_hash"] = config_hash(cfg or {})
    return doc


def _dump(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_spectrum(args) -> int:
    ell = args.L.split(",")
    if len(ell) != 3:
        raise CliError(EXIT_CONFIG, "config", "--L needs three comma-separated rationals")
    lat = build_lattice(ell=ell, cutoff=args.cutoff)
    table = semigroup_table(lat, args.cap if args.cap is not None else None)
    doc = json.loads(spectrum_to_json(lat, table))
    _stamp(doc, {"L": ell, "cutoff": args.cutoff, "cap": args.cap})
    _write_text(args.out, _dump(doc))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    lat = _lattice_from(cfg)
    u0 = _initial_field(cfg, lat)
    sv = cfg["solver"]
    config = SolverConfig(dt=sv.get("dt", 1e-3), t_end=sv.get("t_end", 1.0),
                          omega=cfg["omega"], form=sv.get("form", "v"),
                          record_stride=sv.get("record_stride", 1),
                          t0=sv.get("t0", 0.0))
    traj = integrate(u0, config)
    if not np.isfinite(traj.coeffs).all():
        raise CliError(EXIT_NUMERICAL, "numerical", "trajectory contains NaN/Inf")
    gevrey = [tuple(g) for g in cfg.get("output", {}).get("gevrey_norms", [])]
    path = _resolve_out(args.out)
    with open(path, "w") as fh:
        trajectory_to_jsonl(traj, fh, config_doc=cfg, version=__version__,
                            gevrey=gevrey)
    return EXIT_OK


def _policy_from_meta(meta: dict) -> FitPolicy:
    exp_cfg = (meta.get("config") or {}).get("expansion", {})
    wins = exp_cfg.get("xi_windows")
    if wins:
        return FitPolicy(xi_windows=tuple(tuple(w) for w in wins))
    return FitPolicy()


def cmd_expand(args) -> int:
    try:
        with open(args.traj) as fh:
            traj, meta = trajectory_from_jsonl(fh)
    except OSError as e:
        raise CliError(EXIT_CONFIG, "config", f"cannot read trajectory: {e}")
    if not np.isfinite(traj.coeffs).all():
        raise CliError(EXIT_NUMERICAL, "numerical", "trajectory contains NaN/Inf")
    if traj.form == "u":
        traj = transform_trajectory(traj, "v")
    alpha, sigma = (float(x) for x in args.norm.split(","))
    exp = expand(traj, args.order, _policy_from_meta(meta))
    verify = verify_expansion_system(exp)

    ts = traj.times
    rates = []
    columns = [list(traj.norms(alpha, sigma))]
    for n in range(1, args.order + 1):
        r = remainder_rate(exp, traj, n, alpha=alpha, sigma=sigma)
        columns.append([float(x) for x in r.pop("norms")])
        r.pop("times")
        r["order"] = n
        rates.append(r)
    doc = {
        "omega": traj.omega,
        "norm": [alpha, sigma],
        "mus": [str(mu) for mu in exp.mus],
        "orders": [json.loads(spoly_to_json(q)) for q in exp.orders],
        "diagnostics": exp.diagnostics,
        "verify": verify,
        "rates": rates,
        "series": {"t": [float(t) for t in ts], "remainder": columns},
    }
    _stamp(doc, meta.get("config"))
    _write_text(args.out, _dump(doc))
    return EXIT_OK


def _check(name: str, value: float, tol: float, larger_is_pass: bool = False) -> dict:
    ok = (value >= tol) if larger_is_pass else (value <= tol)
    return {"name": name, "value": float(value), "tol": float(tol),
            "comparison": ">=" if larger_is_pass else "<=", "pass": bool(ok)}


def _case_ray_closed_form(omega: float, seed: int) -> List[dict]:
    lat = build_lattice(cutoff=18)
    vk = VkData.random((1, 1, 0), (1, 2, 3), seed, lat)
    u0 = vk.field(lat)
    cfg = SolverConfig(dt=1e-3, t_end=0.5, omega=omega, form="u")
    traj = integrate(u0, cfg)
    checks = []
    t_end = float(traj.times[-1])
    exact = linear_evolution(u0, t_end, omega)
    got = traj.field(traj.n_samples - 1)
    rel = (got - exact).norm() / exact.norm()
    checks.append(_check("closed_form_rel_l2_error", rel, 1e-8))
    ray = {tuple(int(m) * c for c in vk.k) for m in (-3, -2, -1, 1, 2, 3)}
    off = np.array([i for i in range(lat.n_modes)
                    if tuple(int(c) for c in lat.ks[i]) not in ray])
    leak = float(np.abs(traj.coeffs[:, off, :]).max()) / float(np.abs(traj.coeffs).max())
    checks.append(_check("invariant_line_leak", leak, 1e-12))
    return checks


def _case_drift(omega: float, seed: int) -> List[dict]:
    lat = build_lattice(cutoff=12)
    vk = VkData.random((1, 1, 1), (1, 2), seed, lat)
    flow = MeanFlow(np.array([1.0, 0.5, -0.25]), omega)
    sol = DriftingSolution(vk, flow, lat)
    times = np.linspace(0.0, 1.0, 10)
    rep = pde_residual(sol.velocity, sol.pressure, omega, times,
                       grid_n=32, velocity_dt=sol.velocity_dt)
    checks = [_check("pde_residual_max", rep["max_residual"], 1e-8)]
    neg = pde_residual(sol.velocity, None, omega, times[:3],
                       grid_n=32, velocity_dt=sol.velocity_dt)
    checks.append(_check("zeroed_pressure_residual", neg["max_residual"],
                         1e-2, larger_is_pass=True))
    speeds = [float(np.linalg.norm(flow.U(t))) for t in times]
    checks.append(_check("mean_speed_variation",
                         max(speeds) - min(speeds), 1e-12))
    return checks


def _case_helicity(omega: float, seed: int) -> List[dict]:
    lat = build_lattice(cutoff=12)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(20):
        vk = VkData.random((1, 1, 1), (1, 2), int(rng.integers(1 << 30)), lat)
        ts = np.linspace(0.0, 1.0, 5)
        series = helicity_series(vk, lat, ts)
        u0 = vk.field(lat)
        for t, ref in zip(ts, series):
            h = helicity(linear_evolution(u0, float(t), omega))
            scale = max(abs(ref), 1e-12)
            worst = max(worst, abs(h - ref) / scale)
    checks = [_check("spectral_vs_series_rel", worst, 1e-8)]
    # aligned data: real and imaginary parts parallel force zero helicity
    z = np.array([1.0 + 2.0j, -2.0 - 4.0j, 1.0 + 2.0j])
    vk0 = VkData((1, 1, 0), {1: z - (z @ np.array([1, 1, 0])) / 2 * np.array([1, 1, 0])})
    u0 = vk0.field(lat)
    h0 = max(abs(helicity(linear_evolution(u0, t, omega))) for t in np.linspace(0, 2, 10))
    checks.append(_check("aligned_data_helicity", h0, 1e-12 * u0.norm() ** 2))
    return checks


def cmd_verify_special(args) -> int:
    cases = {
        "ray-closed-form": _case_ray_closed_form,
        "drift": _case_drift,
        "helicity": _case_helicity,
    }
    if args.case not in cases:
        raise CliError(EXIT_CONFIG, "config",
                       f"unknown case {args.case!r}; choose from {sorted(cases)}")
    checks = cases[args.case](args.omega, args.seed)
    ok = all(c["pass"] for c in checks)
    doc = _stamp({"case": args.case, "omega": args.omega, "seed": args.seed,
                  "checks": checks, "pass": ok},
                 {"case": args.case, "omega": args.omega, "seed": args.seed})
    _write_text(args.out, _dump(doc))
    return EXIT_OK if ok else EXIT_CHECK


def cmd_helicity(args) -> int:
    try:
        with open(args.traj) as fh:
            traj, _ = trajectory_from_jsonl(fh)
    except OSError as e:
        raise CliError(EXIT_CONFIG, "config", f"cannot read trajectory: {e}")
    if traj.form == "v":
        traj = transform_trajectory(traj, "u")
    rows = [(float(t), helicity(traj.field(i))) for i, t in enumerate(traj.times)]
    path = _resolve_out(args.out)
    stream = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        w = csv.writer(stream)
        w.writerow(["t", "helicity"])
        w.writerows(rows)
    finally:
        if stream is not sys.stdout:
            stream.close()
    return EXIT_OK


def cmd_sweep_omega(args) -> int:
    cfg = _load_config(args.config)
    omegas = [float(x) for x in args.omegas.split(",")]
    if len(omegas) < 2:
        raise CliError(EXIT_CONFIG, "config", "sweep needs at least two rotation rates")
    lat = _lattice_from(cfg)
    u0 = _initial_field(cfg, lat)
    sv = cfg["solver"]
    norms = []
    for om in omegas:
        config = SolverConfig(dt=sv.get("dt", 1e-3), t_end=sv.get("t_end", 12.0),
                              omega=om, form="v",
                              record_stride=sv.get("record_stride", 1))
        traj = integrate(u0, config)
        if not np.isfinite(traj.coeffs).all():
            raise CliError(EXIT_NUMERICAL, "numerical",
                           f"trajectory at omega={om} contains NaN/Inf")
        exp = expand(traj, max(args.order, 1),
                     _policy_from_meta({"config": cfg}))
        mu1, Q1 = to_u_expansion(exp)[0]
        qbar = time_average_Q(Q1, args.T)
        norms.append(qbar.evaluate(args.t).norm())
    ratios = [norms[i + 1] / norms[i] if norms[i] else float("nan")
              for i in range(len(norms) - 1)]
    doc = _stamp({"omega": omegas, "qbar_norm": norms, "ratio": ratios,
                  "T": args.T, "t": args.t}, cfg)
    _write_text(args.out, _dump(doc))
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        with open(args.report) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise CliError(EXIT_CONFIG, "config", f"cannot read report: {e}")
    path = _resolve_out(args.out)
    stream = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        w = csv.writer(stream)
        if "series" in doc:
            cols = doc["series"].get("remainder", [])
            w.writerow(["t"] + [f"remainder_{i}" for i in range(len(cols))])
            for row in zip(doc["series"].get("t", []), *cols):
                w.writerow(row)
        elif "qbar_norm" in doc:
            w.writerow(["omega", "qbar_norm"])
            w.writerows(zip(doc["omega"], doc["qbar_norm"]))
        elif not doc:
            w.writerow(["t"])
        else:
            raise CliError(EXIT_CONFIG, "config",
                           "report is neither an expansion nor a sweep report")
    finally:
        if stream is not sys.stdout:
            stream.close()
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rotspec",
                                description="spectral rotating-flow toolbox")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("spectrum", help="lattice eigenvalues and decay-rate semigroup")
    s.add_argument("--L", default="1,1,1", help="periods as rationals in units of 2*pi")
    s.add_argument("--cutoff", default="6")
    s.add_argument("--cap", default=None, help="semigroup cap (default: cutoff)")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("simulate", help="integrate a configured initial field")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="trajectory JSON-lines path")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("expand", help="fit the long-time expansion of a trajectory")
    s.add_argument("--traj", required=True)
    s.add_argument("--order", type=int, required=True)
    s.add_argument("--norm", default="0,0", help="alpha,sigma for reported norms")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_expand)

    s = sub.add_parser("verify-special", help="closed-form solution checks")
    s.add_argument("--case", required=True,
                   help="ray-closed-form | drift | helicity")
    s.add_argument("--omega", type=float, default=10.0)
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_verify_special)

    s = sub.add_parser("helicity", help="helicity series of a trajectory (CSV)")
    s.add_argument("--traj", required=True)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_helicity)

    s = sub.add_parser("sweep-omega", help="averaged leading coefficient vs rotation")
    s.add_argument("--config", required=True)
    s.add_argument("--omegas", required=True, help="comma-separated rotation rates")
    s.add_argument("--T", type=float, required=True, help="averaging window length")
    s.add_argument("--t", type=float, default=0.0, help="evaluation time")
    s.add_argument("--order", type=int, default=1)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_sweep_omega)

    s = sub.add_parser("report", help="emit CSV plot series from a report JSON")
    s.add_argument("--report", required=True)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        sys.stderr.write(json.dumps(
            {"error": {"code": e.code, "kind": e.kind, "message": str(e)}},
            sort_keys=True) + "\n")
        return e.code
    except (OdeResonanceError, FloatingPointError) as e:
        # before ValueError: the resonance error is a ValueError subclass
        sys.stderr.write(json.dumps(
            {"error": {"code": EXIT_NUMERICAL, "kind": "numerical", "message": str(e)}},
            sort_keys=True) + "\n")
        return EXIT_NUMERICAL
    except (LatticeError, ValueError) as e:
        sys.stderr.write(json.dumps(
            {"error": {"code": EXIT_CONFIG, "kind": "config", "message": str(e)}},
            sort_keys=True) + "\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
