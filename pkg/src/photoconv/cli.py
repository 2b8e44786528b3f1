"""Command-line front end.

Subcommands
-----------
radiation      solve the layer's radiation field, dump tau/G/q/G_coll
base-state     solve the equilibrium profile, dump z/n_s/tau/G_s/q_s/M_s
neutral-curve  trace the neutral branches over a wavenumber scan
critical       locate the critical mode for one parameter set
table          run the standard parameter grid and emit one summary
               row per case

Every command reads an optional flat key=value config file ('#' starts a
comment; unknown keys are rejected), writes its CSV outputs plus a JSON
result record under --out, and caches the radiation/base-state
intermediates there unless --no-cache is given.  Outputs are
deterministic: identical configs give byte-identical CSVs.
"""

import argparse
import csv
import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

from . import cache
from .basestate import (MAX_INCIDENCE_DEG, PhototaxisCurve, SuspensionParams,
                        solve_base_state)
from .radiative import solve_basic_radiation
from .stability import critical_mode, trace_neutral_curve

__all__ = ["CaseConfig", "parse_config", "run_command", "main"]


@dataclasses.dataclass
class CaseConfig:
    """One case: physical parameters, grid sizes, and the scan window."""

    Sc: float = 20.0
    Vc: float = 15.0
    tauH: float = 0.5
    omega: float = 0.4
    A1: float = 0.0
    B: float = 0.26
    theta_i_deg: float = 0.0
    n0: float = 1.333
    Upsilon: float = 0.252
    n_tau: int = 401
    n_z: int = 129
    n_polar: int = 24
    n_azimuth: int = 16
    k_min: float = 0.4
    k_max: float = 8.0
    n_k: int = 16
    out_dir: str = "."
    use_cache: bool = True
    threads: int = 1

    def suspension_params(self):
        return SuspensionParams(
            Sc=self.Sc, Vc=self.Vc, tauH=self.tauH, omega=self.omega,
            A1=self.A1, B=self.B, theta_i_deg=self.theta_i_deg, n0=self.n0,
            curve=PhototaxisCurve(upsilon=self.Upsilon))


_CONFIG_KEYS = {f.name: f.type for f in dataclasses.fields(CaseConfig)
                if f.name not in ("out_dir", "use_cache", "threads")}

_RANGES = {
    "Sc": (lambda v: v > 0, "must be positive"),
    "Vc": (lambda v: v >= 0, "must be nonnegative"),
    "tauH": (lambda v: v > 0, "must be positive"),
    "omega": (lambda v: 0.0 <= v <= 1.0, "outside [0, 1]"),
    "A1": (lambda v: -1.0 < v <= 1.0, "outside (-1, 1]"),
    "B": (lambda v: v >= 0, "must be nonnegative"),
    "theta_i_deg": (lambda v: 0.0 <= v <= MAX_INCIDENCE_DEG,
                    f"outside [0, {MAX_INCIDENCE_DEG}]"),
    "n0": (lambda v: v >= 1.0, "must be >= 1"),
    "Upsilon": (lambda v: v > 0, "must be positive"),
    "n_tau": (lambda v: v >= 8, "must be at least 8"),
    "n_z": (lambda v: v >= 65, "must be at least 65"),
    "n_polar": (lambda v: v >= 4, "must be at least 4"),
    "n_azimuth": (lambda v: v >= 4, "must be at least 4"),
    "k_min": (lambda v: v > 0, "must be positive"),
    "k_max": (lambda v: v > 0, "must be positive"),
    "n_k": (lambda v: v >= 2, "must be at least 2"),
}


class ConfigError(ValueError):
    pass


def _parse_overrides(text):
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for chunk in line.split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            if "=" not in chunk:
                raise ConfigError(f"line {lineno}: expected key = value, "
                                  f"got {chunk!r}")
            key, _, val = chunk.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            caster = int if _CONFIG_KEYS[key] in (int, "int") else float
            try:
                overrides[key] = caster(val)
            except ValueError:
                raise ConfigError(f"line {lineno}: cannot parse "
                                  f"{key} = {val!r} as {caster.__name__}")
    return overrides


def parse_config(text):
    """Parse a flat key=value document into a CaseConfig.

    Keys may be separated by newlines or commas; '#' starts a comment.
    Unknown keys and out-of-range values raise ConfigError, the former
    with the offending line number, the latter naming the key.  Keys not
    mentioned keep their defaults (``main`` logs which ones).
    """
    overrides = _parse_overrides(text)
    for key, value in overrides.items():
        ok, why = _RANGES[key]
        if not ok(value):
            raise ConfigError(f"{key} = {value} {why}")
    cfg = CaseConfig(**overrides)
    if cfg.k_max <= cfg.k_min:
        raise ConfigError(f"k_max = {cfg.k_max} must exceed k_min = "
                          f"{cfg.k_min}")
    return cfg


def _fmt(x):
    return f"{x:.17g}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else _fmt(c) for c in row])


def _write_record(path, record):
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _config_echo(cfg):
    return {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)
            if f.name in _CONFIG_KEYS}


def _tag(kind, params):
    _, digest = cache.param_key(kind, params)
    return digest.hex()[:12]


def _solve_radiation(cfg):
    p = cfg.suspension_params()
    rad_key = {"tauH": cfg.tauH, "omega": cfg.omega, "A1": cfg.A1,
               "B": cfg.B, "theta0": p.theta0, "n_tau": cfg.n_tau}
    path = os.path.join(cfg.out_dir, "cache",
                        f"radiation_{_tag('radiation', rad_key)}.bin")
    rad = None
    if cfg.use_cache and os.path.exists(path):
        rad = cache.load_radiation(path, cfg.tauH, cfg.omega, cfg.A1, cfg.B,
                                   p.theta0, cfg.n_tau)
    if rad is None:
        rad = solve_basic_radiation(cfg.tauH, cfg.omega, A1=cfg.A1, B=cfg.B,
                                    theta0=p.theta0, n_tau=cfg.n_tau)
        if cfg.use_cache:
            os.makedirs(os.path.dirname(path), exist_ok=True)
            cache.save_radiation(path, rad, cfg.n_tau)
    return p, rad


def _solve_base_state(cfg):
    p, rad = _solve_radiation(cfg)
    bs_key = {k: getattr(cfg, k) for k in
              ("Sc", "Vc", "tauH", "omega", "A1", "B", "theta_i_deg", "n0",
               "Upsilon", "n_tau", "n_z")}
    path = os.path.join(cfg.out_dir, "cache",
                        f"basestate_{_tag('basestate', bs_key)}.bin")
    bs = None
    if cfg.use_cache and os.path.exists(path):
        bs = cache.load_base_state(path, p, rad, cfg.n_z)
    if bs is None:
        bs = solve_base_state(p, rad, n_z=cfg.n_z)
        if cfg.use_cache:
            os.makedirs(os.path.dirname(path), exist_ok=True)
            cache.save_base_state(path, bs, cfg.n_z)
    return p, rad, bs


def _quad_for(cfg):
    from .perturb import angular_quadrature

    return angular_quadrature(cfg.n_polar, cfg.n_azimuth)


# ---------------------------------------------------------------------------
# subcommands

def cmd_radiation(cfg):
    t0 = time.perf_counter()
    _, rad = _solve_radiation(cfg)
    rows = zip(rad.tau, rad.G, rad.q, rad.G_coll)
    _write_csv(os.path.join(cfg.out_dir, "radiation.csv"),
               ["tau", "G", "q", "G_coll"], rows)
    _write_record(os.path.join(cfg.out_dir, "radiation_record.json"), {
        "command": "radiation",
        "config": _config_echo(cfg),
        "iterations": rad.iterations,
        "residual": rad.residual,
        "wall_time_s": time.perf_counter() - t0,
    })
    return 0


def cmd_base_state(cfg):
    t0 = time.perf_counter()
    _, _, bs = _solve_base_state(cfg)
    rows = zip(bs.z, bs.n_s, bs.tau_of_z, bs.G_s, bs.q_s, bs.M_s)
    _write_csv(os.path.join(cfg.out_dir, "base_state.csv"),
               ["z", "n_s", "tau", "G_s", "q_s", "M_s"], rows)
    _write_record(os.path.join(cfg.out_dir, "base_state_record.json"), {
        "command": "base-state",
        "config": _config_echo(cfg),
        "mass": bs.mass(),
        "n_top": bs.n_top,
        "wall_time_s": time.perf_counter() - t0,
    })
    return 0


def cmd_neutral_curve(cfg):
    t0 = time.perf_counter()
    _, _, bs = _solve_base_state(cfg)
    quad = _quad_for(cfg)
    branches = trace_neutral_curve(bs, (cfg.k_min, cfg.k_max), cfg.n_k,
                                   quad=quad)
    rows = []
    for br in branches:
        for k, R, sigma in br.points:
            rows.append((k, R, sigma, br.kind))
    rows.sort(key=lambda r: (r[3], r[0]))
    _write_csv(os.path.join(cfg.out_dir, "neutral_curve.csv"),
               ["k", "R", "sigma", "branch_kind"], rows)
    _write_record(os.path.join(cfg.out_dir, "neutral_curve_record.json"), {
        "command": "neutral-curve",
        "config": _config_echo(cfg),
        "branches": [{"kind": br.kind, "points": len(br.points)}
                     for br in branches],
        "wall_time_s": time.perf_counter() - t0,
    })
    return 0


_SUMMARY_HEADER = ["V_c", "tau_H", "omega", "B", "theta_i", "A1",
                   "lambda_c", "R_c", "Im_gamma"]


def _critical_row(cfg):
    _, rad, bs = _solve_base_state(cfg)
    quad = _quad_for(cfg)
    branches = trace_neutral_curve(bs, (cfg.k_min, cfg.k_max), cfg.n_k,
                                   quad=quad)
    cm = critical_mode(branches, bs=bs, quad=quad)
    row = (cfg.Vc, cfg.tauH, cfg.omega, cfg.B, cfg.theta_i_deg, cfg.A1,
           cm.lambda_c, cm.R_c, cm.sigma_c)
    diag = {"radiation_iterations": rad.iterations,
            "radiation_residual": rad.residual,
            "base_state_mass": bs.mass()}
    return cm, row, diag


def cmd_critical(cfg):
    t0 = time.perf_counter()
    cm, row, diag = _critical_row(cfg)
    _write_csv(os.path.join(cfg.out_dir, "critical.csv"),
               _SUMMARY_HEADER, [row])
    _write_record(os.path.join(cfg.out_dir, "critical_record.json"), {
        "command": "critical",
        "config": _config_echo(cfg),
        "k_c": cm.k_c,
        "lambda_c": cm.lambda_c,
        "R_c": cm.R_c,
        "Im_gamma": cm.sigma_c,
        "overstable": cm.overstable,
        "mode_number": cm.mode_number,
        "diagnostics": diag,
        "grid": {"n_tau": cfg.n_tau, "n_z": cfg.n_z,
                 "n_polar": cfg.n_polar, "n_azimuth": cfg.n_azimuth},
        "wall_time_s": time.perf_counter() - t0,
    })
    return 0


# the standard study grid: (tau_H, B) move together
GRID_VC = (10.0, 15.0, 20.0)
GRID_TAU_B = ((0.5, 0.26), (1.0, 0.48))
GRID_THETA = (0.0, 40.0, 80.0)
GRID_A1 = (0.0, 0.4, 0.8)


def cmd_table(cfg):
    t0 = time.perf_counter()
    cases = []
    for Vc in GRID_VC:
        for tauH, B in GRID_TAU_B:
            for theta in GRID_THETA:
                for A1 in GRID_A1:
                    cases.append(dataclasses.replace(
                        cfg, Vc=Vc, tauH=tauH, B=B, theta_i_deg=theta,
                        A1=A1))

    def run_case(case_cfg):
        t1 = time.perf_counter()
        cm, row, _ = _critical_row(case_cfg)
        return cm, row, time.perf_counter() - t1

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run_case, cases))
    else:
        results = [run_case(c) for c in cases]

    _write_csv(os.path.join(cfg.out_dir, "table.csv"), _SUMMARY_HEADER,
               [row for _, row, _ in results])
    _write_record(os.path.join(cfg.out_dir, "table_record.json"), {
        "command": "table",
        "config": _config_echo(cfg),
        "cases": [{
            "V_c": row[0], "tau_H": row[1], "theta_i": row[4], "A1": row[5],
            "lambda_c": row[6], "R_c": row[7], "Im_gamma": row[8],
            "overstable": cm.overstable, "mode_number": cm.mode_number,
            "wall_time_s": dt,
        } for cm, row, dt in results],
        "wall_time_s": time.perf_counter() - t0,
    })
    return 0


_COMMANDS = {
    "radiation": cmd_radiation,
    "base-state": cmd_base_state,
    "neutral-curve": cmd_neutral_curve,
    "critical": cmd_critical,
    "table": cmd_table,
}


def run_command(command, cfg):
    """Dispatch one subcommand; returns the process exit status."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    try:
        return _COMMANDS[command](cfg)
    except Exception as exc:
        print(f"photoconv {command}: {exc}", file=sys.stderr)
        _write_record(os.path.join(cfg.out_dir,
                                   f"{command.replace('-', '_')}_record.json"),
                      {"command": command, "config": _config_echo(cfg),
                       "status": "failed", "error": str(exc)})
        return 1


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="photoconv",
        description="Onset of bioconvection in a phototactic suspension "
                    "under oblique collimated and diffuse illumination.")
    ap.add_argument("command", choices=sorted(_COMMANDS))
    ap.add_argument("--config", metavar="PATH",
                    help="flat key=value config file ('#' comments)")
    ap.add_argument("--out", metavar="DIR", default=".",
                    help="output directory (default: current)")
    ap.add_argument("--no-cache", action="store_true",
                    help="do not read or write cached intermediates")
    ap.add_argument("--threads", type=int, default=1, metavar="N",
                    help="worker threads for the table command")
    args = ap.parse_args(argv)

    text = ""
    if args.config is not None:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            print(f"photoconv: cannot read config: {exc}", file=sys.stderr)
            return 2
    try:
        overrides = _parse_overrides(text)
        cfg = parse_config(text)
    except ConfigError as exc:
        print(f"photoconv: config error: {exc}", file=sys.stderr)
        return 2
    defaulted = sorted(set(_CONFIG_KEYS) - set(overrides))
    cfg.out_dir = args.out
    cfg.use_cache = not args.no_cache
    if args.threads < 1:
        print("photoconv: --threads must be at least 1", file=sys.stderr)
        return 2
    cfg.threads = args.threads

    if defaulted:
        print("defaulted keys: " + ", ".join(defaulted))
    print("effective config: " + ", ".join(
        f"{k}={v}" for k, v in sorted(_config_echo(cfg).items())))
    return run_command(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
