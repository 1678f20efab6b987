"""Command line front end: ``trapwave <subcommand> [flags]``.

Every subcommand writes its artifacts atomically into the output
directory (``--out``, else ``$TRAPWAVE_OUT``, else the working directory)
and prints a single-line JSON summary.  Exit status: 0 on success, 2 on
invalid input, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import dynamics as dyn
from . import evolution as evo
from . import hyperbolic as hyp
from . import propagator as prop
from .errors import (
    ContractViolation,
    DomainError,
    InvalidIsometryError,
    InvalidPointError,
    TrapwaveError,
)
from .io import json_line, output_dir, write_csv, write_json, write_svg
from .plot import fit_overlay, line_plot

VALIDATION_ERRORS = (ContractViolation, InvalidPointError, InvalidIsometryError, DomainError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _point(text, dim):
    coords = _floats(text)
    if len(coords) != dim:
        raise ContractViolation(f"point {text!r} needs {dim} coordinates")
    return hyp.HPoint(dim, tuple(coords))


def _check_dim(dim):
    if dim not in (2, 3):
        raise ContractViolation(f"dim must be 2 or 3, got {dim}")
    return int(dim)


def _group(cfg):
    choice = cfg["group"]
    dim = _check_dim(int(cfg["dim"]))
    if choice == "cyclic":
        return hyp.cyclic_group(float(cfg["ell"]), dim)
    if choice == "schottky":
        return hyp.schottky_pair(float(cfg["ell1"]), float(cfg["ell2"]), float(cfg["sep"]), dim)
    if isinstance(choice, dict):
        return hyp.GroupSpec.from_json(choice)
    if os.path.exists(str(choice)):
        with open(choice, encoding="utf-8") as fh:
            return hyp.GroupSpec.from_json(json.load(fh))
    raise ContractViolation(f"unknown group {choice!r}")


PROFILE_PARAMS = ("eta", "R", "a", "Rp", "c", "kappa")


def _profile(cfg):
    kind = cfg["profile"]
    params = {k: float(cfg[k]) for k in PROFILE_PARAMS if cfg.get(k) is not None}
    if isinstance(kind, dict):
        return dyn.build_profile(kind["kind"], kind.get("params", {}))
    if kind in ("flat", "elliptic"):
        return dyn.build_profile("custom", {"name": kind})
    if kind in dyn.PROFILE_KINDS and kind != "custom":
        return dyn.build_profile(kind, params)
    if os.path.exists(str(kind)):
        with open(kind, encoding="utf-8") as fh:
            obj = json.load(fh)
        return dyn.build_profile(obj["kind"], obj.get("params", {}))
    raise ContractViolation(f"unknown profile {kind!r}")


def _chi(value):
    if value is None:
        return None
    vals = _floats(value)
    if len(vals) == 1:
        return vals[0]
    if len(vals) == 2:
        return (vals[0], vals[1])
    raise ContractViolation("window must be 'c' or 'a,b'")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


class Run:
    """Artifact bookkeeping for one subcommand invocation."""

    def __init__(self, cfg, name):
        self.cfg = cfg
        self.out = cfg.get("out") or output_dir()
        self.stem = cfg.get("prefix") or name
        self.files = []

    def path(self, ext):
        return os.path.join(self.out, f"{self.stem}.{ext}")

    def csv(self, header, rows):
        self.files.append(write_csv(self.path("csv"), header, rows))

    def json(self, obj):
        self.files.append(write_json(self.path("json"), obj))

    def svg(self, text):
        if self.cfg.get("plot"):
            self.files.append(write_svg(self.path("svg"), text))


def cmd_distance(cfg, run):
    dim = _check_dim(int(cfg["dim"]))
    a, b = _point(cfg["a"], dim), _point(cfg["b"], dim)
    res = {"dim": dim, "a": a.to_list(), "b": b.to_list(), "distance": hyp.hyp_distance(a, b)}
    run.json(res)
    return res


def cmd_orbit(cfg, run):
    G = _group(cfg)
    R = float(cfg["R"])
    els = hyp.enumerate_orbit(G, R, int(cfg["cap"]))
    run.csv(["word", "displacement"], [(" ".join(map(str, e.word)), e.displacement) for e in els])
    disp = [e.displacement for e in els]
    run.svg(line_plot([{"x": disp, "y": np.arange(1, len(disp) + 1), "label": "N(R)"}],
                      "orbit count", "R", "N(R)", logy=True))
    res = {"group": G.to_json(), "R": R, "count": len(els)}
    run.json(res)
    return res


def cmd_poincare(cfg, run):
    G = _group(cfg)
    z = _point(cfg["z"], G.dim) if cfg.get("z") else G.basepoint
    zp = _point(cfg["zp"], G.dim) if cfg.get("zp") else G.basepoint
    value, tail = hyp.poincare_partial_sum(G, float(cfg["s"]), z, zp, float(cfg["R"]), int(cfg["cap"]))
    res = {"s": float(cfg["s"]), "R": float(cfg["R"]), "value": value, "tail_bound": tail}
    run.json(res)
    return res


def cmd_delta(cfg, run):
    G = _group(cfg)
    R = float(cfg["R_max"])
    delta, err = hyp.estimate_delta(G, R, int(cfg["cap"]))
    if G.kind != "cyclic":
        grid, counts = hyp.count_grid(hyp.orbit_table(G, R, int(cfg["cap"])).disp, R)
        run.csv(["R", "count"], zip(grid, counts))
    res = {"delta": delta, "stderr": err, "R_max": R}
    run.json(res)
    return res


def cmd_kernel(cfg, run):
    dim = _check_dim(int(cfg["dim"]))
    s = prop.kernel_h3(cfg["t"], cfg["rho"]) if dim == 3 else prop.kernel_h2(cfg["t"], cfg["rho"])
    res = {"dim": dim, "t": s.t, "rho": s.rho, "value": [s.value.real, s.value.imag],
           "abs": abs(s.value), "quad_error": s.quad_error}
    run.json(res)
    return res


def cmd_autokernel(cfg, run):
    G = _group(cfg)
    z = _point(cfg["z"], G.dim) if cfg.get("z") else G.basepoint
    zp = _point(cfg["zp"], G.dim) if cfg.get("zp") else G.basepoint
    a = prop.automorphic_kernel(G, float(cfg["t"]), z, zp, float(cfg["R"]), int(cfg["cap"]))
    res = {"t": a.t, "value": [a.value.real, a.value.imag], "abs": abs(a.value),
           "truncation_R": a.truncation_R, "tail_estimate": a.tail_estimate,
           "quad_error": a.quad_error, "n_terms": a.n_terms}
    run.json(res)
    return res


def cmd_dispscan(cfg, run):
    G = _group(cfg)
    grid = prop.log_time_grid(float(cfg["t_min"]), float(cfg["t_max"]), int(cfg["per_decade"]))
    small, large, rows = prop.dispersive_scan(G, grid, R=float(cfg["R"]), cap=int(cfg["cap"]), return_rows=True)
    run.csv(["t", "max_abs", "tail_max"], rows)
    t = np.array([r[0] for r in rows])
    m = np.array([r[1] for r in rows])
    series = [{"x": t, "y": m, "style": "scatter", "label": "max |K|"}]
    for fit, sel in ((small, t <= 1), (large, t > 1)):
        xx, yy = fit_overlay(t[sel], fit.exponent, math.log(fit.constant))
        series.append({"x": xx, "y": yy, "label": f"{fit.regime}: {fit.exponent:.3f}"})
    run.svg(line_plot(series, "dispersive decay", "t", "max |K|", logx=True, logy=True))
    res = {"fits": [small.to_json(), large.to_json()]}
    run.json(res)
    return res


def cmd_admissible(cfg, run):
    p = math.inf if str(cfg["p"]) in ("inf", "infinity") else float(cfg["p"])
    q = math.inf if str(cfg["q"]) in ("inf", "infinity") else float(cfg["q"])
    ok = prop.admissible(p, q, int(cfg["n"]), cfg["family"])
    res = {"p": p, "q": q, "n": int(cfg["n"]), "family": cfg["family"], "admissible": ok}
    run.json(res)
    return res


def cmd_profile(cfg, run):
    P = _profile(cfg)
    span = float(cfg["span"])
    r = np.linspace(-span, span, int(cfg["points"]))
    f, f1, f2 = P.evaluate(r)
    run.csv(["r", "f", "df", "d2f", "curvature"], zip(r, f, f1, f2, -f2 / f))
    run.svg(line_plot([{"x": r, "y": f, "label": "f"}], P.kind, "r", "f(r)"))
    res = P.to_json()
    run.json(res)
    return res


def _state(cfg, P):
    if cfg.get("omega0") is not None or cfg.get("rho0") is not None:
        return dyn.GeodesicState(float(cfg["r0"]), float(cfg["theta0"]), float(cfg.get("rho0") or 0.0),
                                 float(cfg.get("omega0") or 0.0))
    return dyn.unit_state(P, float(cfg["r0"]), float(cfg["theta0"]), float(cfg["direction"]))


def cmd_geodesic(cfg, run):
    P = _profile(cfg)
    s0 = _state(cfg, P)
    traj = dyn.geodesic_flow(P, s0, float(cfg["T"]), float(cfg["dt"]))
    rows = dyn.trajectory_rows(P, traj)
    run.csv(["time", "r", "theta", "rho", "omega", "H_drift"], rows)
    run.svg(line_plot([{"x": [x[0] for x in rows], "y": [x[1] for x in rows], "label": "r(t)"}],
                      "geodesic", "flow time", "r"))
    res = {"n_states": len(rows), "max_H_drift": max(x[5] for x in rows),
           "final": {"r": traj[-1].r, "theta": traj[-1].theta, "rho": traj[-1].rho, "omega": traj[-1].omega},
           "convention": "flow time of H = rho^2 + omega^2/f^2"}
    run.json(res)
    return res


def cmd_escape(cfg, run):
    P = _profile(cfg)
    rep = dyn.escape_probe(P, int(cfg["samples"]), cfg.get("R_escape"), float(cfg["T_max"]), int(cfg["seed"]),
                           float(cfg["tube_eps"]), bool(cfg.get("include_waist")))
    run.csv(["index", "r0", "rho0", "escape_time"],
            [(k, rep.r0[k], rep.rho0[k], rep.escape_times[k]) for k in range(rep.r0.size)])
    res = rep.to_json()
    res["monotone_violations"] = rep.monotone_violations
    run.json(res)
    return res


def cmd_jacobian(cfg, run):
    P = _profile(cfg)
    s0 = _state(cfg, P)
    T = float(cfg["T"])
    Ju, Jwu = dyn.unstable_jacobian(P, s0, T, warmup=float(cfg["warmup"]))
    L = dyn.arc_length(P, s0, T)
    res = {"J_u": Ju, "J_wu": Jwu, "T": T, "arc_length": L, "lyapunov": -math.log(Ju) / L,
           "convention": "T in flow time, rate per unit arc length"}
    run.json(res)
    return res


def cmd_pressure(cfg, run):
    src = _group(cfg) if cfg.get("group") else _profile(cfg)
    rep = dyn.pressure_estimate(src, float(cfg["s"]), float(cfg["epsilon"]), float(cfg["T"]))
    res = rep.to_json()
    run.json(res)
    return res


def _grid_opts(cfg):
    opts = {"r_max": float(cfg["r_max"]), "dr_fac": float(cfg["dr_fac"])}
    if cfg.get("absorb_width") is not None:
        opts["absorb_width"] = float(cfg["absorb_width"])
    return opts


def _beta(cfg):
    b = cfg.get("theta_beta")
    return None if b in (None, "none", 0, 0.0) else float(b)


def cmd_evolve(cfg, run):
    P = _profile(cfg)
    h = float(cfg["h"])
    chi = _chi(cfg.get("chi"))
    obs = {"norm": lambda d: evo.SpatialNorm(d, 2.0, None), "local": lambda d: evo.SpatialNorm(d, 2.0, chi)}
    u0, traj = evo.run_packet(P, h, cfg["placement"], _beta(cfg), r0=cfg.get("r0"), T=float(cfg["T"]),
                              grid_opts=_grid_opts(cfg), dt_fac=float(cfg["dt_fac"]), observers=obs)
    run.csv(["time", "norm", "local_norm", "absorbed"],
            zip(traj.times, traj.observations["norm"], traj.observations["local"], traj.absorbed))
    run.svg(line_plot([{"x": traj.times, "y": traj.observations["norm"], "label": "||u||"},
                       {"x": traj.times, "y": traj.observations["local"], "label": "||chi u||"}],
                      "evolution", "t", "norm"))
    res = {"h": h, "modes": int(u0.disc.modes.size), "n_r": int(u0.disc.grid.n_r),
           "snapshots": int(traj.times.size), "final_norm": traj.observations["norm"][-1],
           "absorbed": float(traj.absorbed[-1]), "stopped_early": traj.stopped_early,
           "baseline": P.label == "elliptic"}
    run.json(res)
    return res


def _scan_plot(res, title):
    h = np.array([r[0] for r in res.rows])
    y = np.array([r[1] for r in res.rows])
    return {"x": 1.0 / h, "y": y, "style": "scatter", "label": title}


def cmd_strichartz(cfg, run):
    P = _profile(cfg)
    hl = _floats(cfg["h_list"])
    res = evo.strichartz_scan(P, cfg["placement"], hl, float(cfg["p"]), float(cfg["q"]), _chi(cfg["chi"]),
                              _beta(cfg), _grid_opts(cfg), float(cfg["dt_fac"]))
    run.csv(["h", "norm", "p", "q", "window"], res.csv_rows())
    x = 1.0 / np.array(hl)
    y = np.array([r[1] for r in res.rows])
    c = float(np.exp(np.mean(np.log(y)) - res.slope * np.mean(np.log(1.0 / np.array([r[0] for r in res.rows])))))
    xx, yy = fit_overlay(x, res.slope, math.log(c))
    run.svg(line_plot([_scan_plot(res, "norm"), {"x": xx, "y": yy, "label": f"slope {res.slope:.3f}"}],
                      "Strichartz scan", "1/h", "norm", logx=True, logy=True))
    out = res.to_json()
    out["baseline"] = P.label == "elliptic"
    run.json(out)
    return out


def cmd_smoothing(cfg, run):
    P = _profile(cfg)
    hl = _floats(cfg["h_list"])
    on, off, ratio = evo.smoothing_contrast(P, hl, _chi(cfg["chi_on"]), _chi(cfg["chi_off"]), cfg["placement"],
                                            _beta(cfg), _grid_opts(cfg), float(cfg["dt_fac"]))
    run.csv(["h", "norm", "p", "q", "window"], on.csv_rows() + off.csv_rows())
    run.svg(line_plot([_scan_plot(on, "on waist"), _scan_plot(off, "off waist")],
                      "smoothing norms", "1/h", "norm", logx=True, logy=True))
    res = {"on": on.to_json(), "off": off.to_json(), "ratio": list(ratio),
           "ratio_monotone": bool(np.all(np.diff(ratio) > 0))}
    run.json(res)
    return res


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

GROUP_DEFAULTS = {"group": "cyclic", "dim": 2, "ell": 2.0, "ell1": 2.2, "ell2": 3.1, "sep": 3.5,
                  "cap": hyp.DEFAULT_CAP}
PROFILE_DEFAULTS = {"profile": "pure_cosh"}
EVO_DEFAULTS = {"placement": "on_waist", "r_max": 12.0, "absorb_width": None, "dr_fac": 0.5, "dt_fac": 0.35,
                "theta_beta": None}

COMMANDS = {
    "distance": (cmd_distance, {"dim": 2, "a": "0,1", "b": "0,2"}),
    "orbit": (cmd_orbit, dict(GROUP_DEFAULTS, R=10.0)),
    "poincare": (cmd_poincare, dict(GROUP_DEFAULTS, s=1.0, R=20.0, z=None, zp=None)),
    "delta": (cmd_delta, dict(GROUP_DEFAULTS, R_max=30.0)),
    "kernel": (cmd_kernel, {"dim": 3, "t": 1.0, "rho": 0.0}),
    "autokernel": (cmd_autokernel, dict(GROUP_DEFAULTS, t=1.0, R=20.0, z=None, zp=None)),
    "dispscan": (cmd_dispscan, dict(GROUP_DEFAULTS, ell=6.0, t_min=0.01, t_max=100.0, per_decade=10, R=20.0)),
    "admissible": (cmd_admissible, {"p": 4.0, "q": 4.0, "n": 1, "family": "euclidean_line"}),
    "profile": (cmd_profile, dict(PROFILE_DEFAULTS, span=8.0, points=801)),
    "geodesic": (cmd_geodesic, dict(PROFILE_DEFAULTS, r0=0.5, theta0=0.0, direction=0.5, rho0=None, omega0=None,
                                    T=10.0, dt=1e-2)),
    "escape": (cmd_escape, {"profile": "cosh_glue_euclidean", "samples": 1000, "R_escape": None, "T_max": 500.0,
                            "tube_eps": 1e-3, "include_waist": False}),
    "jacobian": (cmd_jacobian, dict(PROFILE_DEFAULTS, r0=0.0, theta0=0.0, direction=math.pi / 2, rho0=None,
                                    omega0=None, T=5.0, warmup=10.0)),
    "pressure": (cmd_pressure, {"profile": "pure_cosh", "group": None, "dim": 2, "ell": 2 * math.pi, "ell1": 2.2,
                                "ell2": 3.1, "sep": 3.5, "cap": hyp.DEFAULT_CAP, "s": 0.5, "T": 40.0,
                                "epsilon": 0.05}),
    "evolve": (cmd_evolve, dict(PROFILE_DEFAULTS, **EVO_DEFAULTS, h=1 / 16, T=1.0, chi=1.0, r0=None)),
    "strichartz": (cmd_strichartz, dict(PROFILE_DEFAULTS, **dict(EVO_DEFAULTS, theta_beta=9.0),
                                        h_list="0.125,0.0625,0.03125,0.015625", p=4.0, q=4.0, chi=1.0)),
    "smoothing": (cmd_smoothing, dict(PROFILE_DEFAULTS, **dict(EVO_DEFAULTS, r_max=6.0, absorb_width=1.5),
                                      h_list="0.0625,0.03125,0.015625,0.0078125,0.00390625",
                                      chi_on=0.25, chi_off="2,3")),
}

HELP = {
    "distance": "hyperbolic distance between two points",
    "orbit": "enumerate orbit elements up to displacement R",
    "poincare": "truncated Poincare series with tail bound",
    "delta": "critical exponent from orbit counting",
    "kernel": "free Schrodinger kernel on H^2 or H^3",
    "autokernel": "automorphic kernel on a quotient",
    "dispscan": "dispersive decay scan with power-law fits",
    "admissible": "Strichartz admissibility test",
    "profile": "build and validate a warp profile",
    "geodesic": "integrate a geodesic",
    "escape": "escape-time probe for an ensemble of geodesics",
    "jacobian": "unstable Jacobian along a geodesic",
    "pressure": "topological pressure estimate",
    "evolve": "evolve a coherent state",
    "strichartz": "Strichartz norm scan in h",
    "smoothing": "local smoothing norm scan in h",
}

INT_KEYS = {"dim", "cap", "per_decade", "n", "points", "samples", "seed"}


def _add_flags(sp, defaults):
    sp.add_argument("--config", help="JSON file with parameters; flags override it")
    sp.add_argument("--out", help="output directory (default: $TRAPWAVE_OUT or .)")
    sp.add_argument("--prefix", help="file stem for the artifacts")
    sp.add_argument("--plot", action="store_true", default=argparse.SUPPRESS, help="also write an SVG plot")
    sp.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    sp.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="cap internal parallelism")
    for key in defaults:
        names = ["--" + key.replace("_", "-")]
        if "_" in key:
            names.append("--" + key)
        if key == "include_waist":
            sp.add_argument(*names, dest=key, action="store_true", default=argparse.SUPPRESS)
            continue
        kind = int if key in INT_KEYS else str
        sp.add_argument(*names, dest=key, type=kind, default=argparse.SUPPRESS)


def build_parser():
    p = _Parser(prog="trapwave", description="Schrodinger propagators, geodesic dynamics and norm scans.")
    sub = p.add_subparsers(dest="subcommand", parser_class=_Parser)
    for name, (_, defaults) in COMMANDS.items():
        sp = sub.add_parser(name, help=HELP[name])
        _add_flags(sp, defaults)
    return p


def _coerce(cfg, defaults):
    out = {}
    for k, v in cfg.items():
        if isinstance(v, str) and k not in ("a", "b", "z", "zp", "group", "profile", "family", "placement",
                                            "h_list", "chi", "chi_on", "chi_off", "out", "prefix", "config",
                                            "subcommand", "theta_beta", "p", "q"):
            try:
                v = int(v) if k in INT_KEYS else float(v)
            except ValueError as exc:
                raise ContractViolation(f"--{k.replace('_', '-')} expects a number, got {v!r}") from exc
        out[k] = v
    return out


def run(argv=None):
    """Parse ``argv``, execute one subcommand and return ``(status, summary)``."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return 2, {"status": "usage_error", "error": "UsageError", "message": str(exc)}
    if not args.subcommand:
        return 2, {"status": "usage_error", "error": "UsageError", "message": "missing subcommand"}
    name = args.subcommand
    fn, defaults = COMMANDS[name]
    flags = {k: v for k, v in vars(args).items() if k != "subcommand"}
    cfg = dict(defaults)
    cfg.setdefault("seed", 0)
    try:
        if flags.get("config"):
            with open(flags["config"], encoding="utf-8") as fh:
                file_cfg = json.load(fh)
            if not isinstance(file_cfg, dict):
                raise ContractViolation("config file must hold a JSON object")
            cfg.update({k.replace("-", "_"): v for k, v in file_cfg.items()})
        cfg.update({k: v for k, v in flags.items() if v is not None})
        cfg = _coerce(cfg, defaults)
        if cfg.get("threads"):
            evo.set_threads(cfg["threads"])
        r = Run(cfg, name)
        result = fn(cfg, r)
    except (VALIDATION_ERRORS + (OSError, json.JSONDecodeError, KeyError, TypeError)) as exc:
        return 2, {"subcommand": name, "status": "validation_error", "error": type(exc).__name__,
                   "message": str(exc)}
    except (TrapwaveError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        return 3, {"subcommand": name, "status": "numerical_error", "error": type(exc).__name__,
                   "message": str(exc)}
    summary = {"subcommand": name, "status": "ok", "outputs": r.files}
    summary.update(result)
    return 0, summary


def main(argv=None):
    status, summary = run(argv)
    print(json_line(summary))
    return status


if __name__ == "__main__":
    sys.exit(main())
