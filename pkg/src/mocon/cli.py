"""Command-line interface: ``mocon {simulate,geometry,stability,reparam,catalog}``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
Outputs are CSV/JSON files under ``--out-dir`` named ``<prefix>.csv`` and
``<prefix>.json``; the JSON report embeds the resolved configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import catalog
from .controller import VibrationPlan, run_feedback, run_open_loop
from .dynamics import ControlSignal, ReducedState, integrate
from .errors import ConfigError, DimensionError, MoconError, ResonantPlan
from .geometry import classify_fitness, curvature_from_geodesics, geodesic_ivp
from .io import dumps, trajectory_to_csv, write_json
from .reparam import lift_mechanical, round_trip
from .stability import (LyapunovCandidate, VibrationTuple, effective_minimum_test,
                        effective_potential, kalman_rank, lyapunov_condition_iv_prime,
                        mechanical_rank_test, scalar_cone_selection, selection_linearization,
                        solve_w)

log = logging.getLogger("mocon")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

# option name -> default; shared by the parser, config files and sweeps
COMMON = {"system": None, "params": {}, "out_dir": ".", "prefix": None, "jobs": 1, "sweep": None}
DEFAULTS = {
    "simulate": {"control": "const", "q0": None, "p0": None, "u0": None, "t_start": 0.0,
                 "t_end": 10.0, "dt": 1e-3, "method": "rk4", "store_every": 1,
                 "exit_radius": None, "q_bar": None},
    "geometry": {"classify": False, "box": None, "samples": 256, "tol": 1e-8,
                 "curvature_limit": False, "geodesic": False, "q0": None, "u0": None,
                 "w": None, "v": None, "length": 1.0, "step": 1e-3, "seed": 0},
    "stability": {"target": None, "rank_test": False, "solve_w": False, "effective": False,
                  "linearize": False, "iv_prime": False, "w": None, "beta": "quad",
                  "half_quadratic": True, "tol": 1e-8, "rank_tol": 1e-10, "kappa": 1e-3,
                  "radius": 0.3, "samples": 64, "seed": 0},
    "reparam": {"control": "sin:amp=0.1,omega=5", "q0": None, "p0": None, "u0": None,
                "t_start": 0.0, "t_end": 2.0, "dt": 1e-4, "nodes": 4001},
    "catalog": {"show": None},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


# parsing helpers ------------------------------------------------------------------

def parse_vector(text) -> np.ndarray:
    """``"0.3,-0.05"`` -> array; numbers and lists pass through."""
    if text is None:
        return None
    if isinstance(text, (int, float)):
        return np.array([float(text)])
    if isinstance(text, (list, tuple)):
        return np.array([float(x) for x in text])
    try:
        return np.array([float(x) for x in str(text).replace(" ", "").split(",") if x != ""])
    except ValueError:
        raise ConfigError(f"cannot parse vector {text!r}") from None


def parse_tuple(text) -> np.ndarray:
    """Vectors separated by ``;``, e.g. ``"0,6"`` or ``"1,0;0,2"``."""
    if isinstance(text, (list, tuple)) and text and isinstance(text[0], (list, tuple)):
        return np.array(text, dtype=float)
    return np.array([parse_vector(part) for part in str(text).split(";")])


def parse_kv(text: str) -> dict:
    """``"w=0,6,omega=200"`` -> ``{"w": "0,6", "omega": "200"}``.

    Comma-separated tokens without ``=`` extend the previous value.
    """
    out, key = {}, None
    for tok in text.split(","):
        tok = tok.strip()
        if "=" in tok:
            key, val = tok.split("=", 1)
            key = key.strip()
            if key in out:
                raise ConfigError(f"duplicate key {key!r} in {text!r}")
            out[key] = val.strip()
        elif key is not None and tok:
            out[key] += "," + tok
        elif tok:
            raise ConfigError(f"cannot parse {text!r}")
    return out


def parse_control(text: str) -> dict:
    """Control mini-language: ``const | sin:w=..,omega=..[;...] | feedback:target=..``."""
    text = text.strip()
    if text == "const":
        return {"kind": "const"}
    kind, _, body = text.partition(":")
    if kind == "sin":
        terms = []
        for part in body.split(";"):
            kv = parse_kv(part)
            unknown = set(kv) - {"w", "amp", "omega", "phase"}
            if unknown or "omega" not in kv or ("w" in kv) == ("amp" in kv):
                raise ConfigError(f"sinusoid term {part!r} needs omega and exactly one of w, amp")
            omega = float(kv["omega"])
            w = parse_vector(kv["w"]) if "w" in kv else parse_vector(kv["amp"]) * omega / math.sqrt(2)
            terms.append({"w": w, "omega": omega, "phase": float(kv.get("phase", 0.0))})
        return {"kind": "sin", "terms": terms}
    if kind == "feedback":
        kv = parse_kv(body)
        unknown = set(kv) - {"target", "omega", "poles"}
        if unknown or "target" not in kv:
            raise ConfigError(f"feedback control needs target=..., got {body!r}")
        return {"kind": "feedback", "target": parse_vector(kv["target"]),
                "omega": float(kv["omega"]) if "omega" in kv else None,
                "poles": parse_vector(kv["poles"]) if "poles" in kv else None}
    raise ConfigError(f"unknown control {text!r}; use const, sin:... or feedback:...")


def parse_box(text: str, N: int, M: int):
    """``"q:0.1..3,u:-1..1"`` -> lower and upper corners (same range per block)."""
    lo, hi = {}, {}
    for part in text.split(","):
        name, _, rng = part.partition(":")
        a, sep, b = rng.partition("..")
        if name.strip() not in ("q", "u") or not sep:
            raise ConfigError(f"cannot parse box component {part!r}")
        lo[name.strip()], hi[name.strip()] = float(a), float(b)
    if set(lo) != {"q", "u"}:
        raise ConfigError("box needs both q and u ranges")
    return (np.r_[[lo["q"]] * N, [lo["u"]] * M], np.r_[[hi["q"]] * N, [hi["u"]] * M])


def parse_target(text, N: int, M: int):
    """``"q=0.3,-0.05[,u=0,0]"`` -> (q_bar, u_bar)."""
    if text is None:
        return np.zeros(N), np.zeros(M)
    kv = parse_kv(text)
    if set(kv) - {"q", "u"}:
        raise ConfigError(f"target accepts q and u, got {sorted(kv)}")
    q = parse_vector(kv["q"]) if "q" in kv else np.zeros(N)
    u = parse_vector(kv["u"]) if "u" in kv else np.zeros(M)
    if q.size != N or u.size != M:
        raise ConfigError(f"target must have {N} q and {M} u components")
    return q, u


def _vec(value, n: int, name: str) -> np.ndarray:
    v = np.zeros(n) if value is None else parse_vector(value)
    if v.size == 1 and n > 1:
        v = np.full(n, v[0])
    if v.size != n:
        raise ConfigError(f"{name} needs {n} components")
    return v


# configuration ------------------------------------------------------------------

def resolve(command: str, cli: dict, config_path) -> dict:
    """Merge defaults, a JSON config file and explicit command-line values.

    Config keys may name any option of the subcommand or a parameter of the
    chosen system; anything else is rejected.
    """
    cfg = {**COMMON, **DEFAULTS[command]}
    cfg["params"] = {}
    if config_path:
        try:
            data = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        system = cli.get("system") or data.get("system")
        allowed_params = set(catalog.parameters(system)) if system in catalog.names() else set()
        for key, value in data.items():
            k = key.replace("-", "_")
            if k == "params":
                if not isinstance(value, dict):
                    raise ConfigError("params must be an object")
                cfg["params"].update(value)
            elif k in cfg:
                cfg[k] = value
            elif key in allowed_params:
                cfg["params"][key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
    for key, value in cli.items():
        if key == "params":
            cfg["params"].update(value)
        elif value is not None:
            cfg[key] = value
    cfg["command"] = command
    if command != "catalog" and not cfg["system"]:
        raise ConfigError("--system is required")
    if cfg["system"] is not None and cfg["system"] not in catalog.names():
        raise ConfigError(f"unknown system {cfg['system']!r}; choose from {catalog.names()}")
    if cfg["prefix"] is None:
        cfg["prefix"] = command
    return cfg


def _param_arg(text: str):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter {key} must be numeric") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mocon", description="Mechanical systems driven by moving constraints.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--system", default=None, help="catalog system name")
        p.add_argument("--param", action="append", type=_param_arg, default=[], metavar="KEY=VALUE",
                       help="system parameter, e.g. g=9.8 (repeatable)")
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out-dir", default=None, help="output directory (default: .)")
        p.add_argument("--prefix", default=None, help="output file stem")
        p.add_argument("--sweep", default=None, metavar="KEY=V1,V2,...",
                       help="run once per value of an option")
        p.add_argument("--jobs", type=int, default=None, help="parallel workers for --sweep")

    p = sub.add_parser("simulate", help="integrate the reduced equations")
    common(p)
    p.add_argument("--control", default=None, help="const | sin:w=..,omega=..[;...] | feedback:target=..")
    p.add_argument("--q0", default=None)
    p.add_argument("--p0", default=None)
    p.add_argument("--u0", default=None)
    p.add_argument("--t-start", type=float, default=None)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--method", choices=["rk4", "rkf45"], default=None)
    p.add_argument("--store-every", type=int, default=None)
    p.add_argument("--q-bar", default=None, help="reference configuration for metrics (default: origin)")
    p.add_argument("--exit-radius", type=float, default=None,
                   help="stop once |q - q_bar| exceeds this radius")

    p = sub.add_parser("geometry", help="curvature and fitness of the foliation")
    common(p)
    p.add_argument("--classify", action="store_true", default=None)
    p.add_argument("--box", default=None, help='e.g. "q:0.1..3,u:-1..1"')
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--curvature-limit", action="store_true", default=None)
    p.add_argument("--geodesic", action="store_true", default=None)
    p.add_argument("--q0", default=None)
    p.add_argument("--u0", default=None)
    p.add_argument("--v", default=None, help="initial q-velocity for --geodesic")
    p.add_argument("--w", default=None, help="transverse direction")
    p.add_argument("--length", type=float, default=None)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("stability", help="stabilizability tests")
    common(p)
    p.add_argument("--target", default=None, help='e.g. "q=0.3,-0.05"')
    p.add_argument("--rank-test", action="store_true", default=None)
    p.add_argument("--solve-w", action="store_true", default=None)
    p.add_argument("--effective", action="store_true", default=None)
    p.add_argument("--linearize", action="store_true", default=None)
    p.add_argument("--iv-prime", action="store_true", default=None)
    p.add_argument("--w", default=None, help='vibration tuple, vectors separated by ";"')
    p.add_argument("--beta", choices=["quad", "zero"], default=None)
    p.add_argument("--half-quadratic", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--rank-tol", type=float, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("reparam", help="graph reparametrization round trip")
    common(p)
    p.add_argument("--control", default=None, help="sin:amp=..,omega=.. or sin:w=..,omega=..")
    p.add_argument("--q0", default=None)
    p.add_argument("--p0", default=None)
    p.add_argument("--u0", default=None)
    p.add_argument("--t-start", type=float, default=None)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--nodes", type=int, default=None)

    p = sub.add_parser("catalog", help="list catalog systems")
    p.add_argument("--show", default=None, help="print one entry in detail")
    p.add_argument("--config", default=None)
    return parser


# commands ------------------------------------------------------------------------

def _entry(cfg):
    return catalog.build(cfg["system"], **cfg["params"])


def _outputs(cfg):
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out / f"{cfg['prefix']}.csv", out / f"{cfg['prefix']}.json"


def _report(cfg, body: dict, csv_path=None) -> dict:
    report = {"config": cfg, **body}
    if csv_path is not None:
        report["trajectory_file"] = csv_path.name
    return report


def cmd_simulate(cfg: dict) -> dict:
    e = _entry(cfg)
    N, M = e.model.dim_q, e.model.dim_u
    q0, p0 = _vec(cfg["q0"], N, "q0"), _vec(cfg["p0"], N, "p0")
    u0 = _vec(cfg["u0"], M, "u0")
    q_bar = _vec(cfg["q_bar"], N, "q_bar")
    ctrl = parse_control(cfg["control"])
    t0, t1 = float(cfg["t_start"]), float(cfg["t_end"])
    csv_path, json_path = _outputs(cfg)
    initial = ReducedState.make(q0, p0, u0)
    if ctrl["kind"] == "feedback":
        if ctrl["target"].size != N:
            raise ConfigError(f"feedback target needs {N} components")
        res = run_feedback(e.model, e.force, ctrl["target"], u0, initial, t1 - t0,
                           poles=ctrl["poles"], omega=ctrl["omega"], kernel=e.kernel)
        traj, metrics = res.trajectory, res.metrics
    elif ctrl["kind"] == "sin":
        W = VibrationTuple([t["w"] for t in ctrl["terms"]])
        plan = VibrationPlan(W, [t["omega"] for t in ctrl["terms"]], [t["phase"] for t in ctrl["terms"]])
        if t0 != 0.0:
            raise ConfigError("sinusoid controls start at t = 0")
        traj, metrics = run_open_loop(e.model, e.force, plan, initial, t1, float(cfg["dt"]), q_bar=q_bar,
                                      exit_radius=cfg["exit_radius"], kernel=e.kernel,
                                      store_every=int(cfg["store_every"]))
    else:
        signal = ControlSignal.constant(u0, t0, t1)
        stop = None
        if cfg["exit_radius"] is not None:
            def stop(t, q, p):
                return np.abs(q - q_bar).max() > cfg["exit_radius"]
        traj = integrate(e.model, e.force, signal, initial, dt=float(cfg["dt"]), method=cfg["method"],
                         store_every=int(cfg["store_every"]), stop_when=stop, kernel=e.kernel)
        metrics = {"sup_dq": float(np.abs(traj.q - q_bar).max()),
                   "sup_p": float(np.abs(traj.p).max()),
                   "sup_drift": float(np.abs(traj.q - q0).max()),
                   "final_q": traj.q[-1], "final_p": traj.p[-1]}
    trajectory_to_csv(traj, csv_path)
    report = _report(cfg, {"metrics": metrics, "integrator": traj.meta}, csv_path)
    write_json(json_path, report)
    return report


def cmd_geometry(cfg: dict) -> dict:
    e = _entry(cfg)
    N, M = e.model.dim_q, e.model.dim_u
    if not (cfg["classify"] or cfg["curvature_limit"] or cfg["geodesic"]):
        raise ConfigError("choose --classify, --curvature-limit or --geodesic")
    csv_path, json_path = _outputs(cfg)
    body, csv_written = {}, None
    if cfg["classify"]:
        if cfg["box"] is None:
            raise ConfigError("--classify needs --box")
        lo, hi = parse_box(cfg["box"], N, M)
        verdict = classify_fitness(e.model, lo, hi, n_samples=int(cfg["samples"]),
                                   tol=float(cfg["tol"]), seed=int(cfg["seed"]))
        body["fitness"] = verdict.to_dict()
    q0, u0 = _vec(cfg["q0"], N, "q0"), _vec(cfg["u0"], M, "u0")
    if cfg["curvature_limit"]:
        w = _vec(cfg["w"], M, "w")
        body["curvature_limit"] = curvature_from_geodesics(e.model, q0, u0, w).to_dict()
    if cfg["geodesic"]:
        arc = geodesic_ivp(e.model, q0, u0, _vec(cfg["v"], N, "v"), _vec(cfg["w"], M, "w"),
                           float(cfg["length"]), float(cfg["step"]))
        arc.to_csv(csv_path)
        csv_written = csv_path
        body["geodesic"] = {"end": arc.end, "hamiltonian_drift": arc.hamiltonian_drift()}
    report = _report(cfg, body, csv_written)
    write_json(json_path, report)
    return report


def _beta(kind: str, u_bar):
    if kind == "quad":
        return (lambda u: float((u - u_bar) @ (u - u_bar))), (lambda u: 2.0 * (u - u_bar))
    return (lambda u: 0.0), (lambda u: np.zeros_like(u))


def cmd_stability(cfg: dict) -> dict:
    e = _entry(cfg)
    N, M = e.model.dim_q, e.model.dim_u
    q_bar, u_bar = parse_target(cfg["target"], N, M)
    if not (cfg["rank_test"] or cfg["effective"] or cfg["linearize"] or cfg["iv_prime"]):
        raise ConfigError("choose --rank-test, --effective, --linearize or --iv-prime")
    W = None if cfg["w"] is None else VibrationTuple(parse_tuple(cfg["w"]))
    if W is not None and W.dim_u != M:
        raise ConfigError(f"vibration vectors need {M} components")
    _, json_path = _outputs(cfg)
    body = {}
    if cfg["rank_test"]:
        if cfg["solve_w"]:
            W_rank = solve_w(e.model, e.force, q_bar, u_bar, k=1 if W is None else W.k,
                             half_quadratic=bool(cfg["half_quadratic"]), tol=float(cfg["tol"]),
                             rank_tol=float(cfg["rank_tol"]))
            if W_rank is None:
                body["rank_test"] = {"verdict": "fail", "notes": ["no full-rank solution found"]}
        else:
            if W is None:
                raise ConfigError("--rank-test needs --w or --solve-w")
            W_rank = W
        if W_rank is not None:
            body["rank_test"] = mechanical_rank_test(
                e.model, e.force, q_bar, u_bar, W_rank, tol=float(cfg["tol"]),
                rank_tol=float(cfg["rank_tol"]), half_quadratic=bool(cfg["half_quadratic"])).to_dict()
    if cfg["effective"]:
        if W is None:
            raise ConfigError("--effective needs --w")
        beta, beta_grad = _beta(cfg["beta"], u_bar)
        body["effective"] = effective_minimum_test(e.model, e.force.potential, W, beta, q_bar, u_bar,
                                                   beta_grad=beta_grad).to_dict()
    if cfg["linearize"]:
        sel = scalar_cone_selection(e.model, e.force, u_bar, q_bar[0])
        xi = sel.xi_bar(q_bar[0])
        A, B = selection_linearization(sel.drift, sel.selection, np.r_[q_bar, 0.0], xi,
                                       cone=sel.cone if sel.sign else None)
        rank, sv = kalman_rank(A, B, float(cfg["rank_tol"]))
        body["linearization"] = {"A": A, "B": B, "xi_bar": xi, "cone_sign": sel.sign, "rank": rank,
                                 "singular_values": sv, "verdict": "pass" if rank == 2 * N else "fail"}
    if cfg["iv_prime"]:
        if W is None:
            raise ConfigError("--iv-prime needs --w")
        body["iv_prime"] = _iv_prime(e, W, q_bar, u_bar, cfg)
    report = _report(cfg, body)
    write_json(json_path, report)
    return report


def _iv_prime(e, W, q_bar, u_bar, cfg) -> dict:
    """Time-positive descent condition for ``V = 1/2 p A p + U_W + |u - u_bar|^2`` (shifted to vanish at the target)."""
    from .metric import reduced_blocks
    N = e.model.dim_q
    UW = effective_potential(e.model, e.force.potential, W)
    c = UW(q_bar, u_bar)

    def V(x):
        q, p, u = x[:N], x[N:2 * N], x[2 * N:]
        A = reduced_blocks(e.model, q, u).A
        return 0.5 * p @ A @ p + UW(q, u) - c + float((u - u_bar) @ (u - u_bar))

    center = np.concatenate([q_bar, np.zeros(N), u_bar])
    cand = LyapunovCandidate(V, center, float(cfg["radius"]))
    rng = np.random.default_rng(int(cfg["seed"]))
    pts = center + float(cfg["radius"]) * rng.uniform(-1, 1, (int(cfg["samples"]), center.size))
    res = lyapunov_condition_iv_prime(lift_mechanical(e.model, e.force, e.kernel), cand, pts,
                                      kappa=float(cfg["kappa"]))
    naive = lyapunov_condition_iv_prime(lift_mechanical(e.model, e.force, e.kernel), cand, pts,
                                        kappa=0.0, check_candidate=False)
    return {**res.to_dict(), "naive_verdict": naive.verdict}


def cmd_reparam(cfg: dict) -> dict:
    e = _entry(cfg)
    N, M = e.model.dim_q, e.model.dim_u
    ctrl = parse_control(cfg["control"])
    if ctrl["kind"] != "sin":
        raise ConfigError("reparam needs a sinusoid control")
    u0 = _vec(cfg["u0"], M, "u0")
    terms = ctrl["terms"]
    amps = np.array([math.sqrt(2) * t["w"] / t["omega"] for t in terms])
    signal = ControlSignal.sinusoid(u0, amps, [t["omega"] for t in terms], [t["phase"] for t in terms],
                                    float(cfg["t_start"]), float(cfg["t_end"]))
    # the signal need not start at u0 when phases are nonzero
    rt = round_trip(e.model, e.force, signal, _vec(cfg["q0"], N, "q0"), _vec(cfg["p0"], N, "p0"),
                    float(cfg["dt"]), kernel=e.kernel, n_nodes=int(cfg["nodes"]))
    csv_path, json_path = _outputs(cfg)
    rt.graph_trajectory.to_csv(csv_path)
    report = _report(cfg, {"round_trip": rt.to_dict()}, csv_path)
    write_json(json_path, report)
    return report


def cmd_catalog(cfg: dict) -> dict:
    if cfg.get("show"):
        if cfg["show"] not in catalog.names():
            raise ConfigError(f"unknown system {cfg['show']!r}")
        e = catalog.build(cfg["show"])
        return {"name": e.name, "description": e.description, "params": e.params,
                "dim_q": e.model.dim_q, "dim_u": e.model.dim_u,
                "closed_forms": sorted(e.closed_forms), "targets": e.targets}
    return {"systems": [{"name": n, "description": catalog.build(n).description,
                         "params": catalog.build(n).params} for n in catalog.names()]}


COMMANDS = {"simulate": cmd_simulate, "geometry": cmd_geometry, "stability": cmd_stability,
            "reparam": cmd_reparam, "catalog": cmd_catalog}


def _run_one(cfg: dict) -> dict:
    return COMMANDS[cfg["command"]](cfg)


def _expand_sweep(cfg: dict) -> list:
    if not cfg.get("sweep"):
        return [cfg]
    key, sep, values = cfg["sweep"].partition("=")
    key = key.replace("-", "_")
    if not sep or (key not in cfg and key not in catalog.parameters(cfg["system"])):
        raise ConfigError(f"cannot sweep {cfg['sweep']!r}")
    runs = []
    for k, v in enumerate(values.split(",")):
        c = json.loads(json.dumps(cfg))
        if key in cfg and key != "params":
            c[key] = type(cfg[key])(v) if isinstance(cfg[key], (int, float)) and cfg[key] is not None \
                and not isinstance(cfg[key], bool) else v
        else:
            c["params"][key] = float(v)
        c["prefix"] = f"{cfg['prefix']}-{k:03d}"
        c["sweep"] = None
        runs.append(c)
    return runs


def _configure_logging() -> None:
    level = os.environ.get("MOCON_LOG", "error").lower()
    if level not in LOG_LEVELS:
        raise ConfigError(f"MOCON_LOG must be one of {sorted(LOG_LEVELS)}")
    logging.basicConfig(level=LOG_LEVELS[level], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        _configure_logging()
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise ConfigError("a subcommand is required")
        cli = {k: v for k, v in vars(args).items() if k not in ("command", "config", "param")}
        cli["params"] = dict(getattr(args, "param", []) or [])
        cfg = resolve(args.command, cli, args.config)
        runs = _expand_sweep(cfg)
        if len(runs) > 1 and int(cfg["jobs"]) > 1:
            with ProcessPoolExecutor(max_workers=int(cfg["jobs"])) as pool:
                reports = list(pool.map(_run_one, runs))
        else:
            reports = [_run_one(c) for c in runs]
        print(dumps(reports[0] if len(reports) == 1 else reports))
        return 0
    except (ConfigError, ResonantPlan, DimensionError, ValueError) as exc:
        print(f"mocon: error: {exc}", file=sys.stderr)
        return 1
    except MoconError as exc:
        print(f"mocon: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"mocon: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
