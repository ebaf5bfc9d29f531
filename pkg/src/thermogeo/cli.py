"""Command-line front end.

Every command writes ``<out>.json`` (summary, resolved configuration and
library version) and, where it produces a table, ``<out>.csv``. Exit codes:
0 success, 1 failed self-test, 2 invalid input, 3 solver did not converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, analytic
from .analysis import (
    default_n_grid,
    fit_power_law,
    minimal_dissipation,
    pyramid_series,
    ScalingSeries,
)
from .geometry import ShootingError, shoot_geodesic
from .models import FullControlModel, PyramidSpec, model_from_spec
from .steps import pyramid_bound, simulate_step_plan, star_erasure_plan, star_thermal_chain

log = logging.getLogger("thermogeo")

EXIT_OK, EXIT_SELFTEST, EXIT_INVALID, EXIT_NOCONV = 0, 1, 2, 3
THREADS_ENV = "THERMOGEO_THREADS"


class InvalidConfig(ValueError):
    pass


# --- formatting ---------------------------------------------------------------------------


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_clean(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def parse_int_list(text) -> list[int]:
    """``"5,10,20"`` or a range ``"2..6"``."""
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    text = str(text).strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",") if v.strip()]


def parse_float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


# --- argument parsing -------------------------------------------------------------------------


def _common(p):
    p.add_argument("--config", help="JSON file whose keys override the flags")
    p.add_argument("--out", help="output prefix (default thermogeo_<command>)")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thermogeo", description="Minimal-dissipation protocols for spin erasure.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geodesic", help="optimal protocol for one model")
    _common(p)
    p.add_argument("--model", required=True, choices=["all_to_all", "chain", "qubit", "local", "full_control"])
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--eps-final", type=float, default=5.0)
    p.add_argument("--steps", type=int, default=4000)
    p.add_argument("--form", choices=["bulk", "exact"], default="bulk", help="chain partition function")

    p = sub.add_parser("sweep", help="minimal dissipation versus N, with a power-law fit")
    _common(p)
    p.add_argument("--model", required=True, choices=["local", "full_control", "all_to_all", "chain", "star", "pyramid"])
    p.add_argument("--N", default=None, help="comma list or lo..hi (default: 19 log-spaced values in [5, 150])")
    p.add_argument("--eps-final", type=float, default=5.0)
    p.add_argument("--layers", default="2..6", help="pyramid layer counts")
    p.add_argument("--D", type=int, default=3)
    p.add_argument("--aperture", type=int, default=2)
    p.add_argument("--base", type=int, default=1)

    p = sub.add_parser("bounds", help="closed-form erasure bounds")
    _common(p)
    p.add_argument("--N", default="1..20")
    p.add_argument("--layers", default="2..10")
    p.add_argument("--D", type=int, default=3)
    p.add_argument("--aperture", type=int, default=2)
    p.add_argument("--base", type=int, default=1)

    p = sub.add_parser("protocol", help="tabulate closed-form protocols")
    _common(p)
    p.add_argument("--kind", choices=["full_control", "nbody", "star"], default="full_control")
    p.add_argument("--N", type=int, default=2)
    p.add_argument("--grid", type=int, default=201)
    p.add_argument("--exact", action="store_true", help="nbody: use the finite-N great-circle angle")

    p = sub.add_parser("fit", help="power-law fit of an existing sweep CSV")
    _common(p)
    p.add_argument("--input", required=True)

    p = sub.add_parser("decompose", help="interaction orders of erasure protocols")
    _common(p)
    p.add_argument("--N", type=int, default=6)
    p.add_argument("--times", default="0.5", help="comma list of t/tau in (0, 1)")
    p.add_argument("--source", choices=["erasure", "nbody", "local"], default="erasure")

    p = sub.add_parser("selftest", help="run the numbered checks")
    _common(p)
    p.add_argument("--full", action="store_true", help="include the all-to-all N sweep")
    p.add_argument("--only", default=None, help="comma list of check numbers")
    return parser


NON_CONFIG = {"config", "command", "verbose"}


def resolve_config(parser, args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in NON_CONFIG}
    if args.config:
        try:
            with open(args.config) as fh:
                extra = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"cannot read config: {exc}") from exc
        if not isinstance(extra, dict):
            raise InvalidConfig("config file must hold a JSON object")
        for key, val in extra.items():
            norm = key.replace("-", "_")
            if norm not in cfg:
                raise InvalidConfig(f"unknown config key {key!r}")
            cfg[norm] = val
    if cfg.get("out") is None:
        cfg["out"] = f"thermogeo_{args.command}"
    if not (cfg["tau"] > 0 and cfg["beta"] > 0):
        raise InvalidConfig("tau and beta must be positive")
    return cfg


def _envelope(command, cfg, **body):
    return {"command": command, "version": __version__, "config": cfg, **body}


# --- commands -------------------------------------------------------------------------------


def cmd_geodesic(cfg) -> int:
    kind = cfg["model"]
    n = cfg.get("N")
    if kind in ("all_to_all", "chain", "local", "full_control") and n is None:
        raise InvalidConfig(f"--N is required for {kind}")
    if kind == "full_control":
        return _full_control_geodesic(cfg)
    spec = {"model": kind} if kind == "qubit" else {"model": kind, "N": n}
    if kind == "chain":
        spec["form"] = cfg["form"]
    model = model_from_spec(spec)
    try:
        sol = shoot_geodesic(model, eps_final=cfg["eps_final"], beta=cfg["beta"], tau=cfg["tau"], steps=cfg["steps"])
    except ShootingError as exc:
        write_json(cfg["out"] + ".json", _envelope("geodesic", cfg, error=str(exc), diagnostics=exc.diagnostics))
        print(json.dumps({"error": str(exc)}))
        return EXIT_NOCONV
    names = list(model.param_names)
    rows = (
        [t, *pt, v]
        for t, pt, v in zip(sol.trajectory.times, sol.trajectory.points, sol.speed_profile)
    )
    write_csv(cfg["out"] + ".csv", ["t", *names, "ds_dt"], rows)
    summary = {
        **sol.report.as_dict(),
        "converged": sol.converged,
        "shooting_ratio": sol.shooting_ratio,
        "model": model.describe(),
        "diagnostics": {k: v for k, v in sol.diagnostics.items() if not k.startswith("scan_")},
    }
    write_json(cfg["out"] + ".json", _envelope("geodesic", cfg, result=summary))
    print(json.dumps(_clean({k: summary[k] for k in ("length", "tau_beta_w_diss", "converged")})))
    return EXIT_OK if sol.converged else EXIT_NOCONV


def _full_control_geodesic(cfg) -> int:
    n = int(cfg["N"])
    if n > 16:
        raise InvalidConfig("full-control erasure is tabulated per configuration; N must be <= 16")
    size = 2**n
    p = np.full(size, 1.0 / size)
    q = np.zeros(size)
    q[0] = 1.0
    tau = cfg["tau"]
    # the erased endpoint is pure: tabulate up to just before tau
    times = np.linspace(0.0, tau * (1 - 1e-6), cfg["steps"] + 1)
    geo = analytic.HellingerGeodesic(p, q, tau)
    energies = geo.energies(times, cfg["beta"])
    # by symmetry every excited configuration has the same energy
    gap = energies[:, 1]
    speed = np.full(times.size, geo.length / tau)
    write_csv(cfg["out"] + ".csv", ["t", "gamma", "ds_dt"], zip(times, gap, speed))
    result = {
        "length": geo.length,
        "w_diss": geo.length**2 / (cfg["beta"] * tau),
        "tau_beta_w_diss": geo.length**2,
        "landauer_reference": n * math.log(2) / cfg["beta"],
        "converged": True,
        "shooting_ratio": None,
    }
    write_json(cfg["out"] + ".json", _envelope("geodesic", cfg, result=result))
    print(json.dumps(_clean({k: result[k] for k in ("length", "tau_beta_w_diss", "converged")})))
    return EXIT_OK


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise InvalidConfig(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc


def _sweep_point(args):
    family, n, eps, tau, beta = args
    return minimal_dissipation(family, n, eps, tau, beta)


def cmd_sweep(cfg) -> int:
    family = cfg["model"]
    if family == "pyramid":
        series = pyramid_series(parse_int_list(cfg["layers"]), cfg["aperture"], cfg["base"], cfg["D"])
    else:
        n_list = default_n_grid() if cfg.get("N") is None else sorted(parse_int_list(cfg["N"]))
        if not n_list or min(n_list) < 1:
            raise InvalidConfig("N values must be positive")
        if family in ("all_to_all", "star") and min(n_list) < 2:
            raise InvalidConfig(f"{family} needs N >= 2")
        if family == "chain" and min(n_list) < 3:
            raise InvalidConfig("chain needs N >= 3")
        if cfg["eps_final"] <= 0:
            raise InvalidConfig("eps_final must be positive")
        jobs = [(family, n, cfg["eps_final"], cfg["tau"], cfg["beta"]) for n in n_list]
        workers = _threads()
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                points = list(pool.map(_sweep_point, jobs))
        else:
            points = [_sweep_point(j) for j in jobs]
        series = ScalingSeries(family, cfg["eps_final"], points, cfg["tau"], cfg["beta"])

    rows = []
    for pt in series.points:
        n = pt.n
        local = analytic.local_erasure_tbw(n)
        floor = analytic.global_erasure_tbw(n) if n <= 1000 else math.pi**2
        rows.append([n, pt.tau_beta_w, pt.method, pt.converged, local, floor])
    write_csv(
        cfg["out"] + ".csv",
        ["N", "tau_w_diss", "method", "converged", "local_ceiling", "global_floor"],
        rows,
    )
    fit = None
    fit_error = None
    try:
        fit = fit_power_law(series).as_dict()
    except ValueError as exc:
        fit_error = str(exc)
    payload = _envelope(
        "sweep",
        cfg,
        fit=fit,
        fit_error=fit_error,
        points=[{"N": p.n, "tau_w_diss": p.tau_beta_w, "method": p.method, "converged": p.converged, "diagnostics": p.diagnostics} for p in series.points],
    )
    write_json(cfg["out"] + ".json", payload)
    print(json.dumps(_clean({"fit": fit, "all_converged": series.all_converged})))
    return EXIT_OK if series.all_converged else EXIT_NOCONV


def cmd_bounds(cfg) -> int:
    ns = parse_int_list(cfg["N"])
    if not ns or min(ns) < 1:
        raise InvalidConfig("N values must be positive")
    rows = [[n, analytic.local_erasure_tbw(n), analytic.global_erasure_tbw(n), 9 * math.pi**2 / 4, 4 * math.pi**2] for n in ns]
    write_csv(cfg["out"] + ".csv", ["N", "local_tbw", "full_control_tbw", "star_plan_tbw", "star_step_bound_tbw"], rows)
    pyr = [pyramid_bound(PyramidSpec(m, cfg["aperture"], cfg["base"], cfg["D"]), cfg["tau"], cfg["beta"]).as_dict() for m in parse_int_list(cfg["layers"])]
    write_json(cfg["out"] + ".json", _envelope("bounds", cfg, spins=[dict(zip(["N", "local_tbw", "full_control_tbw"], r[:3])) for r in rows], pyramid=pyr))
    print(json.dumps({"rows": len(rows), "pyramid_rows": len(pyr)}))
    return EXIT_OK


def cmd_protocol(cfg) -> int:
    n, tau, grid = cfg["N"], cfg["tau"], cfg["grid"]
    if n < 1 or grid < 2:
        raise InvalidConfig("need N >= 1 and grid >= 2")
    if cfg["kind"] == "nbody":
        times = np.linspace(0.0, tau * (1 - 1e-6), grid)
        gam = analytic.nbody_gamma(times, tau, n, exact=cfg["exact"])
        write_csv(cfg["out"] + ".csv", ["t", "gamma"], zip(times, gam))
        result = {"N": n, "gamma_mid": analytic.nbody_gamma(0.5 * tau, tau, n, exact=cfg["exact"])}
    elif cfg["kind"] == "star":
        if n < 2 or n > 15:
            raise InvalidConfig("star protocol tabulation needs 2 <= N <= 15")
        plan = star_erasure_plan(star_thermal_chain(n), n)
        sim = simulate_step_plan(plan, grid=grid, tau=tau)
        # report the centre marginal and the all-up probability along the plan
        centre_up = sim.joints[:, 0, :].sum(axis=1)
        all_up = sim.joints[:, 0, 0]
        write_csv(cfg["out"] + ".csv", ["t", "segment", "p_centre_up", "p_all_up"], zip(sim.times, sim.segment, centre_up, all_up))
        result = {"N": n, "segments": plan.table(), "measured_length": sim.measured_length, "tau_beta_w": sim.measured_length**2}
    else:
        if n > 12:
            raise InvalidConfig("full-control tabulation needs N <= 12")
        mult = [math.comb(n, k) for k in range(n + 1)]
        p = np.array(mult, float) / 2**n
        q = np.zeros(n + 1)
        q[0] = 1.0
        times = np.linspace(0.0, tau * (1 - 1e-6), grid)
        geo = analytic.HellingerGeodesic(p, q, tau, mult)
        states = geo.states(times)
        energies = geo.energies(times, cfg["beta"])
        header = ["t", "u"] + [f"p{k}" for k in range(n + 1)] + [f"E{k}" for k in range(n + 1)]
        rows = [[t, geo.u(t), *s, *e] for t, s, e in zip(times, states, energies)]
        write_csv(cfg["out"] + ".csv", header, rows)
        result = {"N": n, "length": geo.length, "tau_beta_w": geo.length**2}
    write_json(cfg["out"] + ".json", _envelope("protocol", cfg, result=result))
    print(json.dumps(_clean(result)))
    return EXIT_OK


def cmd_fit(cfg) -> int:
    try:
        with open(cfg["input"], newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InvalidConfig(f"cannot read {cfg['input']}: {exc}") from exc
    if not rows or "N" not in rows[0] or "tau_w_diss" not in rows[0]:
        raise InvalidConfig("input CSV needs N and tau_w_diss columns")
    keep = [r for r in rows if r.get("converged", "1") in ("1", "True", "true")]
    n = [float(r["N"]) for r in keep]
    w = [float(r["tau_w_diss"]) for r in keep]
    fit = fit_power_law(n, w).as_dict()
    write_json(cfg["out"] + ".json", _envelope("fit", cfg, fit=fit))
    print(json.dumps(_clean(fit)))
    return EXIT_OK


def cmd_decompose(cfg) -> int:
    n = cfg["N"]
    if n < 1 or n > 12:
        raise InvalidConfig("decompose needs 1 <= N <= 12")
    times = parse_float_list(cfg["times"])
    if any(not 0 < t < 1 for t in times):
        raise InvalidConfig("times are fractions of tau strictly inside (0, 1)")
    snaps = []
    for frac in times:
        t = frac * cfg["tau"]
        if cfg["source"] == "erasure":
            energies = analytic.erasure_energy_table(t, cfg["tau"], n, cfg["beta"])
        elif cfg["source"] == "nbody":
            energies = analytic.nbody_energies(analytic.nbody_gamma(t, cfg["tau"], n), n)
        else:
            # independent spins: each excitation costs the same single-spin field
            gap = 2 * math.log(math.tan(math.pi * (frac + 1) / 4)) / cfg["beta"]
            energies = gap * analytic.popcount(np.arange(2**n)).astype(float)
        dec = analytic.interaction_decompose(energies)
        snaps.append({"t": t, "max_abs_coupling_by_order": dec.max_by_order()})
    write_json(cfg["out"] + ".json", _envelope("decompose", cfg, snapshots=snaps))
    print(json.dumps(_clean(snaps)))
    return EXIT_OK


def cmd_selftest(cfg) -> int:
    from .selftest import run_all

    only = None if cfg.get("only") is None else parse_int_list(cfg["only"])
    results = run_all(full=cfg["full"], only=only)
    for r in results:
        print(r.line())
    write_json(cfg["out"] + ".json", _envelope("selftest", cfg, checks=[r.as_dict() for r in results]))
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST


COMMANDS = {
    "geodesic": cmd_geodesic,
    "sweep": cmd_sweep,
    "bounds": cmd_bounds,
    "protocol": cmd_protocol,
    "fit": cmd_fit,
    "decompose": cmd_decompose,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(parser, args)
        return COMMANDS[args.command](cfg)
    except (InvalidConfig, ValueError) as exc:
        print(json.dumps({"error": str(exc)}))
        return EXIT_INVALID
    except ShootingError as exc:
        print(json.dumps({"error": str(exc)}))
        return EXIT_NOCONV


if __name__ == "__main__":
    sys.exit(main())
