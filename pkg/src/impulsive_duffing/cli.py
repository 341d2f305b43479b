"""Command-line experiment runner.

Every subcommand loads a scenario, runs one experiment, and writes
deterministic CSV/JSON outputs plus a MANIFEST.json naming the scenario hash,
package versions, and tolerances.  Exit codes: 0 success, 2 scenario
validation failure, 3 numerical failure (including partial outputs), 4 I/O
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .actionangle import (NumericsError, from_action_angle,
                          quarter_period_integral, to_action_angle)
from .diagnostics import (SweepReport, boundedness_sweep, detect_circles,
                          twist_profile)
from .duffing import lacunary_signal
from .impulsive import solve_ivp
from .poincare import Escaped
from .scenario import (DUFFING, Scenario, ScenarioError, build_chart, build_map,
                       build_system, load_scenario, shipped_scenarios)
from .smoothing import smoothing_error_sup

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_OUT_ENV = "IMPULSIVE_DUFFING_OUT"


class _Run:
    """Collects output files and writes the MANIFEST at the end."""

    def __init__(self, scenario: Scenario, out_dir: Path, tolerances: dict):
        self.scenario = scenario
        self.out_dir = out_dir
        self.tolerances = tolerances
        self.outputs: List[dict] = []
        self.notes: List[str] = []
        self.complete = True
        out_dir.mkdir(parents=True, exist_ok=True)

    def write_csv(self, name: str, header, rows) -> Path:
        path = self.out_dir / name
        count = 0
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
                count += 1
        self.outputs.append({"file": name, "rows": count})
        return path

    def write_json(self, name: str, payload) -> Path:
        path = self.out_dir / name
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.outputs.append({"file": name, "rows": None})
        return path

    def finish(self) -> None:
        manifest = {
            "scenario": self.scenario.name,
            "scenario_hash": self.scenario.source_hash,
            "package_version": __version__,
            "numpy_version": np.__version__,
            "tolerances": self.tolerances,
            "outputs": self.outputs,
            "notes": self.notes,
            "complete": self.complete,
            "created_unix": int(time.time()),
        }
        with open(self.out_dir / "MANIFEST.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # np.float64 is a float subclass with a noisy repr
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _out_dir(args, sub: str) -> Path:
    if args.out:
        return Path(args.out)
    root = os.environ.get(_OUT_ENV, "runs")
    return Path(root) / f"{Path(args.scenario).stem}-{sub}"


def _tol_dict(sc: Scenario, rtol: float, atol: float) -> dict:
    return {"rtol": rtol, "atol": atol,
            "escape_radius": sc.escape_radius,
            "map_escape_radius": sc.map_escape_radius}


def _effective_tols(sc: Scenario, args):
    if args.tol is not None:
        return float(args.tol), float(args.tol) * 1e-2
    return sc.rtol, sc.atol


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(sc: Scenario, args, run: _Run) -> int:
    rtol, atol = _effective_tols(sc, args)
    system = build_system(sc)
    span = sc.simulate_span
    if args.horizon is not None:
        span = (span[0], span[0] + float(args.horizon))
    traj = solve_ivp(system, span[0], np.asarray(sc.simulate_initial), span,
                     rtol=rtol, atol=atol, escape_radius=sc.escape_radius)
    lo, hi = traj.interval
    ts = np.linspace(span[0], span[1], sc.simulate_samples)
    rows = []
    for t in ts:
        t = float(min(max(t, lo), hi))
        try:
            u = traj(t)
        except ValueError:
            continue
        rows.append([t] + list(u))
    labels = ["t"] + (["u"] if system.state_dim == 1 else ["x", "y"])
    run.write_csv("trajectory.csv", labels, rows)
    run.write_json("trajectory_summary.json", {
        "interval": [lo, hi],
        "left_reason": traj.left.reason.value,
        "right_reason": traj.right.reason.value,
        "jumps": len(traj.jump_records),
    })
    if traj.right.reason.value != "horizon-reached" or \
            traj.left.reason.value != "horizon-reached":
        run.complete = False
        run.notes.append("trajectory did not cover the requested span "
                         f"(reached {lo:.6g}..{hi:.6g})")
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_poincare(sc: Scenario, args, run: _Run) -> int:
    rtol, atol = _effective_tols(sc, args)
    pmap = build_map(sc, rtol=rtol, atol=atol)
    N = int(args.horizon) if args.horizon is not None else 1000
    rows = []
    for si, seed in enumerate(sc.seeds()):
        orbit = pmap.iterate(seed, N)
        for k, (x, y) in enumerate(orbit.points):
            rows.append([si, k, float(x), float(y)])
    run.write_csv("section.csv", ["seed", "iterate", "x", "y"], rows)
    return EXIT_OK


def _cmd_area_check(sc: Scenario, args, run: _Run) -> int:
    rtol, atol = _effective_tols(sc, args)
    pmap = build_map(sc, rtol=rtol, atol=atol)
    g = int(args.grid) if args.grid is not None else 10
    xs = np.linspace(1.0, 3.0, g)
    ys = np.linspace(-1.0, 1.0, g)
    rows = []
    worst = 0.0
    for x in xs:
        for y in ys:
            try:
                rec = pmap.jacobian((x, y))
            except Escaped:
                rows.append([float(x), float(y), float("nan")])
                continue
            rows.append([float(x), float(y), rec.determinant])
            worst = max(worst, abs(rec.determinant - 1.0))
    run.write_csv("area_check.csv", ["x", "y", "det"], rows)
    run.write_json("area_summary.json", {"grid": g, "max_abs_det_minus_1": worst})
    return EXIT_OK


def _cmd_aa_roundtrip(sc: Scenario, args, run: _Run) -> int:
    chart = build_chart(sc)
    n = chart.n
    resid = float(np.max(np.abs((n + 1) * chart.Y_nodes ** 2
                                + chart.X_nodes ** (2 * n + 2) - 1.0)))
    rng = np.random.default_rng(20240601)
    lam = rng.uniform(1.0, 4.0, 1000)
    theta = rng.uniform(0.0, 1.0, 1000)
    X, Y = from_action_angle(chart, lam, theta)
    lam2, theta2 = to_action_angle(chart, X, Y)
    dl = float(np.max(np.abs(lam2 - lam)))
    dth = float(np.max(np.abs(0.5 - np.mod(0.5 - (theta2 - theta), 1.0))))
    T0_quad = 4.0 * np.sqrt(n + 1.0) * quarter_period_integral(n)
    # fresh return-time recomputation, independent of the cached table
    from scipy.integrate import solve_ivp as _ode
    from scipy.optimize import brentq
    sol = _ode(lambda t, u: [u[1], -u[0] ** (2 * n + 1)],
               (0.0, 2.2 * np.pi * np.sqrt(n + 1.0)), [1.0, 0.0],
               method="DOP853", rtol=1e-13, atol=1e-14, dense_output=True)
    ts = np.linspace(0.0, sol.t[-1], 8192)
    ys = sol.sol(ts)[1]
    flips = np.nonzero(np.sign(ys[1:]) * np.sign(ys[:-1]) < 0)[0]
    T0_ret = brentq(lambda t: float(sol.sol(t)[1]),
                    ts[flips[1]], ts[flips[1] + 1], xtol=1e-13)
    payload = {
        "n": n,
        "T0": chart.T0,
        "T0_quadrature": T0_quad,
        "T0_return_time": T0_ret,
        "period_agreement": abs(T0_quad - T0_ret),
        "unit_energy_residual_max": resid,
        "roundtrip_action_max": dl,
        "roundtrip_angle_max": dth,
    }
    run.write_json("chart_selftest.json", payload)
    ok = resid <= 1e-10 and dl <= 1e-9 and dth <= 1e-9 \
        and abs(T0_quad - T0_ret) <= 1e-9
    if not ok:
        run.complete = False
        run.notes.append("chart self-test outside stated tolerances")
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_smooth_rate(sc: Scenario, args, run: _Run) -> int:
    signal = None
    if sc.system == DUFFING:
        from .scenario import build_params
        params = build_params(sc)
        for sig in reversed(params.coefficients):
            if not sig.is_zero() and sig.holder_exponent is not None \
                    and sig.holder_exponent < 1.0:
                signal = sig
                break
    if signal is None:
        signal = lacunary_signal(0.6)
        run.notes.append("scenario has no rough coefficient; used the built-in "
                         "lacunary 0.6 test signal")
    sigmas = [2.0 ** (-k) for k in range(3, 10)]
    rows = [[s, smoothing_error_sup(signal, s)] for s in sigmas]
    run.write_csv("smooth_rate.csv", ["sigma", "sup_error"], rows)
    logs = np.log([r[0] for r in rows])
    loge = np.log([r[1] for r in rows])
    slope = float(np.polyfit(logs, loge, 1)[0])
    run.write_json("smooth_rate_summary.json",
                   {"slope": slope, "exponent": signal.holder_exponent})
    return EXIT_OK


def _cmd_rotation(sc: Scenario, args, run: _Run) -> int:
    rtol, atol = _effective_tols(sc, args)
    pmap = build_map(sc, rtol=rtol, atol=atol)
    chart = build_chart(sc)
    N = int(args.horizon) if args.horizon is not None else sc.rotation_iterates
    profile = twist_profile(pmap, chart, sc.A, sc.seeds(), N)
    rows = []
    for seed, action, omega, est in zip(sc.seeds(), profile.actions,
                                        profile.omegas, profile.estimates):
        rows.append([float(seed[0]), float(action),
                     float(omega) if np.isfinite(omega) else float("nan"),
                     est.convergence_indicator if est else float("nan"),
                     est.iterates_used if est else 0])
    run.write_csv("rotation.csv",
                  ["seed_x", "action", "omega", "indicator", "iterates"], rows)
    run.write_json("rotation_summary.json",
                   {"monotone": profile.monotone, "noise": profile.noise,
                    "iterates": N})
    return EXIT_OK


def _merge_reports(parts: List[SweepReport], horizon: int) -> SweepReport:
    return SweepReport(grid=np.vstack([p.grid for p in parts]),
                       horizon=horizon,
                       escape_index=np.concatenate([p.escape_index for p in parts]),
                       max_radius=np.concatenate([p.max_radius for p in parts]))


def _cmd_sweep(sc: Scenario, args, run: _Run) -> int:
    rtol, atol = _effective_tols(sc, args)
    pmap = build_map(sc, rtol=rtol, atol=atol)
    spec = sc.sweep
    if args.grid is not None:
        spec = replace(spec, nx=int(args.grid), ny=int(args.grid))
    grid = spec.grid()
    horizon = int(args.horizon) if args.horizon is not None else spec.horizon
    threads = max(1, int(args.threads))
    # fixed-size chunks keep the batch composition (and therefore the shared
    # adaptive steps) independent of the thread count, so outputs are
    # byte-identical no matter how the work is distributed
    chunk_rows = 100
    chunks = [grid[i:i + chunk_rows] for i in range(0, grid.shape[0], chunk_rows)]
    if threads == 1 or len(chunks) == 1:
        parts = [boundedness_sweep(pmap, chunk, horizon) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(
                lambda chunk: boundedness_sweep(pmap, chunk, horizon), chunks))
    report = _merge_reports(parts, horizon) if len(parts) > 1 else parts[0]
    rows = [[float(x), float(y), int(e < 0), float(r), int(e)]
            for (x, y), e, r in zip(report.grid, report.escape_index,
                                    report.max_radius)]
    run.write_csv("sweep.csv",
                  ["x0", "y0", "bounded", "max_radius", "escape_iterate"], rows)
    summary = report.to_dict()
    del summary["outcomes"]  # the CSV carries the per-point rows
    run.write_json("sweep_summary.json", summary)
    return EXIT_OK


def _cmd_detect(sc: Scenario, args, run: _Run) -> int:
    rtol, atol = _effective_tols(sc, args)
    pmap = build_map(sc, rtol=rtol, atol=atol)
    chart = build_chart(sc)
    N = int(args.horizon) if args.horizon is not None else sc.detect_iterates
    verdicts = []
    for seed, v in zip(sc.seeds(),
                       detect_circles(pmap, chart, sc.A, sc.seeds(), N=N,
                                      residual_tol=sc.detect_residual_tol)):
        verdicts.append({
            "seed": [float(seed[0]), float(seed[1])],
            "verdict": v.kind,
            "residual": v.residual,
            "omega": v.rotation.omega if v.rotation else None,
            "indicator": v.rotation.convergence_indicator if v.rotation else None,
            "points_used": v.points_used,
        })
    circles = sum(1 for v in verdicts if v["verdict"] == "circle")
    run.write_json("detect.json", {
        "iterates": N,
        "residual_tol": sc.detect_residual_tol,
        "verdicts": verdicts,
        "circle_fraction": circles / max(1, len(verdicts)),
    })
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "poincare": _cmd_poincare,
    "area-check": _cmd_area_check,
    "aa-roundtrip": _cmd_aa_roundtrip,
    "smooth-rate": _cmd_smooth_rate,
    "rotation": _cmd_rotation,
    "sweep": _cmd_sweep,
    "detect": _cmd_detect,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="impulsive-duffing",
        description="Experiments on periodically kicked Duffing oscillators: "
                    "simulation, time-1 map sections, area checks, coordinate "
                    "self-tests, smoothing rates, rotation profiles, "
                    "boundedness sweeps, and invariant-circle detection.")
    parser.add_argument("--list-scenarios", action="store_true",
                        help="print shipped scenario names and exit")
    sub = parser.add_subparsers(dest="command")
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True,
                       help="scenario file path or shipped scenario name")
        p.add_argument("--out", default=None,
                       help=f"output directory (default under ${_OUT_ENV} or ./runs)")
        p.add_argument("--tol", type=float, default=None,
                       help="override the relative tolerance (absolute = tol/100)")
        p.add_argument("--horizon", type=float, default=None,
                       help="override the horizon (iterates, or time span for simulate)")
        p.add_argument("--grid", type=int, default=None,
                       help="override the grid edge count where applicable")
        p.add_argument("--threads", type=int, default=1,
                       help="parallel workers for sweep grids")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "list_scenarios", False):
        for name in shipped_scenarios():
            print(name)
        return EXIT_OK
    if not args.command:
        build_parser().print_help()
        return EXIT_VALIDATION
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    for w in sc.warnings:
        print(f"warning: {w}", file=sys.stderr)
    rtol, atol = _effective_tols(sc, args)
    try:
        run = _Run(sc, _out_dir(args, args.command), _tol_dict(sc, rtol, atol))
    except OSError as exc:
        print(f"cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        code = _COMMANDS[args.command](sc, args, run)
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        # bad flag/scenario combinations surface as precondition failures
        print(f"invalid request: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericsError, Escaped) as exc:
        run.complete = False
        run.notes.append(str(exc))
        run.finish()
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        run.finish()
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
