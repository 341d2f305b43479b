"""Acceptance gate: each numbered criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the one-line
PASS/FAIL report per criterion, including the measured runtime.
"""

import math
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp as ode_ivp
from scipy.optimize import brentq

import impulsive_duffing as idf
from impulsive_duffing.actionangle import _memory_cache
from impulsive_duffing.scenario import build_params

from conftest import reference_period
from test_diagnostics import period_at_energy


def _report(name, elapsed, limit, detail, checks):
    ok = all(checks)
    line = f"[{name}] {'PASS' if ok else 'FAIL'} ({elapsed:.2f}s"
    line += f" < {limit:.0f}s limit) " if limit else ") "
    print(line + detail)
    assert ok, detail
    if limit:
        assert elapsed < limit, f"runtime {elapsed:.1f}s over the {limit}s limit"


class TestAcceptance:
    def test_01_closed_form_impulsive_solution(self, tangent_system):
        t0 = time.perf_counter()
        traj = idf.solve_ivp(tangent_system, 0.0, [0.0], (0.0, 2.0 * math.pi))
        ts = np.linspace(1e-9, 2.0 * math.pi, 2001)
        quarter = math.pi / 4.0
        errs = []
        for t in ts:
            j = math.floor(t / quarter - 1e-12)
            errs.append(abs(traj(float(t))[0] - math.tan(t - j * quarter)))
        err = max(errs)
        elapsed = time.perf_counter() - t0
        _report("criterion-01 closed-form kicked solution", elapsed, 1.0,
                f"max |u - tan| = {err:.2e} (tol 1e-8)", [err <= 1e-8])

    def test_02_non_continuability(self, tangent_system):
        t0 = time.perf_counter()
        traj = idf.solve_ivp(tangent_system, 0.0, [1.0], (0.0, 1.0))
        elapsed = time.perf_counter() - t0
        t_esc = traj.right.time
        ok_reason = traj.right.reason is idf.TerminationReason.ESCAPE
        ok_window = math.pi / 4.0 - 1e-3 <= t_esc <= math.pi / 4.0
        _report("criterion-02 non-continuability", elapsed, 1.0,
                f"escape at {t_esc:.9f} (t1 = {math.pi / 4.0:.9f})",
                [ok_reason, ok_window, len(traj.jump_records) == 0])

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_03_reference_chart(self, n):
        _memory_cache.pop((n, 1e-9), None)
        t0 = time.perf_counter()
        chart = idf.compute_reference(n, tol=1e-9, cache=None)
        elapsed = time.perf_counter() - t0
        resid = float(np.max(np.abs((n + 1) * chart.Y_nodes ** 2
                                    + chart.X_nodes ** (2 * n + 2) - 1.0)))
        # independent return-time oracle: direct integration plus root finding
        sol = ode_ivp(lambda t, u: [u[1], -u[0] ** (2 * n + 1)],
                      (0.0, 2.2 * math.pi * math.sqrt(n + 1.0)), [1.0, 0.0],
                      method="DOP853", rtol=1e-13, atol=1e-14, dense_output=True)
        grid = np.linspace(0.0, sol.t[-1], 8192)
        ys = sol.sol(grid)[1]
        flips = np.nonzero(np.sign(ys[1:]) * np.sign(ys[:-1]) < 0)[0]
        T0_oracle = brentq(lambda t: float(sol.sol(t)[1]),
                           grid[flips[1]], grid[flips[1] + 1], xtol=1e-13)
        agreement = abs(chart.T0 - T0_oracle)
        closed_form = abs(chart.T0 - reference_period(n))
        _report(f"criterion-03 reference chart n={n}", elapsed, 5.0,
                f"identity residual {resid:.2e} (tol 1e-10), "
                f"period agreement {agreement:.2e} (tol 1e-9), "
                f"closed form {closed_form:.2e}",
                [resid <= 1e-10, agreement <= 1e-9, closed_form <= 1e-9,
                 chart.s_nodes.size == 4096])

    def test_04_chart_round_trip(self, chart1):
        t0 = time.perf_counter()
        rng = np.random.default_rng(1234)
        lam = rng.uniform(1.0, 4.0, 1000)
        theta = rng.uniform(0.0, 1.0, 1000)
        X, Y = idf.from_action_angle(chart1, lam, theta)
        lam2, theta2 = idf.to_action_angle(chart1, X, Y)
        dl = float(np.max(np.abs(lam2 - lam)))
        dth = float(np.max(np.abs(idf.wrap_half(theta2 - theta))))
        g = np.linspace(1.0, 4.0, 32)
        th = np.linspace(0.0, 1.0, 32, endpoint=False)
        L, TH = np.meshgrid(g, th, indexing="ij")
        h = 1e-5
        Xtp, Ytp = idf.from_action_angle(chart1, L, TH + h)
        Xtm, Ytm = idf.from_action_angle(chart1, L, TH - h)
        Xlp, Ylp = idf.from_action_angle(chart1, L + h, TH)
        Xlm, Ylm = idf.from_action_angle(chart1, L - h, TH)
        det = ((Xtp - Xtm) * (Ylp - Ylm) - (Xlp - Xlm) * (Ytp - Ytm)) / (4 * h * h)
        det_err = float(np.max(np.abs(det - 1.0)))
        elapsed = time.perf_counter() - t0
        _report("criterion-04 chart round trip", elapsed, None,
                f"roundtrip ({dl:.2e}, {dth:.2e}) tol 1e-9; "
                f"symplectic det error {det_err:.2e} tol 1e-7",
                [dl <= 1e-9, dth <= 1e-9, det_err <= 1e-7])

    def test_05_area_preservation(self, basic_scenario):
        t0 = time.perf_counter()
        pmap = idf.build_map(basic_scenario, rtol=1e-12, atol=1e-13)
        xs = np.linspace(1.0, 3.0, 10)
        ys = np.linspace(-1.0, 1.0, 10)
        worst_det = 0.0
        worst_entry = 0.0
        for x in xs:
            for y in ys:
                var = pmap.jacobian([x, y])
                fd = pmap.jacobian([x, y], method="finite-difference",
                                   fd_step=1e-6)
                worst_det = max(worst_det, abs(var.determinant - 1.0))
                worst_entry = max(worst_entry,
                                  float(np.max(np.abs(var.matrix - fd.matrix))))
        elapsed = time.perf_counter() - t0
        _report("criterion-05 time-1 map area preservation", elapsed, 30.0,
                f"max |det-1| = {worst_det:.2e} (tol 1e-6), "
                f"max FD deviation = {worst_entry:.2e} (tol 1e-5)",
                [worst_det <= 1e-6, worst_entry <= 1e-5])

    def test_06_smoothing_rate(self):
        t0 = time.perf_counter()
        sig = idf.lacunary_signal(0.6)
        sigmas = np.array([2.0 ** (-k) for k in range(3, 10)])
        errs = np.array([idf.smoothing_error_sup(sig, s) for s in sigmas])
        slope = float(np.polyfit(np.log(sigmas), np.log(errs), 1)[0])
        elapsed = time.perf_counter() - t0
        _report("criterion-06 smoothing rate", elapsed, 10.0,
                f"log-log slope {slope:.3f} (target 0.6 +- 0.1)",
                [abs(slope - 0.6) <= 0.1])

    @pytest.mark.parametrize("name,n", [("hoelder-splitting", 1),
                                        ("hoelder-splitting-n2", 2)])
    def test_07_perturbation_scaling(self, name, n):
        t0 = time.perf_counter()
        sc = idf.load_scenario(name)
        params = build_params(sc)
        chart = idf.compute_reference(n, cache=None)
        As = (1e2, 1e3, 1e4)
        lam = np.linspace(1.0, 4.0, 21)[:, None, None]
        th = np.linspace(0.0, 1.0, 64, endpoint=False)[None, :, None]
        ts = np.linspace(0.0, 1.0, 128, endpoint=False)[None, None, :]
        sup_R, sup_split, sup_rem = [], [], []
        for A in As:
            _, R = idf.hamiltonian_pieces(chart, params, A, lam, th, ts)
            sup_R.append(float(np.max(np.abs(R))))
            _, rep = idf.split_perturbation(params, chart, A, sc.eps0)
            sup_split.append(rep.sup_analytic)
            sup_rem.append(rep.sup_remainder)
        slope = float(np.polyfit(np.log(As), np.log(sup_R), 1)[0])
        # frozen-constant bounds: calibrate at the coarsest rung
        C_rem = sup_rem[0] / sc.eps0
        C_ana = sup_split[0] / As[0] ** (n - 1)
        ok_rem = all(s <= 2.0 * C_rem * sc.eps0 for s in sup_rem[1:])
        ok_ana = all(s <= 2.0 * C_ana * A ** (n - 1)
                     for s, A in zip(sup_split[1:], As[1:]))
        elapsed = time.perf_counter() - t0
        _report(f"criterion-07 perturbation scaling n={n}", elapsed, 60.0,
                f"slope {slope:.3f} (target {n - 1} +- 0.15); "
                f"remainder/eps0 = {[f'{s / sc.eps0:.2f}' for s in sup_rem]}",
                [abs(slope - (n - 1)) <= 0.15, ok_rem, ok_ana])

    @pytest.mark.parametrize("n", [1, 2])
    def test_08_jump_smallness(self, n):
        t0 = time.perf_counter()
        chart = idf.compute_reference(n, cache=None)
        lam = np.linspace(1.0, 4.0, 9)[:, None]
        theta = np.linspace(0.0, 1.0, 256, endpoint=False)[None, :]
        As = (1e2, 1e3, 1e4)
        logA = np.log(As)
        slopes = {}
        for label, entry in (("shift", idf.constant_shift(0.3)),
                             ("poly", idf.polynomial_kick(0.0, [0.0] * n + [0.2]))):
            sup_l, sup_t = [], []
            for A in As:
                dth, dlam = idf.jump_action_angle(chart, A, entry, lam, theta)
                sup_l.append(np.max(np.abs(dlam)))
                sup_t.append(np.max(np.abs(dth)))
            slopes[label + "-dlam"] = float(np.polyfit(logA, np.log(sup_l), 1)[0])
            slopes[label + "-dtheta"] = float(np.polyfit(logA, np.log(sup_t), 1)[0])
        elapsed = time.perf_counter() - t0
        detail = ", ".join(f"{k} {v:+.3f}" for k, v in slopes.items())
        _report(f"criterion-08 jump smallness n={n}", elapsed, None,
                detail + " (target -1 +- 0.1)",
                [abs(v + 1.0) <= 0.1 for v in slopes.values()])

    def test_09_rotation_oracle_and_twist(self, unforced_map, chart1):
        t0 = time.perf_counter()
        a0 = 1.2
        lam_targets = np.linspace(1.0, 4.0, 8)
        seeds = [( (chart1.c * lam) ** (1.0 / 3.0), 0.0) for lam in lam_targets]
        seeds.append((a0, 0.0))
        prof = idf.twist_profile(unforced_map, chart1, 1.0, seeds, 4096)
        est_omega = prof.omegas[-1]
        h = idf.h0_energy(1, np.array([a0, 0.0]))
        oracle = (1.0 / period_at_energy(1, h)) % 1.0
        rot_err = abs(est_omega - oracle)
        ladder = prof.omegas[:-1]
        monotone = bool(np.all(np.diff(ladder) > prof.noise))
        elapsed = time.perf_counter() - t0
        _report("criterion-09 rotation oracle and twist", elapsed, None,
                f"|omega - 1/T(h)| = {rot_err:.2e} (tol 1e-6); "
                f"profile strictly monotone over action 1..4: {monotone}",
                [rot_err <= 1e-6, monotone])

    def test_10_boundedness_and_circles(self, basic_scenario):
        t0 = time.perf_counter()
        pmap = idf.build_map(basic_scenario)
        grid = basic_scenario.sweep.grid()
        assert grid.shape == (400, 2)
        report = idf.boundedness_sweep(pmap, grid,
                                       basic_scenario.sweep.horizon)
        sweep_elapsed = time.perf_counter() - t0
        chart = idf.build_chart(basic_scenario, cache=None)
        verdicts = idf.detect_circles(pmap, chart, basic_scenario.A,
                                      basic_scenario.seeds(), N=8192,
                                      residual_tol=1e-4)
        fraction = sum(v.kind == "circle" for v in verdicts) / len(verdicts)
        elapsed = time.perf_counter() - t0
        _report("criterion-10 boundedness and invariant circles", elapsed, 600.0,
                f"escapes {int(np.sum(report.escape_index >= 0))}/400 over "
                f"{basic_scenario.sweep.horizon} iterates "
                f"(sweep {sweep_elapsed:.0f}s); circle fraction "
                f"{fraction:.2f} of {len(verdicts)} seeds (need >= 0.30)",
                [report.fraction_bounded == 1.0, fraction >= 0.30,
                 len(verdicts) == 16])
