import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
import impulsive_duffing as idf
from impulsive_duffing.actionangle import load_chart, save_chart

from conftest import reference_period


class TestReferenceChart:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_period_against_closed_form(self, n):
        chart = idf.compute_reference(n, cache=None)
        assert chart.T0 == pytest.approx(reference_period(n), abs=1e-9)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_unit_energy_identity_at_nodes(self, n):
        chart = idf.compute_reference(n, cache=None)
        resid = np.abs((n + 1) * chart.Y_nodes ** 2
                       + chart.X_nodes ** (2 * n + 2) - 1.0)
        assert resid.max() <= 1e-10
        assert chart.s_nodes.size == 4096

    def test_symmetries(self, chart1):
        # X0 even, Y0 odd; half-period reflection
        s = np.linspace(0.0, chart1.T0 / 2.0, 257)
        np.testing.assert_allclose(chart1.X0(-s), chart1.X0(s), atol=1e-9)
        np.testing.assert_allclose(chart1.Y0(-s), -chart1.Y0(s), atol=1e-9)
        assert chart1.X0(chart1.T0 / 2.0) == pytest.approx(-1.0, abs=1e-8)
        assert chart1.Y0(chart1.T0 / 2.0) == pytest.approx(0.0, abs=1e-8)

    def test_periodicity(self, chart1):
        s = np.linspace(0.0, chart1.T0, 100)
        np.testing.assert_allclose(chart1.X0(s + chart1.T0), chart1.X0(s), atol=1e-12)
        np.testing.assert_allclose(chart1.Y0(s + chart1.T0), chart1.Y0(s), atol=1e-12)

    def test_derivative_relations_at_nodes(self, chart1):
        # X0' = Y0 and Y0' = -X0^(2n+1) through the interpolant derivative
        dX = chart1._spl_X.derivative()(chart1.s_nodes)
        dY = chart1._spl_Y.derivative()(chart1.s_nodes)
        assert np.max(np.abs(dX - chart1.Y_nodes)) <= 1e-8
        assert np.max(np.abs(dY + chart1.X_nodes ** 3)) <= 1e-8

    def test_constants(self, chart1):
        assert chart1.alpha == pytest.approx(1.0 / 3.0)
        assert chart1.beta == pytest.approx(2.0 / 3.0)
        assert chart1.c == pytest.approx(3.0 / chart1.T0)
        assert chart1.d == pytest.approx(chart1.c ** (4.0 / 3.0) / 4.0)

    def test_period_disagreement_aborts(self):
        with pytest.raises(idf.NumericsError):
            idf.compute_reference(1, tol=1e-16, cache=None)

    def test_cache_roundtrip(self, chart1, tmp_path):
        path = tmp_path / "chart.npz"
        save_chart(chart1, path)
        loaded = load_chart(path)
        assert loaded.T0 == chart1.T0
        np.testing.assert_array_equal(loaded.X_nodes, chart1.X_nodes)
        X, Y = idf.from_action_angle(loaded, 2.0, 0.3)
        X2, Y2 = idf.from_action_angle(chart1, 2.0, 0.3)
        assert (X, Y) == (X2, Y2)

    def test_file_cache_hit(self, tmp_path):
        idf.actionangle._memory_cache.clear()
        c1 = idf.compute_reference(1, cache=tmp_path)
        assert (tmp_path / "chart_n1_tol1e-09.npz").exists()
        idf.actionangle._memory_cache.clear()
        c2 = idf.compute_reference(1, cache=tmp_path)
        assert c2.T0 == c1.T0


class TestChartMaps:
    def test_base_point(self, chart1):
        X, Y = idf.from_action_angle(chart1, 1.0, 0.0)
        assert X == pytest.approx(chart1.c ** chart1.alpha, abs=1e-12)
        assert Y == pytest.approx(0.0, abs=1e-12)

    def test_half_period_reflection(self, chart1):
        X, Y = idf.from_action_angle(chart1, 1.0, 0.5)
        assert X == pytest.approx(-chart1.c ** chart1.alpha, abs=1e-8)
        assert Y == pytest.approx(0.0, abs=1e-8)

    def test_angle_periodicity(self, chart1):
        X1, Y1 = idf.from_action_angle(chart1, 2.0, 0.37)
        X2, Y2 = idf.from_action_angle(chart1, 2.0, 1.37)
        assert X1 == pytest.approx(X2, abs=1e-12)
        assert Y1 == pytest.approx(Y2, abs=1e-12)

    def test_quarter_period_point(self, chart1):
        lam, theta = idf.to_action_angle(
            chart1, 0.0, -chart1.c ** chart1.beta / math.sqrt(2.0))
        assert lam == pytest.approx(1.0, abs=1e-9)
        assert theta == pytest.approx(0.25, abs=1e-9)

    def test_roundtrip_trivial(self, chart1):
        lam, theta = idf.to_action_angle(chart1, chart1.c ** chart1.alpha, 0.0)
        assert lam == pytest.approx(1.0, abs=1e-11)
        assert min(theta, 1.0 - theta) == pytest.approx(0.0, abs=1e-11)

    @pytest.mark.parametrize("n", [1, 2])
    def test_roundtrip_cloud(self, n):
        chart = idf.compute_reference(n, cache=None)
        rng = np.random.default_rng(42)
        lam = rng.uniform(1.0, 4.0, 1000)
        theta = rng.uniform(0.0, 1.0, 1000)
        X, Y = idf.from_action_angle(chart, lam, theta)
        lam2, theta2 = idf.to_action_angle(chart, X, Y)
        assert np.max(np.abs(lam2 - lam)) <= 1e-9
        assert np.max(np.abs(idf.wrap_half(theta2 - theta))) <= 1e-9

    def test_origin_rejected(self, chart1):
        with pytest.raises(ValueError):
            idf.to_action_angle(chart1, 0.0, 0.0)
        with pytest.raises(ValueError):
            idf.from_action_angle(chart1, 0.0, 0.3)

    def test_symplectic_determinant_on_grid(self, chart1):
        # numerical Jacobian d(X,Y)/d(theta,lam) has determinant 1
        lam = np.linspace(1.0, 4.0, 32)
        theta = np.linspace(0.0, 1.0, 32, endpoint=False)
        L, TH = np.meshgrid(lam, theta, indexing="ij")
        h = 1e-5  # angle third derivatives scale with T0^3, so keep h small
        Xtp, Ytp = idf.from_action_angle(chart1, L, TH + h)
        Xtm, Ytm = idf.from_action_angle(chart1, L, TH - h)
        Xlp, Ylp = idf.from_action_angle(chart1, L + h, TH)
        Xlm, Ylm = idf.from_action_angle(chart1, L - h, TH)
        dX_dth = (Xtp - Xtm) / (2 * h)
        dY_dth = (Ytp - Ytm) / (2 * h)
        dX_dl = (Xlp - Xlm) / (2 * h)
        dY_dl = (Ylp - Ylm) / (2 * h)
        det = dX_dth * dY_dl - dX_dl * dY_dth
        assert np.max(np.abs(det - 1.0)) <= 1e-7

    def test_angle_continuity_across_branch_seams(self, chart1):
        # theta along a constant-action circle advances without jumps bigger
        # than the grid spacing
        theta = np.linspace(0.0, 1.0, 4096, endpoint=False)
        X, Y = idf.from_action_angle(chart1, 2.0, theta)
        _, theta2 = idf.to_action_angle(chart1, X, Y)
        diffs = np.abs(idf.wrap_half(np.diff(theta2)))
        assert np.max(diffs) <= 2.0 / 4096


class TestRescale:
    def test_identity_at_one(self):
        assert idf.rescale_in(1.0, 1, 0.7, -0.2) == (0.7, -0.2)

    def test_velocity_scales_with_the_higher_power(self):
        # Y = y / A^(n+1): (10, 100) at A = 10, n = 1 lands on (1, 1)
        X, Y = idf.rescale_in(10.0, 1, 10.0, 100.0)
        assert (X, Y) == (1.0, 1.0)

    def test_exact_roundtrip_binary_scale(self):
        # x/A*A is bitwise exact when A is a power of two
        xs = np.array([0.1, -2.7, 3.14159])
        ys = np.array([1.3, 0.0, -0.5])
        X, Y = idf.rescale_in(4.0, 2, xs, ys)
        x2, y2 = idf.rescale_out(4.0, 2, X, Y)
        np.testing.assert_array_equal(x2, xs)
        np.testing.assert_array_equal(y2, ys)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-50.0, 50.0, allow_subnormal=False),
           st.floats(-50.0, 50.0, allow_subnormal=False),
           st.sampled_from([2.0, 8.0, 64.0, 1024.0]))
    def test_roundtrip_property(self, x, y, A):
        # subnormals excluded: dividing into the subnormal range drops bits
        X, Y = idf.rescale_in(A, 1, x, y)
        x2, y2 = idf.rescale_out(A, 1, X, Y)
        assert x2 == x and y2 == y

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError):
            idf.rescale_in(0.0, 1, 1.0, 1.0)


class TestJumpActionAngle:
    def test_zero_impulse(self, chart1):
        dth, dlam = idf.jump_action_angle(chart1, 100.0, idf.constant_shift(0.0),
                                          2.0, 0.3)
        # the defining construction goes through the chart and back, so the
        # zero impulse returns increments at roundoff level
        assert dth == pytest.approx(0.0, abs=1e-12)
        assert dlam == pytest.approx(0.0, abs=1e-12)

    def test_commuting_diagram(self, chart1):
        # increments must equal the direct-path difference of chart images
        entry = idf.polynomial_kick(0.2, [0.1, 0.05])
        A = 50.0
        rng = np.random.default_rng(3)
        for _ in range(50):
            lam = rng.uniform(1.0, 4.0)
            theta = rng.uniform(0.0, 1.0)
            dth, dlam = idf.jump_action_angle(chart1, A, entry, lam, theta)
            X, Y = idf.from_action_angle(chart1, lam, theta)
            x, y = idf.rescale_out(A, 1, X, Y)
            X2 = X + entry.x_increment(x, y) / A
            Y2 = Y + entry.y_increment(x, y) / A ** 2
            lam2, theta2 = idf.to_action_angle(chart1, X2, Y2)
            assert dlam == pytest.approx(lam2 - lam, abs=1e-10)
            assert dth == pytest.approx(float(idf.wrap_half(theta2 - theta)), abs=1e-10)

    @pytest.mark.parametrize("entry_factory", [
        lambda: idf.constant_shift(0.3),
        lambda: idf.polynomial_kick(0.0, [0.0, 0.2]),
    ])
    def test_increment_decay_in_scale(self, chart1, entry_factory):
        entry = entry_factory()
        lam = np.linspace(1.0, 4.0, 9)[:, None]
        theta = np.linspace(0.0, 1.0, 128, endpoint=False)[None, :]
        sup_l, sup_t = [], []
        for A in (1e2, 1e3, 1e4):
            dth, dlam = idf.jump_action_angle(chart1, A, entry, lam, theta)
            sup_l.append(np.max(np.abs(dlam)))
            sup_t.append(np.max(np.abs(dth)))
        logA = np.log([1e2, 1e3, 1e4])
        slope_l = np.polyfit(logA, np.log(sup_l), 1)[0]
        slope_t = np.polyfit(logA, np.log(sup_t), 1)[0]
        assert slope_l == pytest.approx(-1.0, abs=0.1)
        assert slope_t == pytest.approx(-1.0, abs=0.1)

    def test_area_preservation_through_chart(self, chart1):
        # the action-angle jump map for an identity-0 entry keeps det = 1
        entry = idf.polynomial_kick(0.1, [0.02, 0.03])
        A = 30.0
        h = 1e-5
        rng = np.random.default_rng(9)
        for _ in range(20):
            lam = rng.uniform(1.5, 3.5)
            theta = rng.uniform(0.0, 1.0)

            def mapped(l, t):
                dth, dlam = idf.jump_action_angle(chart1, A, entry, l, t)
                return np.array([l + dlam, t + dth])

            D = np.empty((2, 2))
            D[:, 0] = (mapped(lam + h, theta) - mapped(lam - h, theta)) / (2 * h)
            D[:, 1] = (mapped(lam, theta + h) - mapped(lam, theta - h)) / (2 * h)
            assert np.linalg.det(D) == pytest.approx(1.0, abs=1e-6)


def _hamiltonian_direct(chart, params, A, lam, theta, t):
    """Independent oracle: rescaled Hamiltonian evaluated at the chart image."""
    n = chart.n
    X, Y = idf.from_action_angle(chart, lam, theta)
    val = A ** n * (0.5 * Y ** 2 + X ** (2 * n + 2) / (2.0 * (n + 1)))
    for i, sig in enumerate(params.coefficients):
        val += sig(t) / (i + 1.0) * A ** (i - n - 1.0) * X ** (i + 1)
    return val


class TestHamiltonianPieces:
    def test_zero_action(self, chart1):
        H0, R = idf.hamiltonian_pieces(chart1, idf.DuffingParams.unforced(1),
                                       10.0, 0.0, 0.3, 0.0)
        assert H0 == 0.0 and R == 0.0

    def test_consistency_with_direct_evaluation(self, chart1):
        params = idf.DuffingParams(1, (idf.constant_signal(0.2),
                                       idf.fourier_signal([(1, 0.1, 0.3)]),
                                       idf.fourier_signal([(2, 0.05, 0.0)])))
        rng = np.random.default_rng(8)
        for A in (5.0, 200.0):
            lam = rng.uniform(1.0, 4.0, 100)
            theta = rng.uniform(0.0, 1.0, 100)
            t = rng.uniform(0.0, 1.0, 100)
            H0, R = idf.hamiltonian_pieces(chart1, params, A, lam, theta, t)
            direct = _hamiltonian_direct(chart1, params, A, lam, theta, t)
            np.testing.assert_allclose(H0 + R, direct, rtol=0, atol=1e-10 * A)

    def test_perturbation_growth_rate(self, chart2):
        # sup |R| grows like A^(n-1) when the top coefficient is nonzero
        sigs = [idf.zero_signal()] * 4 + [idf.fourier_signal([(1, 0.3, 0.0)])]
        params = idf.DuffingParams(2, tuple(sigs))
        lam = np.linspace(1.0, 4.0, 9)[:, None, None]
        theta = np.linspace(0.0, 1.0, 32, endpoint=False)[None, :, None]
        t = np.linspace(0.0, 1.0, 16, endpoint=False)[None, None, :]
        sups = []
        for A in (1e2, 1e3, 1e4):
            _, R = idf.hamiltonian_pieces(chart2, params, A, lam, theta, t)
            sups.append(np.max(np.abs(R)))
        slope = np.polyfit(np.log([1e2, 1e3, 1e4]), np.log(sups), 1)[0]
        assert slope == pytest.approx(1.0, abs=0.1)

    def test_unperturbed_rotation_matches_period_law(self, chart1):
        # dH0/dlam at the action of (a, 0) equals a^n / T0
        for a in (0.9, 1.3):
            lam, _ = idf.to_action_angle(chart1, a, 0.0)
            omega = idf.unperturbed_rotation(chart1, 1.0, lam)
            assert omega == pytest.approx(a / chart1.T0, rel=1e-9)
