"""Action-angle coordinates built on the reference oscillation of x'' + x^(2n+1) = 0.

The reference solution (X0, Y0) starts at (1, 0), has minimal period T0, and
satisfies the unit energy identity (n+1) Y0^2 + X0^(2n+2) = 1.  The chart

    X = (c lam)^alpha X0(theta T0),   Y = (c lam)^beta Y0(theta T0),

with alpha = 1/(n+2), beta = (n+1)/(n+2), c = 1/(alpha T0), is symplectic:
det d(X,Y)/d(theta,lam) = 1.  Its inverse recovers the action from the energy
radius and the angle from the monotone quarter-period branch of X0, refined by
a Newton step along the reference orbit (whose tangent speed never vanishes,
so the refinement is uniformly well conditioned even at the turning points).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.integrate import quad, solve_ivp as _ode_ivp
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.optimize import brentq

from .duffing import DuffingParams

REFERENCE_NODES = 4096
_QUARTER_SAMPLES = 2049
_CACHE_ENV = "IMPULSIVE_DUFFING_CACHE"


class NumericsError(RuntimeError):
    """Raised when two independent computations of the same quantity disagree."""


@dataclass
class ReferenceChart:
    """Tabulated reference solution and the constants of the action-angle map."""

    n: int
    T0: float
    tol: float
    s_nodes: np.ndarray        # 4096 equispaced nodes in [0, T0)
    X_nodes: np.ndarray
    Y_nodes: np.ndarray
    quarter_s: np.ndarray      # dense first-quarter parameter samples
    quarter_X: np.ndarray      # X0 at quarter_s (strictly decreasing 1 -> 0)

    def __post_init__(self):
        n = self.n
        self.alpha = 1.0 / (n + 2)
        self.beta = (n + 1.0) / (n + 2)
        self.c = 1.0 / (self.alpha * self.T0)
        self.d = self.c ** (2.0 * self.beta) / (2.0 * (n + 1))
        s_wrap = np.concatenate([self.s_nodes, [self.T0]])
        X_wrap = np.concatenate([self.X_nodes, [self.X_nodes[0]]])
        Y_wrap = np.concatenate([self.Y_nodes, [self.Y_nodes[0]]])
        self._spl_X = CubicSpline(s_wrap, X_wrap, bc_type="periodic")
        self._spl_Y = CubicSpline(s_wrap, Y_wrap, bc_type="periodic")
        X_asc = self.quarter_X[::-1].copy()
        s_asc = self.quarter_s[::-1].copy()
        X_asc[0] = 0.0   # turning node s = T0/4
        X_asc[-1] = 1.0  # initial condition s = 0
        if np.any(np.diff(X_asc) <= 0.0):
            raise NumericsError("quarter-period branch is not strictly monotone")
        self._quarter_inv = PchipInterpolator(X_asc, s_asc)

    def X0(self, s):
        return self._spl_X(np.mod(s, self.T0))

    def Y0(self, s):
        return self._spl_Y(np.mod(s, self.T0))

    def quarter_inverse(self, xi):
        """s in [0, T0/4] with X0(s) = xi, for xi in [0, 1]."""
        return self._quarter_inv(np.clip(xi, 0.0, 1.0))


def _reference_rhs(n: int):
    expo = 2 * n + 1

    def rhs(t, u):
        return [u[1], -u[0] ** expo]

    return rhs


def quarter_period_integral(n: int) -> float:
    """integral_0^1 (1 - X^(2n+2))^(-1/2) dX by the X = 1 - s^2 substitution.

    The substitution removes the inverse-square-root endpoint singularity; the
    integrand extends continuously to s = 0 with value 2/sqrt(2n+2).
    """
    m = 2 * n + 2

    def g(s):
        if s < 1e-4:
            return (2.0 / math.sqrt(m)) * (1.0 + (m - 1) * s * s / 4.0)
        return 2.0 * s / math.sqrt(1.0 - (1.0 - s * s) ** m)

    val, _ = quad(g, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def _return_time(n: int, sol, horizon: float) -> float:
    """Minimal period from the integrated orbit: second zero of Y0."""
    ts = np.linspace(0.0, horizon, 16384)
    ys = sol(ts)[1]
    sign_change = np.nonzero(np.sign(ys[1:]) * np.sign(ys[:-1]) < 0)[0]
    if sign_change.size < 2:
        raise NumericsError("reference orbit shows fewer than two turning points")
    i = sign_change[1]
    return brentq(lambda t: float(sol(t)[1]), ts[i], ts[i + 1],
                  xtol=1e-13, rtol=1e-15)


_memory_cache: dict = {}


def _cache_dir(cache) -> Optional[Path]:
    if cache is None:
        return None
    if cache != "auto":
        return Path(cache)
    root = os.environ.get(_CACHE_ENV)
    if root:
        return Path(root)
    return Path.home() / ".cache" / "impulsive-duffing"


def _cache_path(directory: Path, n: int, tol: float) -> Path:
    return directory / f"chart_n{n}_tol{tol:.0e}.npz"


def save_chart(chart: ReferenceChart, path) -> None:
    np.savez(path, n=chart.n, T0=chart.T0, tol=chart.tol,
             s_nodes=chart.s_nodes, X_nodes=chart.X_nodes, Y_nodes=chart.Y_nodes,
             quarter_s=chart.quarter_s, quarter_X=chart.quarter_X)


def load_chart(path) -> ReferenceChart:
    with np.load(path) as data:
        return ReferenceChart(n=int(data["n"]), T0=float(data["T0"]),
                              tol=float(data["tol"]),
                              s_nodes=data["s_nodes"], X_nodes=data["X_nodes"],
                              Y_nodes=data["Y_nodes"], quarter_s=data["quarter_s"],
                              quarter_X=data["quarter_X"])


def compute_reference(n: int, tol: float = 1e-9, cache="auto") -> ReferenceChart:
    """Build (or fetch) the reference chart for a given nonlinearity degree.

    The minimal period is computed two independent ways: adaptive quadrature of
    the quarter-period integral, and return-time detection on the integrated
    orbit.  Disagreement beyond ``tol`` aborts.  The table holds 4096 nodes per
    period from a tight-tolerance integration.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    key = (n, float(tol))
    if key in _memory_cache:
        return _memory_cache[key]
    directory = _cache_dir(cache)
    if directory is not None:
        path = _cache_path(directory, n, tol)
        if path.exists():
            try:
                chart = load_chart(path)
                _memory_cache[key] = chart
                return chart
            except Exception:
                pass  # stale or corrupt cache: recompute

    T0_quad = 4.0 * math.sqrt(n + 1.0) * quarter_period_integral(n)
    horizon = 1.1 * 2.0 * math.pi * math.sqrt(n + 1.0)  # period is below 2*pi*sqrt(n+1)
    ode = _ode_ivp(_reference_rhs(n), (0.0, horizon), [1.0, 0.0], method="DOP853",
                   rtol=1e-13, atol=1e-14, dense_output=True)
    if not ode.success:
        raise NumericsError("reference orbit integration failed")
    T0_ret = _return_time(n, ode.sol, horizon)
    if abs(T0_quad - T0_ret) > tol:
        raise NumericsError(
            "independent period computations disagree: quadrature %.15g vs "
            "return time %.15g" % (T0_quad, T0_ret))
    T0 = T0_quad

    s_nodes = np.linspace(0.0, T0, REFERENCE_NODES, endpoint=False)
    table = ode.sol(s_nodes)
    quarter_s = np.linspace(0.0, T0 / 4.0, _QUARTER_SAMPLES)
    quarter_X = ode.sol(quarter_s)[0]
    chart = ReferenceChart(n=n, T0=T0, tol=tol, s_nodes=s_nodes,
                           X_nodes=table[0].copy(), Y_nodes=table[1].copy(),
                           quarter_s=quarter_s, quarter_X=quarter_X)
    _memory_cache[key] = chart
    if directory is not None:
        try:
            directory.mkdir(parents=True, exist_ok=True)
            save_chart(chart, _cache_path(directory, n, tol))
        except OSError:
            pass  # read-only cache location is not an error
    return chart


# ---------------------------------------------------------------------------
# coordinate maps


def wrap_half(d):
    """Wrap an angle difference to (-1/2, 1/2]."""
    return 0.5 - np.mod(0.5 - np.asarray(d), 1.0)


def rescale_in(A: float, n: int, x, y):
    """(x, y) -> (X, Y) = (x/A, y/A^(n+1))."""
    if A <= 0.0:
        raise ValueError("A must be positive")
    return np.asarray(x) / A, np.asarray(y) / A ** (n + 1)


def rescale_out(A: float, n: int, X, Y):
    """(X, Y) -> (x, y) = (A X, A^(n+1) Y)."""
    if A <= 0.0:
        raise ValueError("A must be positive")
    return np.asarray(X) * A, np.asarray(Y) * A ** (n + 1)


def from_action_angle(chart: ReferenceChart, lam, theta):
    """Chart map (lam, theta) -> (X, Y); lam must be positive."""
    lam = np.asarray(lam, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(lam <= 0.0):
        raise ValueError("action must be positive")
    s = np.mod(theta, 1.0) * chart.T0
    base = chart.c * lam
    X = base ** chart.alpha * chart.X0(s)
    Y = base ** chart.beta * chart.Y0(s)
    if X.ndim == 0:
        return float(X), float(Y)
    return X, Y


def to_action_angle(chart: ReferenceChart, X, Y, newton_steps: int = 3):
    """Inverse chart map (X, Y) -> (lam, theta); the origin is rejected.

    The action comes from the energy radius; the angle seed uses the monotone
    quarter-period inverse with the sign conventions theta in [0, 1/2] on the
    Y <= 0 half and 1 - theta on the other half, then a few Newton steps
    minimize the squared distance to the reference orbit.
    """
    n = chart.n
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    X, Y = np.broadcast_arrays(X, Y)
    E = X ** (2 * n + 2) + (n + 1.0) * Y ** 2
    if np.any(E <= 0.0):
        raise ValueError("the chart is singular at the origin")
    lam = E ** ((n + 2.0) / (2.0 * n + 2.0)) / chart.c
    base = chart.c * lam
    Xh = np.clip(X / base ** chart.alpha, -1.0, 1.0)
    Yh = Y / base ** chart.beta

    sq = chart.quarter_inverse(np.abs(Xh))
    s_half = np.where(Xh >= 0.0, sq, chart.T0 / 2.0 - sq)
    s = np.where(Y <= 0.0, s_half, chart.T0 - s_half)

    expo = 2 * n + 1
    for _ in range(newton_steps):
        X0v = chart.X0(s)
        Y0v = chart.Y0(s)
        Xp = Y0v
        Yp = -X0v ** expo
        g = (X0v - Xh) * Xp + (Y0v - Yh) * Yp
        gp = (Xp ** 2 + Yp ** 2 + (X0v - Xh) * Yp
              - (Y0v - Yh) * (expo * X0v ** (2 * n) * Y0v))
        step = np.where(np.abs(gp) > 1e-14, g / np.where(gp == 0.0, 1.0, gp), 0.0)
        s = s - np.clip(step, -chart.T0 / 32.0, chart.T0 / 32.0)
    theta = np.mod(s / chart.T0, 1.0)
    if lam.ndim == 0:
        return float(lam), float(theta)
    return lam, theta


def jump_action_angle(chart: ReferenceChart, A: float, entry, lam, theta):
    """Angle/action increments of one impulse seen through the chart.

    Chains the defining construction: map to (X, Y), apply the rescaled
    increments I/A and J/A^(n+1) evaluated at the physical point
    (A X, A^(n+1) Y), and map back.  Returns (dtheta, dlam) with the angle
    increment wrapped to (-1/2, 1/2].
    """
    n = chart.n
    lam = np.asarray(lam, dtype=float)
    theta = np.asarray(theta, dtype=float)
    X, Y = from_action_angle(chart, lam, theta)
    x, y = rescale_out(A, n, X, Y)
    dX = entry.x_increment(x, y) / A
    dY = entry.y_increment(x, y) / A ** (n + 1)
    lam2, theta2 = to_action_angle(chart, X + dX, Y + dY)
    dlam = lam2 - lam
    dtheta = wrap_half(theta2 - np.mod(theta, 1.0))
    if lam.ndim == 0 and theta.ndim == 0:
        return float(dtheta), float(dlam)
    return dtheta, dlam


def hamiltonian_pieces(chart: ReferenceChart, params: DuffingParams, A: float,
                       lam, theta, t):
    """Integrable part and perturbation of the rescaled Hamiltonian.

    H0(lam) = d A^n lam^(2(n+1)/(n+2)); the perturbation is the finite sum
    over coefficient signals, R = sum_i p_i(t)/(i+1) A^(i-n-1)
    (c^alpha X0(theta T0))^(i+1) lam^(alpha (i+1)).
    """
    if A <= 0.0:
        raise ValueError("A must be positive")
    n = chart.n
    lam = np.asarray(lam, dtype=float)
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(t, dtype=float)
    H0 = chart.d * A ** n * lam ** (2.0 * (n + 1) / (n + 2))
    X0v = chart.X0(np.mod(theta, 1.0) * chart.T0)
    R = np.zeros(np.broadcast(lam, theta, t).shape)
    for i, sig in enumerate(params.coefficients):
        if sig.is_zero():
            continue
        term = (sig(t) / (i + 1.0)) * A ** float(i - n - 1)
        R = R + term * (chart.c ** chart.alpha * X0v) ** (i + 1) \
            * lam ** (chart.alpha * (i + 1))
    if H0.ndim == 0 and R.ndim == 0:
        return float(H0), float(R)
    return H0, R


def unperturbed_rotation(chart: ReferenceChart, A: float, lam):
    """dH0/dlam: angular speed of the integrable flow at a given action."""
    n = chart.n
    lam = np.asarray(lam, dtype=float)
    out = chart.d * A ** n * (2.0 * (n + 1) / (n + 2)) * lam ** (n / (n + 2.0))
    return float(out) if out.ndim == 0 else out
