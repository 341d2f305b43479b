"""Kicked Duffing oscillators.

The planar system is ``x' = y``, ``y' = -x^(2n+1) - sum_i p_i(t) x^i`` with
1-periodic coefficient signals ``p_i`` and a catalog of impulse kinds acting
on (x, y).  Besides field construction this module carries the two checkable
hypotheses used throughout: the weighted-derivative smallness report for the
impulse functions and the first-order area-preservation identity of the jump
maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P

from .impulsive import JumpMap

HOLDER = "holder"
INTEGRABLE = "integrable"


# ---------------------------------------------------------------------------
# coefficient signals


@dataclass(frozen=True)
class CoefficientSignal:
    """1-periodic signal stored as a finite cosine/sine series.

    Sample-based signals are converted to this form by discrete Fourier
    interpolation, so a single representation serves evaluation, smoothing,
    and complex-strip continuation.  ``freqs`` holds nonnegative integer
    frequencies; the entry for frequency 0 uses only the cosine amplitude.
    """

    freqs: np.ndarray
    cos_amps: np.ndarray
    sin_amps: np.ndarray
    holder_exponent: Optional[float] = None
    declared_class: str = HOLDER
    sample_count: Optional[int] = None

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=int)
        cos_amps = np.asarray(self.cos_amps, dtype=float)
        sin_amps = np.asarray(self.sin_amps, dtype=float)
        if not (freqs.shape == cos_amps.shape == sin_amps.shape):
            raise ValueError("freqs and amplitude arrays must share a shape")
        if freqs.size and (np.any(freqs < 0) or np.any(np.diff(freqs) <= 0)):
            raise ValueError("frequencies must be nonnegative and strictly increasing")
        if self.declared_class not in (HOLDER, INTEGRABLE):
            raise ValueError("declared_class must be %r or %r" % (HOLDER, INTEGRABLE))
        if self.declared_class == HOLDER:
            g = self.holder_exponent
            if g is None or not (0.0 < g <= 1.0):
                raise ValueError("a Hoelder signal needs an exponent in (0, 1]")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "cos_amps", cos_amps)
        object.__setattr__(self, "sin_amps", sin_amps)

    def __call__(self, t):
        t = np.asarray(t)
        if self.freqs.size == 0:
            return np.zeros(t.shape) if t.ndim else 0.0
        ang = 2.0 * np.pi * np.multiply.outer(t, self.freqs.astype(float))
        out = np.cos(ang) @ self.cos_amps + np.sin(ang) @ self.sin_amps
        return out if t.ndim else out[()]

    @property
    def max_frequency(self) -> int:
        return int(self.freqs[-1]) if self.freqs.size else 0

    def is_zero(self) -> bool:
        return bool(np.all(self.cos_amps == 0.0) and np.all(self.sin_amps == 0.0))


def fourier_signal(terms: Sequence[Tuple[int, float, float]],
                   holder_exponent: Optional[float] = None,
                   declared_class: str = HOLDER) -> CoefficientSignal:
    """Signal from (frequency, cosine amplitude, sine amplitude) triples."""
    if not terms:
        return zero_signal()
    terms = sorted((int(q), float(a), float(b)) for q, a, b in terms)
    freqs = np.array([q for q, _, _ in terms])
    if np.any(np.diff(freqs) == 0):
        raise ValueError("duplicate frequencies in Fourier terms")
    ge = 1.0 if holder_exponent is None and declared_class == HOLDER else holder_exponent
    return CoefficientSignal(freqs,
                             np.array([a for _, a, _ in terms]),
                             np.array([b for _, _, b in terms]),
                             holder_exponent=ge, declared_class=declared_class)


def constant_signal(value: float) -> CoefficientSignal:
    return fourier_signal([(0, value, 0.0)])


def zero_signal() -> CoefficientSignal:
    return CoefficientSignal(np.zeros(0, dtype=int), np.zeros(0), np.zeros(0),
                             holder_exponent=1.0, declared_class=HOLDER)


def signal_from_samples(samples: Sequence[float],
                        holder_exponent: Optional[float] = None,
                        declared_class: str = HOLDER) -> CoefficientSignal:
    """Band-limited interpolant of uniform samples over [0, 1)."""
    samples = np.asarray(samples, dtype=float)
    N = samples.size
    if N < 2:
        raise ValueError("need at least two samples")
    c = np.fft.rfft(samples) / N
    freqs = np.arange(c.size)
    cos_amps = 2.0 * c.real
    sin_amps = -2.0 * c.imag
    cos_amps[0] = c[0].real
    sin_amps[0] = 0.0
    if N % 2 == 0:  # unpaired Nyquist mode
        cos_amps[-1] = c[-1].real
        sin_amps[-1] = 0.0
    keep = (np.abs(cos_amps) > 0) | (np.abs(sin_amps) > 0) | (freqs == 0)
    ge = 1.0 if holder_exponent is None and declared_class == HOLDER else holder_exponent
    return CoefficientSignal(freqs[keep], cos_amps[keep], sin_amps[keep],
                             holder_exponent=ge, declared_class=declared_class,
                             sample_count=N)


def lacunary_signal(gamma: float, levels: int = 13, amplitude: float = 1.0) -> CoefficientSignal:
    """Certifiable Hoelder-``gamma`` test signal: sum of 2^-gamma*k cos(2pi 2^k t).

    The lacunary construction has known exponent gamma, which makes it the
    reference input for smoothing-rate experiments.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must be in (0, 1]")
    ks = np.arange(levels)
    terms = [(2 ** int(k), amplitude * 2.0 ** (-gamma * k), 0.0) for k in ks]
    return fourier_signal(terms, holder_exponent=gamma, declared_class=HOLDER)


# ---------------------------------------------------------------------------
# Duffing parameters and field


@dataclass(frozen=True)
class DuffingParams:
    """Nonlinearity degree n (leading power 2n+1) and the 2n+1 signals p_0..p_2n."""

    n: int
    coefficients: tuple

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        coeffs = tuple(self.coefficients)
        if len(coeffs) != 2 * self.n + 1:
            raise ValueError("need exactly 2n+1 coefficient signals")
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def unforced(cls, n: int) -> "DuffingParams":
        return cls(n, tuple(zero_signal() for _ in range(2 * n + 1)))


def h0_energy(n: int, state):
    """Unperturbed energy x^(2n+2)/(2(n+1)) + y^2/2; zero only at the origin."""
    state = np.asarray(state, dtype=float)
    x = state[..., 0]
    y = state[..., 1]
    return x ** (2 * n + 2) / (2.0 * (n + 1)) + 0.5 * y ** 2


def duffing_field(params: DuffingParams) -> Callable:
    """RHS closure (t, u) -> u' accepting states of shape (..., 2).

    The time argument is scalar (ODE convention); coefficient signals are
    evaluated once per call and combined by Horner's rule.
    """
    n = params.n
    expo = 2 * n + 1
    sigs = params.coefficients

    def rhs(t, u):
        u = np.asarray(u, dtype=float)
        x = u[..., 0]
        vals = [float(s(t)) for s in sigs]
        acc = np.full_like(x, vals[-1])
        for v in vals[-2::-1]:
            acc = acc * x + v
        out = np.empty_like(u)
        out[..., 0] = u[..., 1]
        out[..., 1] = -x ** expo - acc
        return out

    return rhs


def duffing_field_jacobian(params: DuffingParams) -> Callable:
    """State Jacobian (t, u) -> d(u')/du of shape (..., 2, 2)."""
    n = params.n
    sigs = params.coefficients

    def jac(t, u):
        u = np.asarray(u, dtype=float)
        x = u[..., 0]
        dacc = np.zeros_like(x)
        for i in range(len(sigs) - 1, 0, -1):
            dacc = dacc * x + i * float(sigs[i](t))
        J = np.zeros(u.shape[:-1] + (2, 2))
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = -(2 * n + 1) * x ** (2 * n) - dacc
        return J

    return jac


# ---------------------------------------------------------------------------
# impulse catalog


def _const_fn(value: float) -> Callable:
    def f(x, y):
        return np.full_like(np.asarray(x, dtype=float), value)
    return f


def _zero_fn() -> Callable:
    return _const_fn(0.0)


def _poly_x_fn(coeffs) -> Callable:
    coeffs = np.asarray(coeffs, dtype=float)

    def f(x, y):
        x = np.asarray(x, dtype=float)
        if coeffs.size == 0:
            return np.zeros_like(x)
        return P.polyval(x, coeffs)

    return f


@dataclass(frozen=True)
class ImpulseEntry:
    """One impulse pair (I, J) acting on (x, y), with derivative closures.

    ``x_derivative(p, q)`` / ``y_derivative(p, q)`` return vectorized closures
    for the mixed partial of I resp. J; for catalog kinds these are exact,
    for custom entries without supplied closures they fall back to finite
    differences and set ``exact_derivatives`` to False.
    """

    kind: str
    x_increment: Callable
    y_increment: Callable
    _dx_table: Dict[Tuple[int, int], Callable]
    _dy_table: Dict[Tuple[int, int], Callable]
    exact_derivatives: bool
    params: dict

    def x_derivative(self, p: int, q: int) -> Callable:
        return self._deriv(self._dx_table, self.x_increment, p, q)

    def y_derivative(self, p: int, q: int) -> Callable:
        return self._deriv(self._dy_table, self.y_increment, p, q)

    def _deriv(self, table, base, p, q):
        if (p, q) in table:
            return table[(p, q)]
        return _fd_derivative(base, p, q)

    def increments(self, x, y):
        return self.x_increment(x, y), self.y_increment(x, y)

    def first_derivatives(self, x, y):
        return (self.x_derivative(1, 0)(x, y), self.x_derivative(0, 1)(x, y),
                self.y_derivative(1, 0)(x, y), self.y_derivative(0, 1)(x, y))

    def to_jump_map(self) -> JumpMap:
        def jump(u):
            u = np.asarray(u, dtype=float)
            dx, dy = self.increments(u[..., 0], u[..., 1])
            out = np.empty_like(u)
            out[..., 0] = dx
            out[..., 1] = dy
            return out

        def jacobian(u):
            u = np.asarray(u, dtype=float)
            ix, iy, jx, jy = self.first_derivatives(u[..., 0], u[..., 1])
            J = np.zeros(u.shape[:-1] + (2, 2))
            J[..., 0, 0] = ix
            J[..., 0, 1] = iy
            J[..., 1, 0] = jx
            J[..., 1, 1] = jy
            return J

        return JumpMap(jump=jump, jacobian=jacobian)


def _fd_derivative(base: Callable, p: int, q: int) -> Callable:
    if p == q == 0:
        return base
    # nested second-order central differences; accuracy degrades with order,
    # which is why custom entries without closures are flagged
    h = 10.0 ** (-7.0 / (p + q + 1))

    def d(f, axis):
        if axis == 0:
            return lambda x, y: (f(x + h, y) - f(x - h, y)) / (2.0 * h)
        return lambda x, y: (f(x, y + h) - f(x, y - h)) / (2.0 * h)

    f = base
    for _ in range(p):
        f = d(f, 0)
    for _ in range(q):
        f = d(f, 1)
    return f


def _constant_x_tables(alpha: float, j_x_derivs: Dict[int, Callable]):
    """Derivative tables for entries with constant I and J depending on x only."""
    dx = {(p, q): (_const_fn(alpha) if (p, q) == (0, 0) else _zero_fn())
          for p in range(6) for q in range(6 - p)}
    dy = {(p, q): (j_x_derivs.get(p, _zero_fn()) if q == 0 else _zero_fn())
          for p in range(6) for q in range(6 - p)}
    return dx, dy


def constant_shift(alpha: float) -> ImpulseEntry:
    """I = alpha, J = 0."""
    return polynomial_kick(alpha, ())


def polynomial_kick(alpha: float, beta: Sequence[float]) -> ImpulseEntry:
    """I = alpha, J = sum_m beta[m] x^m (degree at most n for the smallness test)."""
    beta = tuple(float(b) for b in beta)
    coeffs = np.asarray(beta, dtype=float)
    j_derivs = {}
    cur = coeffs
    for p in range(6):
        j_derivs[p] = _poly_x_fn(cur)
        cur = P.polyder(cur) if cur.size else cur
    dx, dy = _constant_x_tables(alpha, j_derivs)
    return ImpulseEntry(kind="poly-kick" if beta else "constant-shift",
                        x_increment=_const_fn(alpha),
                        y_increment=_poly_x_fn(coeffs),
                        _dx_table=dx, _dy_table=dy,
                        exact_derivatives=True,
                        params={"alpha": alpha, "beta": list(beta)})


def sinusoidal_kick(alpha: float, beta: float, phase: float = 0.0) -> ImpulseEntry:
    """I = alpha, J = beta*sin(x + phase); passes the smallness test only for n >= 5."""
    j_derivs = {p: (lambda p=p: (lambda x, y: beta * np.sin(np.asarray(x, dtype=float)
                                                            + phase + p * np.pi / 2.0)))()
                for p in range(6)}
    dx, dy = _constant_x_tables(alpha, j_derivs)
    return ImpulseEntry(kind="sin-kick",
                        x_increment=_const_fn(alpha),
                        y_increment=j_derivs[0],
                        _dx_table=dx, _dy_table=dy,
                        exact_derivatives=True,
                        params={"alpha": alpha, "beta": beta, "phase": phase})


def gaussian_kick(alpha: float, beta: float, power: int = 2) -> ImpulseEntry:
    """I = alpha, J = beta*exp(-x^power) with power 2 or 4; needs n >= 5."""
    if power not in (2, 4):
        raise ValueError("gaussian kick power must be 2 or 4")
    # d/dx [Q(x) e^(-x^p)] = (Q' - p x^(p-1) Q) e^(-x^p): polynomial prefactors
    # close under differentiation
    prefactors = [np.array([beta])]
    for _ in range(5):
        Q = prefactors[-1]
        dQ = P.polyder(Q) if Q.size > 1 else np.zeros(1)
        shift = np.concatenate([np.zeros(power - 1), -float(power) * Q])
        prefactors.append(P.polyadd(dQ, shift))

    def make(pidx):
        Q = prefactors[pidx]

        def f(x, y):
            x = np.asarray(x, dtype=float)
            return P.polyval(x, Q) * np.exp(-x ** power)

        return f

    j_derivs = {p: make(p) for p in range(6)}
    dx, dy = _constant_x_tables(alpha, j_derivs)
    return ImpulseEntry(kind="gauss-kick",
                        x_increment=_const_fn(alpha),
                        y_increment=j_derivs[0],
                        _dx_table=dx, _dy_table=dy,
                        exact_derivatives=True,
                        params={"alpha": alpha, "beta": beta, "power": power})


def damping_kick(c: float) -> ImpulseEntry:
    """I = 0, J = -c*y.  c = 2 is the velocity-reflection kick (area identity -2);
    other values break area preservation and serve as control scenarios."""
    table_dx = {(p, q): _zero_fn() for p in range(6) for q in range(6 - p)}
    dy = {(p, q): _zero_fn() for p in range(6) for q in range(6 - p)}

    def j(x, y):
        return -c * np.asarray(y, dtype=float) * np.ones_like(np.asarray(x, dtype=float))

    dy[(0, 0)] = j
    dy[(0, 1)] = _const_fn(-c)
    return ImpulseEntry(kind="damp-kick",
                        x_increment=_zero_fn(), y_increment=j,
                        _dx_table=table_dx, _dy_table=dy,
                        exact_derivatives=True, params={"c": c})


def custom_impulse(x_increment: Callable, y_increment: Callable,
                   dx_table: Optional[Dict[Tuple[int, int], Callable]] = None,
                   dy_table: Optional[Dict[Tuple[int, int], Callable]] = None) -> ImpulseEntry:
    """User-supplied impulse pair; derivative closures up to order 5 are expected
    for trustworthy smallness reports, finite differences otherwise."""
    dx_table = dict(dx_table or {})
    dy_table = dict(dy_table or {})
    needed = {(p, q) for p in range(6) for q in range(6 - p)} - {(0, 0)}
    exact = needed <= set(dx_table) and needed <= set(dy_table)
    dx_table.setdefault((0, 0), x_increment)
    dy_table.setdefault((0, 0), y_increment)
    return ImpulseEntry(kind="custom",
                        x_increment=x_increment, y_increment=y_increment,
                        _dx_table=dx_table, _dy_table=dy_table,
                        exact_derivatives=exact, params={})


# ---------------------------------------------------------------------------
# hypothesis checks


def area_identity(entry: ImpulseEntry, x, y):
    """dI/dx + dJ/dy + dI/dx*dJ/dy - dI/dy*dJ/dx.

    The jump map (x, y) -> (x, y) + (I, J) preserves area exactly when this
    equals 0 or -2 (Jacobian determinant +1 or -1).
    """
    ix, iy, jx, jy = entry.first_derivatives(x, y)
    return ix + jy + ix * jy - iy * jx


def energy_shell_points(n: int, h: float, angles: int = 64):
    """Points on the level set h0 = h, evenly sampled in a circle parameter."""
    phi = np.linspace(0.0, 2.0 * np.pi, angles, endpoint=False)
    u = np.cos(phi)
    v = np.sin(phi)
    xmax = (2.0 * (n + 1) * h) ** (1.0 / (2 * n + 2))
    x = xmax * np.sign(u) * np.abs(u) ** (1.0 / (n + 1))
    y = np.sqrt(2.0 * h) * v
    return x, y


@dataclass
class SmallnessReport:
    """Grid suprema of the weighted impulse derivatives.

    Each (p, q) with p+q <= 5 contributes
    ``sup |d^(p+q) I / dx^p dy^q| * h0^(p/(2n+2) + q/2)`` and
    ``sup |d^(p+q) J / dx^p dy^q| * h0^((p-n)/(2n+2) + q/2)``
    over a grid of energy shells.  ``bounded`` compares the overall maximum
    against the caller's ceiling (None when no ceiling was given).
    """

    n: int
    energy_floor: float
    ceiling: Optional[float]
    weighted_sup_x: Dict[Tuple[int, int], float]
    weighted_sup_y: Dict[Tuple[int, int], float]
    exact: bool

    @property
    def max_weighted(self) -> float:
        vals = list(self.weighted_sup_x.values()) + list(self.weighted_sup_y.values())
        return max(vals)

    @property
    def bounded(self) -> Optional[bool]:
        if self.ceiling is None:
            return None
        return self.max_weighted <= self.ceiling


def smallness_report(entry: ImpulseEntry, n: int, energy_floor: float = 100.0,
                     ceiling: Optional[float] = None, shells: int = 25,
                     angles: int = 64, decades: float = 6.0) -> SmallnessReport:
    """Evaluate the weighted-derivative suprema on log-spaced energy shells.

    The grid covers h0 in [energy_floor, 10^decades * energy_floor]; the
    underlying condition is asymptotic, so log coverage probes growth.
    """
    if energy_floor <= 0.0:
        raise ValueError("energy_floor must be positive")
    hs = energy_floor * np.logspace(0.0, decades, shells)
    xs, ys = [], []
    for h in hs:
        x, y = energy_shell_points(n, h, angles)
        xs.append(x)
        ys.append(y)
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    h0 = h0_energy(n, np.stack([x, y], axis=-1))
    two_n2 = 2.0 * n + 2.0
    sup_x, sup_y = {}, {}
    for p in range(6):
        for q in range(6 - p):
            wI = h0 ** (p / two_n2 + q / 2.0)
            wJ = h0 ** ((p - n) / two_n2 + q / 2.0)
            dI = np.abs(np.broadcast_to(entry.x_derivative(p, q)(x, y), x.shape))
            dJ = np.abs(np.broadcast_to(entry.y_derivative(p, q)(x, y), x.shape))
            sup_x[(p, q)] = float(np.max(dI * wI))
            sup_y[(p, q)] = float(np.max(dJ * wJ))
    return SmallnessReport(n=n, energy_floor=energy_floor, ceiling=ceiling,
                           weighted_sup_x=sup_x, weighted_sup_y=sup_y,
                           exact=entry.exact_derivatives)
