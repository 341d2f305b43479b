"""Impulsive ODE engine.

Solutions of ``u' = F(t, u)`` that jump by ``u -> u + L_j(u)`` at prescribed
times.  Trajectories are left continuous at jump instants: the stored value at
an impulse time is the pre-jump state, and the post-jump state starts the next
flow segment.  Forward extension integrates to the next impulse time and
applies the jump; backward extension integrates to the previous impulse time
and solves the jump equation ``u_post = v + L_j(v)`` for the pre-jump value.
Both directions track the maximal interval actually achieved and why the
extension stopped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp as _ode_ivp

DEFAULT_RTOL = 3e-11
DEFAULT_ATOL = 1e-13
DEFAULT_ESCAPE_RADIUS = 1e8

# relative slack for matching a time against a schedule entry
_TIME_RTOL = 1e-9


def _near(a: float, b: float) -> bool:
    return abs(a - b) <= _TIME_RTOL * max(1.0, abs(a), abs(b))


class TerminationReason(Enum):
    HORIZON = "horizon-reached"
    ESCAPE = "escape"
    JUMP_UNSOLVABLE = "jump-equation-unsolvable"
    ADJACENCY = "adjacency"


@dataclass(frozen=True)
class ImpulseSchedule:
    """Impulse times ``base_times[i] + m*period`` for all integers m.

    ``base_times`` must be strictly increasing inside ``(0, period]``.  The
    j-th impulse inherits the jump map of its base index, so jump maps repeat
    with the schedule.
    """

    base_times: tuple
    period: float = 1.0

    def __post_init__(self):
        times = tuple(float(t) for t in self.base_times)
        object.__setattr__(self, "base_times", times)
        if self.period <= 0.0:
            raise ValueError("schedule period must be positive")
        if not times:
            raise ValueError("schedule needs at least one impulse time")
        if not all(0.0 < t <= self.period for t in times):
            raise ValueError("impulse times must lie in (0, period]")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("impulse times must be strictly increasing")

    @property
    def k(self) -> int:
        return len(self.base_times)

    def in_unit_form(self) -> bool:
        """True when the schedule is 1-periodic with all times inside (0, 1)."""
        return self.period == 1.0 and self.base_times[-1] < 1.0

    def _times_near(self, t: float):
        """Impulse times within one period around t, with base indices."""
        shift = math.floor(t / self.period)
        out = []
        for m in (shift - 1, shift, shift + 1):
            for i, b in enumerate(self.base_times):
                out.append((b + m * self.period, i))
        return out

    def index_at(self, t: float) -> Optional[int]:
        """Base index of the impulse at time t, or None if t is not one."""
        for tj, i in self._times_near(t):
            if _near(tj, t):
                return i
        return None

    def next_after(self, t: float):
        """(time, base index) of the first impulse strictly after t."""
        best = None
        for tj, i in self._times_near(t):
            if tj > t and not _near(tj, t):
                if best is None or tj < best[0]:
                    best = (tj, i)
        if best is None:  # only possible through pathological rounding
            return self.next_after(t + 0.5 * self.period)
        return best

    def prev_before(self, t: float):
        """(time, base index) of the last impulse strictly before t."""
        best = None
        for tj, i in self._times_near(t):
            if tj < t and not _near(tj, t):
                if best is None or tj > best[0]:
                    best = (tj, i)
        if best is None:
            return self.prev_before(t - 0.5 * self.period)
        return best


@dataclass(frozen=True)
class JumpMap:
    """State-dependent jump increment u -> L(u) with optional Jacobian dL/du."""

    jump: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def increment(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(np.asarray(self.jump(u), dtype=float), u.shape).copy()

    def jacobian_at(self, u: np.ndarray, fd_step: float = 1e-7) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(u), dtype=float)
        m = u.size
        J = np.empty((m, m))
        for i in range(m):
            h = fd_step * max(1.0, abs(u[i]))
            up = u.copy()
            um = u.copy()
            up[i] += h
            um[i] -= h
            J[:, i] = (self.increment(up) - self.increment(um)) / (2.0 * h)
        return J


def zero_jump() -> JumpMap:
    return JumpMap(jump=lambda u: np.zeros_like(u),
                   jacobian=lambda u: np.zeros((np.size(u), np.size(u))))


@dataclass(frozen=True)
class ImpulsiveSystem:
    """Vector field plus a periodic impulse schedule and its jump maps."""

    field: Callable[[float, np.ndarray], np.ndarray]
    schedule: ImpulseSchedule
    jumps: tuple
    state_dim: int
    field_jacobian: Optional[Callable[[float, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        object.__setattr__(self, "jumps", tuple(self.jumps))
        if len(self.jumps) != self.schedule.k:
            raise ValueError("need exactly one jump map per scheduled impulse time")


def apply_jump(u_pre: np.ndarray, jump: JumpMap) -> np.ndarray:
    """Post-jump state u + L(u)."""
    u_pre = np.asarray(u_pre, dtype=float)
    return u_pre + jump.increment(u_pre)


def solve_jump_equation(u_post: np.ndarray, jump: JumpMap,
                        guess: Optional[np.ndarray] = None,
                        tol: float = 1e-12, max_iter: int = 50) -> Optional[np.ndarray]:
    """Pre-jump state v with v + L(v) = u_post, or None if Newton fails.

    Damped Newton iteration seeded at ``guess`` (default: u_post).  Only local
    convergence is attempted; a None return means backward extension stops at
    this impulse time.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    u_post = np.asarray(u_post, dtype=float)
    v = np.array(u_post if guess is None else guess, dtype=float)
    m = v.size
    eye = np.eye(m)

    def residual(w):
        return w + jump.increment(w) - u_post

    f = residual(v)
    fnorm = float(np.linalg.norm(f))
    for _ in range(max_iter):
        if fnorm <= tol:
            return v
        J = eye + jump.jacobian_at(v)
        try:
            step = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        accepted = False
        for _ in range(25):
            v_new = v + lam * step
            f_new = residual(v_new)
            fn_new = float(np.linalg.norm(f_new))
            if math.isfinite(fn_new) and (fn_new < fnorm * (1.0 - 0.25 * lam) or fn_new <= tol):
                v, f, fnorm = v_new, f_new, fn_new
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            return None
    return v if fnorm <= tol else None


@dataclass
class IntegrationResult:
    """Outcome of one flow segment.

    ``status`` is "reached" (landed exactly on the requested endpoint) or
    "escaped" (stopped early at the last valid time; ``hit_radius`` tells
    whether the escape threshold was actually crossed or the step size
    underflowed first).
    """

    t_final: float
    u_final: np.ndarray
    status: str
    hit_radius: bool
    sol: object = None  # scipy OdeSolution when dense output was requested

    @property
    def reached(self) -> bool:
        return self.status == "reached"


def integrate_segment(field, t_from: float, t_to: float, u0,
                      rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                      escape_radius: float = DEFAULT_ESCAPE_RADIUS,
                      dense: bool = True) -> IntegrationResult:
    """Integrate the continuous equation between two times (either direction).

    Uses an adaptive 8th-order embedded Runge-Kutta pair with dense output.
    The integrator lands exactly on ``t_to``; it never interpolates past the
    endpoint.  Escape past ``escape_radius`` (in the Euclidean norm) is a
    terminal event; step-size underflow near a finite-time blow-up is reported
    as an escape at the last valid time.
    """
    if rtol <= 0.0 or atol <= 0.0:
        raise ValueError("tolerances must be positive")
    if escape_radius <= 0.0:
        raise ValueError("escape_radius must be positive")
    if t_from == t_to:
        raise ValueError("empty integration span")
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    if float(np.linalg.norm(u0)) >= escape_radius:
        raise ValueError("initial state already outside the escape radius")

    r2 = escape_radius * escape_radius

    def crossed(t, u):
        return float(u @ u) - r2

    crossed.terminal = True
    crossed.direction = 1

    sol = _ode_ivp(field, (t_from, t_to), u0, method="DOP853",
                   rtol=rtol, atol=atol, dense_output=dense, events=crossed)
    if sol.status == 1:  # escape event
        t_star = float(sol.t_events[0][0])
        u_star = np.asarray(sol.y_events[0][0], dtype=float)
        return IntegrationResult(t_star, u_star, "escaped", True,
                                 sol.sol if dense else None)
    if sol.status == 0:
        return IntegrationResult(float(sol.t[-1]), sol.y[:, -1].copy(), "reached",
                                 False, sol.sol if dense else None)
    # integrator gave up (step underflow); report last accepted point
    t_last = float(sol.t[-1])
    u_last = sol.y[:, -1].copy()
    hit = float(np.linalg.norm(u_last)) >= 0.99 * escape_radius
    return IntegrationResult(t_last, u_last, "escaped", hit,
                             sol.sol if dense else None)


@dataclass(frozen=True)
class JumpRecord:
    time: float
    pre: np.ndarray
    post: np.ndarray


@dataclass(frozen=True)
class Endpoint:
    """One end of a maximal interval.

    ``closed`` says whether the endpoint time carries a trajectory value
    (``value``); an open endpoint (e.g. an unsolvable jump equation on the
    left) has no value at the endpoint time itself.
    """

    time: float
    closed: bool
    reason: TerminationReason
    value: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Segment:
    t_lo: float
    t_hi: float
    sol: object  # dense OdeSolution covering [t_lo, t_hi]


@dataclass
class PiecewiseTrajectory:
    """A solution stored as flow segments separated by jump records.

    Evaluation is left continuous: at an interior impulse time the value is
    the pre-jump state.  At the initial time ``tau`` the value is the supplied
    initial condition, which by convention is the *post*-jump state when tau
    itself is an impulse time.
    """

    tau: float
    u0: np.ndarray
    segments: list
    jump_records: list
    left: Endpoint
    right: Endpoint

    @property
    def interval(self):
        return (self.left.time, self.right.time)

    def _eval_scalar(self, t: float) -> np.ndarray:
        if t == self.tau:
            return self.u0.copy()
        for rec in self.jump_records:
            if t == rec.time:
                return np.array(rec.pre, dtype=float)
        if t == self.left.time:
            if not self.left.closed:
                raise ValueError("trajectory endpoint is open at t=%r" % t)
            return np.array(self.left.value, dtype=float)
        if t == self.right.time:
            if not self.right.closed:
                raise ValueError("trajectory endpoint is open at t=%r" % t)
            return np.array(self.right.value, dtype=float)
        if not (self.left.time < t < self.right.time):
            raise ValueError("time %r outside the maximal interval %r"
                             % (t, self.interval))
        # endpoint times were handled above, so (t_lo, t_hi] ownership is
        # exactly the left-continuity convention
        for seg in self.segments:
            if seg.t_lo < t <= seg.t_hi:
                return np.asarray(seg.sol(t), dtype=float)
        raise ValueError("time %r not covered by any segment" % t)

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if t_arr.ndim == 0:
            return self._eval_scalar(float(t_arr))
        return np.stack([self._eval_scalar(float(tt)) for tt in t_arr.ravel()]
                        ).reshape(t_arr.shape + (self.u0.size,))


def _forward_extension(system, tau, u0, t_end, rtol, atol, escape_radius,
                       segments, records):
    t_cur = tau
    u = u0
    while t_cur < t_end and not _near(t_cur, t_end):
        t_next, idx = system.schedule.next_after(t_cur)
        if t_next > t_end or _near(t_next, t_end):
            target, at_impulse = t_end, False
        else:
            target, at_impulse = t_next, True
        res = integrate_segment(system.field, t_cur, target, u,
                                rtol=rtol, atol=atol, escape_radius=escape_radius)
        segments.append(Segment(t_cur, res.t_final, res.sol))
        if not res.reached:
            reason = (TerminationReason.ESCAPE if res.hit_radius
                      else TerminationReason.ADJACENCY)
            return Endpoint(res.t_final, True, reason, res.u_final)
        u = res.u_final
        t_cur = target
        if at_impulse:
            pre = u
            post = apply_jump(pre, system.jumps[idx])
            records.append(JumpRecord(t_next, pre, post))
            u = post
    return Endpoint(t_end, True, TerminationReason.HORIZON, u)


def _backward_extension(system, tau, u0, t_start, rtol, atol, escape_radius,
                        jump_tol, max_jump_iter, segments, records):
    t_cur = tau
    u = u0
    idx0 = system.schedule.index_at(tau)
    if idx0 is not None:
        # initial time sits on an impulse: u0 is the post-jump value, so the
        # pre-jump value at tau must be recovered before flowing left
        v = solve_jump_equation(u, system.jumps[idx0], tol=jump_tol,
                                max_iter=max_jump_iter)
        if v is None:
            return Endpoint(tau, False, TerminationReason.JUMP_UNSOLVABLE)
        records.append(JumpRecord(tau, v, u))
        u = v
    while t_cur > t_start and not _near(t_cur, t_start):
        t_prev, idx = system.schedule.prev_before(t_cur)
        if t_prev < t_start or _near(t_prev, t_start):
            target, at_impulse = t_start, _near(t_prev, t_start)
            idx = idx if at_impulse else None
        else:
            target, at_impulse = t_prev, True
        res = integrate_segment(system.field, t_cur, target, u,
                                rtol=rtol, atol=atol, escape_radius=escape_radius)
        segments.append(Segment(res.t_final, t_cur, res.sol))
        if not res.reached:
            reason = (TerminationReason.ESCAPE if res.hit_radius
                      else TerminationReason.ADJACENCY)
            return Endpoint(res.t_final, True, reason, res.u_final)
        u = res.u_final  # right limit at the impulse time
        t_cur = target
        if at_impulse:
            v = solve_jump_equation(u, system.jumps[idx], tol=jump_tol,
                                    max_iter=max_jump_iter)
            if v is None:
                return Endpoint(t_cur, False, TerminationReason.JUMP_UNSOLVABLE)
            records.append(JumpRecord(t_cur, v, u))
            u = v
    return Endpoint(t_start, True, TerminationReason.HORIZON, u)


def solve_ivp(system: ImpulsiveSystem, tau: float, u0, t_span,
              rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
              escape_radius: float = DEFAULT_ESCAPE_RADIUS,
              jump_tol: float = 1e-12, max_jump_iter: int = 50) -> PiecewiseTrajectory:
    """Maximal solution through ``u(tau+) = u0`` within ``t_span``.

    Forward extension alternates flow segments with jump applications;
    backward extension alternates flow segments with jump-equation solves.
    When tau is itself an impulse time the jump there is *not* applied going
    forward (u0 is the post-jump state) but must be inverted going backward.
    """
    a, b = float(t_span[0]), float(t_span[1])
    if not (a <= tau <= b):
        raise ValueError("t_span must contain the initial time")
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))

    fwd_segments, fwd_records = [], []
    bwd_segments, bwd_records = [], []
    if b > tau and not _near(b, tau):
        right = _forward_extension(system, tau, u0, b, rtol, atol,
                                   escape_radius, fwd_segments, fwd_records)
    else:
        right = Endpoint(tau, True, TerminationReason.HORIZON, u0)
    if a < tau and not _near(a, tau):
        left = _backward_extension(system, tau, u0, a, rtol, atol,
                                   escape_radius, jump_tol, max_jump_iter,
                                   bwd_segments, bwd_records)
    else:
        left = Endpoint(tau, True, TerminationReason.HORIZON, u0)

    segments = sorted(bwd_segments + fwd_segments, key=lambda s: s.t_lo)
    records = sorted(bwd_records + fwd_records, key=lambda r: r.time)
    return PiecewiseTrajectory(tau=tau, u0=u0, segments=segments,
                               jump_records=records, left=left, right=right)
