"""Time-1 map of a planar 1-periodic impulsive system.

The map is the composition flow(t_k..1) o jump_k o ... o jump_1 o flow(0..t_1)
in exactly that order.  Jacobians propagate through both kinds of factors:
variational equations along each flow segment, analytic (or finite-difference)
jump Jacobians at each impulse.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import DOP853

from .impulsive import (DEFAULT_ATOL, DEFAULT_RTOL, ImpulsiveSystem,
                        integrate_segment)

MAP_ESCAPE_RADIUS = 1e6


class Escaped(RuntimeError):
    """A map evaluation left the studied region before reaching t = 1."""

    def __init__(self, time: float, state):
        self.time = float(time)
        self.state = np.asarray(state, dtype=float)
        super().__init__(f"escaped at t={self.time:.6g}")


@dataclass
class JacobianRecord:
    matrix: np.ndarray
    determinant: float
    method: str
    factor_determinants: Optional[tuple] = None


@dataclass
class Orbit:
    points: np.ndarray          # (K+1, 2); K = N when no escape occurred
    escape_index: Optional[int]

    @property
    def escaped(self) -> bool:
        return self.escape_index is not None


class TimeOneMap:
    """Poincare map at period 1 for a system with impulses inside (0, 1)."""

    def __init__(self, system: ImpulsiveSystem, rtol: float = DEFAULT_RTOL,
                 atol: float = DEFAULT_ATOL, escape_radius: float = MAP_ESCAPE_RADIUS):
        if system.state_dim != 2:
            raise ValueError("the time-1 map is built for planar systems")
        if not system.schedule.in_unit_form():
            raise ValueError(
                "impulse times must satisfy 0 < t1 < ... < tk < 1 with period 1")
        self.system = system
        self.rtol = float(rtol)
        self.atol = float(atol)
        self.escape_radius = float(escape_radius)
        # segment boundaries 0, t1, ..., tk, 1 shared by every evaluation
        self._boundaries = (0.0,) + tuple(system.schedule.base_times) + (1.0,)

    # -- single-point paths -------------------------------------------------

    def evaluate(self, p) -> np.ndarray:
        """Image of p under the time-1 map; raises Escaped on early exit."""
        u = np.asarray(p, dtype=float)
        if float(np.linalg.norm(u)) >= self.escape_radius:
            raise Escaped(0.0, u)
        bounds = self._boundaries
        for i in range(len(bounds) - 1):
            res = integrate_segment(self.system.field, bounds[i], bounds[i + 1], u,
                                    rtol=self.rtol, atol=self.atol,
                                    escape_radius=self.escape_radius, dense=False)
            if not res.reached:
                raise Escaped(res.t_final, res.u_final)
            u = res.u_final
            if i < len(bounds) - 2:
                u = u + self.system.jumps[i].increment(u)
        return u

    def __call__(self, p) -> np.ndarray:
        return self.evaluate(p)

    def iterate(self, p, N: int) -> Orbit:
        """Orbit of N map applications; truncation by escape is recorded."""
        if N < 0:
            raise ValueError("N must be nonnegative")
        pts = [np.asarray(p, dtype=float)]
        for k in range(N):
            try:
                pts.append(self.evaluate(pts[-1]))
            except Escaped:
                return Orbit(np.array(pts), escape_index=k)
        return Orbit(np.array(pts), escape_index=None)

    # -- Jacobians ----------------------------------------------------------

    def _field_jacobian(self) -> Callable:
        if self.system.field_jacobian is not None:
            return self.system.field_jacobian
        field = self.system.field

        def fd_jac(t, u, h=1e-7):
            J = np.empty((2, 2))
            for i in range(2):
                e = np.zeros(2)
                e[i] = h * max(1.0, abs(u[i]))
                J[:, i] = (np.asarray(field(t, u + e)) - np.asarray(field(t, u - e))) \
                    / (2.0 * e[i])
            return J

        return fd_jac

    def jacobian(self, p, method: str = "variational",
                 fd_step: float = 1e-6) -> JacobianRecord:
        """Derivative of the map at p.

        The variational method integrates the 2x2 variational equations along
        each flow segment (seeded with the identity, so each segment yields its
        own monodromy factor) and multiplies by I + DL at each impulse.
        """
        if method == "finite-difference":
            return self._jacobian_fd(p, fd_step)
        if method != "variational":
            raise ValueError("method must be 'variational' or 'finite-difference'")
        u = np.asarray(p, dtype=float)
        field = self.system.field
        fjac = self._field_jacobian()

        def augmented(t, w):
            uu = w[:2]
            J = w[2:].reshape(2, 2)
            du = np.asarray(field(t, uu), dtype=float)
            dJ = np.asarray(fjac(t, uu), dtype=float) @ J
            return np.concatenate([du, dJ.ravel()])

        total = np.eye(2)
        factors = []
        bounds = self._boundaries
        for i in range(len(bounds) - 1):
            w0 = np.concatenate([u, np.eye(2).ravel()])
            res = integrate_segment(augmented, bounds[i], bounds[i + 1], w0,
                                    rtol=self.rtol, atol=self.atol,
                                    escape_radius=1e150, dense=False)
            if not res.reached:
                raise Escaped(res.t_final, res.u_final[:2])
            u = res.u_final[:2]
            if float(np.linalg.norm(u)) >= self.escape_radius:
                raise Escaped(bounds[i + 1], u)
            M = res.u_final[2:].reshape(2, 2)
            factors.append(float(np.linalg.det(M)))
            total = M @ total
            if i < len(bounds) - 2:
                jump = self.system.jumps[i]
                D = np.eye(2) + jump.jacobian_at(u)
                factors.append(float(np.linalg.det(D)))
                u = u + jump.increment(u)
                total = D @ total
        return JacobianRecord(matrix=total, determinant=float(np.linalg.det(total)),
                              method="variational",
                              factor_determinants=tuple(factors))

    def _jacobian_fd(self, p, h: float) -> JacobianRecord:
        p = np.asarray(p, dtype=float)
        J = np.empty((2, 2))
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            J[:, i] = (self.evaluate(p + e) - self.evaluate(p - e)) / (2.0 * h)
        return JacobianRecord(matrix=J, determinant=float(np.linalg.det(J)),
                              method="finite-difference")

    # -- batched paths (vectorized field required) ---------------------------

    def evaluate_many(self, P: np.ndarray, alive: Optional[np.ndarray] = None):
        """One map application to a batch of states.

        Points whose radius crosses the escape threshold freeze where they are
        and are dropped from the returned alive mask.  Requires the system
        field to accept (M, 2) state blocks.
        """
        P = np.array(P, dtype=float)
        M = P.shape[0]
        alive = np.ones(M, dtype=bool) if alive is None else alive.copy()
        bounds = self._boundaries
        for i in range(len(bounds) - 1):
            P, alive = _advance_batch(self.system.field, bounds[i], bounds[i + 1],
                                      P, alive, self.rtol, self.atol,
                                      self.escape_radius)
            if i < len(bounds) - 2 and alive.any():
                sub = P[alive]
                P[alive] = sub + self.system.jumps[i].increment(sub)
        return P, alive

    def iterate_many(self, P: np.ndarray, N: int, record: bool = True):
        """Batched orbits: (N+1, M, 2) point array and per-point escape index.

        Escaped points hold their final value from the escape iterate onward;
        escape_index is -1 for points that never escaped.
        """
        P = np.array(P, dtype=float)
        M = P.shape[0]
        alive = np.ones(M, dtype=bool)
        escape_index = np.full(M, -1, dtype=int)
        orbits = np.empty((N + 1, M, 2)) if record else None
        if record:
            orbits[0] = P
        for k in range(N):
            P, alive_new = self.evaluate_many(P, alive)
            escape_index[alive & ~alive_new] = k
            alive = alive_new
            if record:
                orbits[k + 1] = P
            if not alive.any():
                if record:
                    orbits[k + 2:] = P
                break
        return (orbits if record else P), escape_index


def _advance_batch(field, t0: float, t1: float, P: np.ndarray, alive: np.ndarray,
                   rtol: float, atol: float, escape_radius: float):
    """Advance a batch of planar states from t0 to t1 with shared adaptive steps.

    Escape is checked after every accepted step; newly escaped points freeze
    (their derivatives are masked to zero) and the stepper restarts so the
    masking takes effect cleanly.
    """
    M = P.shape[0]
    r2 = escape_radius * escape_radius
    state = P.copy()
    alive = alive.copy()
    dead0 = ~alive
    r0 = (state * state).sum(axis=1)
    newly = alive & (r0 >= r2)
    if newly.any():
        alive &= ~newly
    t_cur = t0
    restarts = 0
    while alive.any():
        mask_dead = ~alive

        def rhs(t, w, mask_dead=mask_dead):
            V = w.reshape(M, 2)
            out = np.asarray(field(t, V), dtype=float)
            out[mask_dead] = 0.0
            return out.ravel()

        solver = DOP853(rhs, t_cur, state.ravel(), t1, rtol=rtol, atol=atol)
        interrupted = False
        while solver.status == "running":
            solver.step()
            if solver.status == "failed":
                break
            V = solver.y.reshape(M, 2)
            rr = (V * V).sum(axis=1)
            newly = alive & (rr >= r2)
            if newly.any():
                alive &= ~newly
                state = V.copy()
                t_cur = solver.t
                interrupted = True
                break
        if interrupted:
            if t_cur >= t1 or not alive.any():
                state[dead0] = P[dead0]
                return state, alive
            restarts += 1
            if restarts > M + 2:
                alive[:] = False
                break
            continue
        if solver.status == "failed":
            # step-size underflow without a radius crossing: blame the point
            # closest to blow-up, freeze it, and push on with the rest
            state = solver.y.reshape(M, 2).copy()
            t_cur = solver.t
            rr = (state * state).sum(axis=1)
            rr[~alive] = -1.0
            alive[int(np.argmax(rr))] = False
            restarts += 1
            if restarts > M + 2:
                alive[:] = False
                break
            continue
        state = solver.y.reshape(M, 2).copy()
        break
    state[dead0] = P[dead0]
    return state, alive
