"""Numerical witnesses for twist, rotation, invariant circles, and boundedness.

Rotation numbers use weighted Birkhoff averaging: angle increments are
averaged against a smooth bump weight that vanishes to all orders at the
window ends, which converges far faster than a plain average on quasi-periodic
orbits.  Circle detection fits the lifted orbit with a truncated Fourier
series in the angle and judges the fit residual.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .actionangle import ReferenceChart, from_action_angle, rescale_in, rescale_out, \
    to_action_angle, wrap_half
from .poincare import Escaped, Orbit, TimeOneMap


def _orbit_of(map_like, p0, N: int) -> Orbit:
    """Orbit under a TimeOneMap or any planar callable (for test stubs)."""
    if hasattr(map_like, "iterate"):
        return map_like.iterate(p0, N)
    pts = [np.asarray(p0, dtype=float)]
    for k in range(N):
        try:
            nxt = map_like(pts[-1])
        except Escaped:
            return Orbit(np.array(pts), escape_index=k)
        if nxt is None:
            return Orbit(np.array(pts), escape_index=k)
        pts.append(np.asarray(nxt, dtype=float))
    return Orbit(np.array(pts), escape_index=None)


def _orbits_for_seeds(map_like, seeds, N: int):
    """One orbit per seed; runs through the batched evaluator when available."""
    seeds = np.asarray(seeds, dtype=float).reshape(-1, 2)
    if hasattr(map_like, "iterate_many"):
        orbits, escape_index = map_like.iterate_many(seeds, N)
        out = []
        for m in range(seeds.shape[0]):
            e = int(escape_index[m])
            if e < 0:
                out.append(Orbit(orbits[:, m, :].copy(), escape_index=None))
            else:
                out.append(Orbit(orbits[:e + 1, m, :].copy(), escape_index=e))
        return out
    return [_orbit_of(map_like, seed, N) for seed in seeds]


def _lift_angles(chart: ReferenceChart, A: float, points: np.ndarray):
    """Actions and angles of orbit points, truncated before any origin hit."""
    X, Y = rescale_in(A, chart.n, points[:, 0], points[:, 1])
    E = X ** (2 * chart.n + 2) + (chart.n + 1.0) * Y ** 2
    bad = np.nonzero(E <= 0.0)[0]
    cut = int(bad[0]) if bad.size else points.shape[0]
    lam, theta = to_action_angle(chart, X[:cut], Y[:cut])
    return np.atleast_1d(lam), np.atleast_1d(theta), cut == points.shape[0]


def birkhoff_weights(count: int) -> np.ndarray:
    """Bump weights exp(-1/(tau(1-tau))) at midpoints of [0, 1]."""
    tau = (np.arange(count) + 0.5) / count
    return np.exp(-1.0 / (tau * (1.0 - tau)))


def _weighted_mean(deltas: np.ndarray) -> float:
    w = birkhoff_weights(deltas.size)
    return float(np.sum(w * deltas) / np.sum(w))


@dataclass
class RotationEstimate:
    omega: float                   # revolutions per map iterate, in [0, 1)
    iterates_used: int
    convergence_indicator: float   # half-sample vs full-sample difference
    complete: bool                 # False when the orbit escaped or hit the origin


def _estimate_from_angles(theta: np.ndarray, complete: bool) -> RotationEstimate:
    """Weighted Birkhoff estimate from a lifted angle sequence.

    Increments are wrapped to the representative nearest their median before
    averaging, which keeps rotations near 0 (mod 1) well defined.
    """
    raw = np.mod(np.diff(theta), 1.0)
    center = float(np.median(raw))
    deltas = center + wrap_half(raw - center)
    om_full = _weighted_mean(deltas)
    om_half = _weighted_mean(deltas[:deltas.size // 2])
    indicator = abs(float(wrap_half(om_full - om_half)))
    return RotationEstimate(omega=float(np.mod(om_full, 1.0)),
                            iterates_used=int(deltas.size),
                            convergence_indicator=indicator,
                            complete=complete)


def _estimate_from_orbit(orbit: Orbit, chart: ReferenceChart, A: float) -> RotationEstimate:
    lam, theta, clean = _lift_angles(chart, A, orbit.points)
    if theta.size < 16:
        raise ValueError("orbit left the chart domain almost immediately")
    return _estimate_from_angles(theta, bool(clean and not orbit.escaped))


def rotation_number(map_like, chart: ReferenceChart, A: float, p0, N: int) -> RotationEstimate:
    """Weighted Birkhoff estimate of the rotation number along one orbit."""
    if N < 16:
        raise ValueError("need at least 16 iterates for a rotation estimate")
    return _estimate_from_orbit(_orbit_of(map_like, p0, N), chart, A)


@dataclass
class TwistProfile:
    actions: np.ndarray
    omegas: np.ndarray             # NaN where the estimate failed
    estimates: list
    noise: float
    monotone: Optional[bool]       # strictly increasing up to estimator noise

    def rows(self):
        return list(zip(self.actions.tolist(), self.omegas.tolist()))


def twist_profile(map_like, chart: ReferenceChart, A: float,
                  seeds: Sequence, N: int) -> TwistProfile:
    """Rotation number against action along a ladder of seeds.

    Per-seed failures are recorded (NaN omega) and the profile is still
    returned.  Monotonicity compares consecutive wrapped differences against
    an estimator-noise floor.
    """
    seeds = np.asarray(seeds, dtype=float).reshape(-1, 2)
    orbits = _orbits_for_seeds(map_like, seeds, N)
    actions, omegas, estimates = [], [], []
    for seed, orbit in zip(seeds, orbits):
        X, Y = rescale_in(A, chart.n, seed[0], seed[1])
        lam0, _ = to_action_angle(chart, X, Y)
        actions.append(float(lam0))
        try:
            est = _estimate_from_orbit(orbit, chart, A)
        except ValueError:
            estimates.append(None)
            omegas.append(np.nan)
            continue
        estimates.append(est)
        omegas.append(est.omega if est.complete else np.nan)
    actions = np.asarray(actions)
    omegas = np.asarray(omegas)
    good = ~np.isnan(omegas)
    indicators = [e.convergence_indicator for e in estimates if e is not None]
    noise = max(3.0 * max(indicators, default=0.0), 1e-12)
    if good.sum() >= 2:
        diffs = wrap_half(np.diff(omegas[good]))
        monotone = bool(np.all(diffs > noise))
    else:
        monotone = None
    return TwistProfile(actions=actions, omegas=omegas, estimates=estimates,
                        noise=noise, monotone=monotone)


@dataclass
class SweepReport:
    grid: np.ndarray               # (M, 2) initial conditions
    horizon: int
    escape_index: np.ndarray       # (M,) iterate of escape, -1 if bounded
    max_radius: np.ndarray         # (M,) max |(x, y)| over section times

    @property
    def bounded_mask(self) -> np.ndarray:
        return self.escape_index < 0

    @property
    def fraction_bounded(self) -> float:
        return float(np.mean(self.bounded_mask))

    @property
    def max_radius_bounded(self) -> float:
        mask = self.bounded_mask
        return float(np.max(self.max_radius[mask])) if mask.any() else float("nan")

    def to_dict(self) -> dict:
        return {
            "horizon": int(self.horizon),
            "points": int(self.grid.shape[0]),
            "fraction_bounded": self.fraction_bounded,
            "max_radius_bounded": self.max_radius_bounded,
            "outcomes": [
                {"x0": float(x), "y0": float(y),
                 "bounded": bool(e < 0),
                 "max_radius": float(r),
                 "escape_iterate": (None if e < 0 else int(e))}
                for (x, y), e, r in zip(self.grid, self.escape_index, self.max_radius)
            ],
        }


def boundedness_sweep(map_like, grid, horizon: int,
                      escape_radius: Optional[float] = None) -> SweepReport:
    """Iterate every grid point up to the horizon, recording max radius or escape.

    Escape is an outcome, not an error.  TimeOneMap inputs run through the
    batched evaluator; plain callables fall back to a per-point loop.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    P0 = np.asarray(grid, dtype=float).reshape(-1, 2)
    M = P0.shape[0]
    if isinstance(map_like, TimeOneMap):
        if escape_radius is not None and escape_radius != map_like.escape_radius:
            map_like = TimeOneMap(map_like.system, rtol=map_like.rtol,
                                  atol=map_like.atol, escape_radius=escape_radius)
        P = P0.copy()
        alive = np.ones(M, dtype=bool)
        escape_index = np.full(M, -1, dtype=int)
        max_radius = np.sqrt((P * P).sum(axis=1))
        for k in range(horizon):
            P, alive_new = map_like.evaluate_many(P, alive)
            escape_index[alive & ~alive_new] = k
            alive = alive_new
            if alive.any():
                r = np.sqrt((P[alive] * P[alive]).sum(axis=1))
                max_radius[alive] = np.maximum(max_radius[alive], r)
            else:
                break
        return SweepReport(grid=P0, horizon=horizon,
                           escape_index=escape_index, max_radius=max_radius)

    radius = escape_radius if escape_radius is not None else np.inf
    escape_index = np.full(M, -1, dtype=int)
    max_radius = np.zeros(M)
    for m in range(M):
        p = P0[m]
        max_radius[m] = float(np.linalg.norm(p))
        for k in range(horizon):
            try:
                p = np.asarray(map_like(p), dtype=float)
            except Escaped:
                escape_index[m] = k
                break
            r = float(np.linalg.norm(p))
            if r >= radius:
                escape_index[m] = k
                break
            max_radius[m] = max(max_radius[m], r)
    return SweepReport(grid=P0, horizon=horizon,
                       escape_index=escape_index, max_radius=max_radius)


@dataclass
class CircleVerdict:
    kind: str                      # "circle" | "chaotic-or-escaping" | "undecided"
    residual: Optional[float]
    rotation: Optional[RotationEstimate]
    mean_action: Optional[float]
    fourier_cos: Optional[np.ndarray]
    fourier_sin: Optional[np.ndarray]
    points_used: int

    def curve(self, theta):
        """Fitted invariant curve lam(theta)."""
        if self.fourier_cos is None:
            raise ValueError("no fitted curve available")
        theta = np.asarray(theta, dtype=float)
        ks = np.arange(1, self.fourier_cos.size + 1)
        ang = 2.0 * np.pi * np.multiply.outer(theta, ks)
        out = self.mean_action + np.cos(ang) @ self.fourier_cos \
            + np.sin(ang) @ self.fourier_sin
        return out if theta.ndim else float(out)


def _verdict_from_orbit(orbit: Orbit, chart: ReferenceChart, A: float, N: int,
                        residual_tol: float, fourier_order: int,
                        indicator_tol: float) -> CircleVerdict:
    lam, theta, clean = _lift_angles(chart, A, orbit.points)
    used = int(theta.size)
    if used < N // 4:
        return CircleVerdict(kind="undecided", residual=None, rotation=None,
                             mean_action=None, fourier_cos=None, fourier_sin=None,
                             points_used=used)
    ks = np.arange(1, fourier_order + 1)
    ang = 2.0 * np.pi * theta[:, None] * ks[None, :]
    design = np.concatenate([np.ones((used, 1)), np.cos(ang), np.sin(ang)], axis=1)
    coeffs, *_ = np.linalg.lstsq(design, lam, rcond=None)
    residual = float(np.sqrt(np.mean((design @ coeffs - lam) ** 2)))
    est = None
    if used >= 16:
        est = _estimate_from_angles(theta, bool(clean and not orbit.escaped))
    escaped = orbit.escaped or not clean
    if not escaped and residual <= residual_tol and est is not None \
            and est.convergence_indicator <= indicator_tol:
        kind = "circle"
    elif escaped or residual > 10.0 * residual_tol:
        kind = "chaotic-or-escaping"
    else:
        kind = "undecided"
    return CircleVerdict(kind=kind, residual=residual, rotation=est,
                         mean_action=float(coeffs[0]),
                         fourier_cos=coeffs[1:fourier_order + 1].copy(),
                         fourier_sin=coeffs[fourier_order + 1:].copy(),
                         points_used=used)


def invariant_circle_detect(map_like, chart: ReferenceChart, A: float, seed,
                            N: int = 8192, residual_tol: float = 1e-4,
                            fourier_order: int = 32,
                            indicator_tol: float = 1e-3) -> CircleVerdict:
    """Judge whether one orbit traces an invariant circle in the chart.

    The orbit is lifted to (action, angle), the action is fitted as a
    truncated Fourier series in the angle, and the verdict is "circle" when
    the RMS fit residual is small, the orbit never escaped, and the rotation
    estimate has converged.
    """
    if N < 512:
        raise ValueError("need at least 512 iterates for circle detection")
    orbit = _orbit_of(map_like, seed, N)
    return _verdict_from_orbit(orbit, chart, A, N, residual_tol, fourier_order,
                               indicator_tol)


def detect_circles(map_like, chart: ReferenceChart, A: float, seeds,
                   N: int = 8192, residual_tol: float = 1e-4,
                   fourier_order: int = 32,
                   indicator_tol: float = 1e-3) -> List[CircleVerdict]:
    """Circle verdicts for a seed ladder, batched through the map evaluator."""
    if N < 512:
        raise ValueError("need at least 512 iterates for circle detection")
    orbits = _orbits_for_seeds(map_like, seeds, N)
    return [_verdict_from_orbit(orbit, chart, A, N, residual_tol, fourier_order,
                                indicator_tol) for orbit in orbits]


def circle_seed_from_curve(chart: ReferenceChart, A: float,
                           verdict: CircleVerdict, theta: float):
    """Planar point on a fitted curve, for re-seeding detection."""
    lam = verdict.curve(theta)
    X, Y = from_action_angle(chart, lam, theta)
    x, y = rescale_out(A, chart.n, X, Y)
    return np.array([float(x), float(y)])
