"""Analytic smoothing of periodic Hoelder signals and the perturbation split.

For periodic inputs the mollifier acts diagonally on Fourier coefficients:
the coefficient at integer frequency q is multiplied by a compactly supported
cutoff evaluated at sigma*q.  The cutoff is identically 1 on a plateau around
0, so constants (and any mode below the plateau) pass through exactly, and the
result is a finite trigonometric polynomial evaluable on a complex strip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .actionangle import ReferenceChart
from .duffing import HOLDER, CoefficientSignal, DuffingParams


@dataclass(frozen=True)
class SmoothingKernel:
    """Frequency-side cutoff: 1 on [0, flat_radius], 0 beyond support_radius.

    The transition uses the standard C-infinity partition step built from
    exp(-1/v), so the multiplier is smooth and completely flat (value 1) near
    the origin.
    """

    flat_radius: float = 0.5
    support_radius: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.flat_radius < self.support_radius:
            raise ValueError("need 0 < flat_radius < support_radius")

    def multiplier(self, xi):
        xi = np.abs(np.asarray(xi, dtype=float))
        u = (xi - self.flat_radius) / (self.support_radius - self.flat_radius)
        u = np.clip(u, 0.0, 1.0)
        with np.errstate(divide="ignore", over="ignore"):
            fu = np.where(u > 0.0, np.exp(-1.0 / np.where(u > 0.0, u, 1.0)), 0.0)
            fv = np.where(u < 1.0, np.exp(-1.0 / np.where(u < 1.0, 1.0 - u, 1.0)), 0.0)
        out = fv / (fu + fv)
        return out if out.ndim else float(out)


def default_kernel() -> SmoothingKernel:
    return SmoothingKernel()


@dataclass(frozen=True)
class AnalyticApproximation:
    """Finite trigonometric polynomial p_sigma, real on the real axis.

    Valid as an analytic object on the complex strip |Im t| <= sigma (and
    anywhere, being entire, but the approximation guarantees hold there).
    """

    freqs: np.ndarray
    cos_amps: np.ndarray
    sin_amps: np.ndarray
    sigma: float
    source: CoefficientSignal

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


def smooth(signal: CoefficientSignal, sigma: float,
           kernel: Optional[SmoothingKernel] = None) -> AnalyticApproximation:
    """Mollify a 1-periodic signal at scale sigma.

    Frequencies q with sigma*q inside the kernel plateau are untouched;
    frequencies with sigma*q beyond the support are removed, so the output is
    a finite real trigonometric polynomial.
    """
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    kernel = kernel or default_kernel()
    if signal.sample_count is not None:
        needed = int(math.ceil(2.0 * kernel.support_radius / sigma))
        if signal.sample_count < needed:
            raise ValueError(
                "sample-based signal cannot resolve the kernel band at sigma=%g: "
                "need at least %d samples, got %d"
                % (sigma, needed, signal.sample_count))
    m = kernel.multiplier(sigma * signal.freqs)
    keep = m != 0.0
    return AnalyticApproximation(freqs=signal.freqs[keep].copy(),
                                 cos_amps=signal.cos_amps[keep] * m[keep],
                                 sin_amps=signal.sin_amps[keep] * m[keep],
                                 sigma=sigma, source=signal)


def smoothing_error_sup(signal: CoefficientSignal, sigma: float,
                        kernel: Optional[SmoothingKernel] = None,
                        grid: int = 2048) -> float:
    """sup over a dense real grid of |p_sigma - p|."""
    approx = smooth(signal, sigma, kernel)
    ts = np.linspace(0.0, 1.0, grid, endpoint=False)
    return float(np.max(np.abs(approx(ts) - signal(ts))))


def strip_bound(approx: AnalyticApproximation, strip_width: float,
                grid: Optional[np.ndarray] = None,
                n_real: int = 512, n_imag: int = 17) -> float:
    """Max modulus of the trigonometric polynomial over a complex strip grid.

    By the maximum principle the true maximum sits on the strip boundary, but
    the default grid covers the interior as well so the report doubles as a
    sanity check of the evaluator.
    """
    if strip_width < 0.0:
        raise ValueError("strip_width must be nonnegative")
    if strip_width > approx.sigma:
        raise ValueError("strip_width exceeds the smoothing scale")
    if grid is None:
        re = np.linspace(0.0, 1.0, n_real, endpoint=False)
        im = np.linspace(-strip_width, strip_width, n_imag)
        grid = re[:, None] + 1j * im[None, :]
    return float(np.max(np.abs(approx(grid))))


# ---------------------------------------------------------------------------
# perturbation split


@dataclass
class PerturbationSplit:
    """R = (analytic-in-time part) + (small remainder).

    High-order coefficient signals are replaced by their mollified versions at
    scale ``epsilon = (eps0 / A^(n-1))^(1/gamma)`` to form the analytic part;
    the remainder collects the low-order terms and the smoothing residuals.
    """

    chart: ReferenceChart
    params: DuffingParams
    A: float
    eps0: float
    gamma: float
    epsilon: float
    smoothed: Dict[int, AnalyticApproximation]

    def _term_factor(self, i: int, lam, theta):
        ch = self.chart
        n = ch.n
        X0v = ch.X0(np.mod(np.asarray(theta, dtype=float), 1.0) * ch.T0)
        lam = np.asarray(lam, dtype=float)
        return (self.A ** float(i - n - 1) / (i + 1.0)) \
            * (ch.c ** ch.alpha * X0v) ** (i + 1) * lam ** (ch.alpha * (i + 1))

    def analytic_part(self, lam, theta, t):
        """R_eps: smoothed high-order terms; t may be complex on the strip."""
        t = np.asarray(t)
        out = None
        for i, approx in self.smoothed.items():
            term = self._term_factor(i, lam, theta) * approx(t)
            out = term if out is None else out + term
        if out is None:
            shape = np.broadcast(np.asarray(lam), np.asarray(theta), t).shape
            return np.zeros(shape) if shape else 0.0
        return out

    def remainder(self, lam, theta, t):
        """R^eps: integrable low-order terms plus smoothing residuals."""
        n = self.chart.n
        t = np.asarray(t, dtype=float)
        shape = np.broadcast(np.asarray(lam), np.asarray(theta), t).shape
        out = np.zeros(shape)
        for i, sig in enumerate(self.params.coefficients):
            if sig.is_zero():
                continue
            if i <= n:
                out = out + self._term_factor(i, lam, theta) * sig(t)
            else:
                resid = sig(t) - self.smoothed[i](t)
                out = out + self._term_factor(i, lam, theta) * resid
        return out if shape else float(out)

    def total(self, lam, theta, t):
        return self.analytic_part(lam, theta, t) + self.remainder(lam, theta, t)


@dataclass
class SplitReport:
    epsilon: float
    gamma: float
    sup_analytic: float     # grid sup of |R_eps| on the real grid
    sup_remainder: float    # grid sup of |R^eps| on the real grid
    lam_range: Tuple[float, float]


def split_perturbation(params: DuffingParams, chart: ReferenceChart, A: float,
                       eps0: float, kernel: Optional[SmoothingKernel] = None,
                       lam_range: Tuple[float, float] = (1.0, 4.0),
                       grid: Tuple[int, int, int] = (21, 64, 128)):
    """Split the perturbation at the scale dictated by A and eps0.

    Requires A^(-1) < eps0 and Hoelder-declared high-order coefficients with
    exponent above 1 - 1/n.  Returns the split (with evaluator closures) and a
    report of grid suprema over lam_range x angle x time.
    """
    if A <= 0.0:
        raise ValueError("A must be positive")
    if not (1.0 / A < eps0):
        raise ValueError("need A^(-1) < eps0")
    n = chart.n
    if params.n != n:
        raise ValueError("chart and parameters disagree on n")
    gammas = []
    for i in range(n + 1, 2 * n + 1):
        sig = params.coefficients[i]
        if sig.is_zero():
            continue
        if sig.declared_class != HOLDER or sig.holder_exponent is None:
            raise ValueError(f"coefficient p_{i} must be Hoelder-declared for the split")
        if sig.holder_exponent <= 1.0 - 1.0 / n:
            raise ValueError(
                f"coefficient p_{i} has exponent {sig.holder_exponent}, "
                f"needs > {1.0 - 1.0 / n}")
        gammas.append(sig.holder_exponent)
    gamma = min(gammas) if gammas else 1.0
    epsilon = (eps0 / A ** (n - 1)) ** (1.0 / gamma)
    smoothed = {}
    for i in range(n + 1, 2 * n + 1):
        sig = params.coefficients[i]
        if not sig.is_zero():
            smoothed[i] = smooth(sig, epsilon, kernel)
    split = PerturbationSplit(chart=chart, params=params, A=A, eps0=eps0,
                              gamma=gamma, epsilon=epsilon, smoothed=smoothed)

    nl, nth, nt = grid
    lam = np.linspace(lam_range[0], lam_range[1], nl)[:, None, None]
    theta = np.linspace(0.0, 1.0, nth, endpoint=False)[None, :, None]
    ts = np.linspace(0.0, 1.0, nt, endpoint=False)[None, None, :]
    sup_analytic = float(np.max(np.abs(split.analytic_part(lam, theta, ts))))
    sup_remainder = float(np.max(np.abs(split.remainder(lam, theta, ts))))
    report = SplitReport(epsilon=epsilon, gamma=gamma, sup_analytic=sup_analytic,
                         sup_remainder=sup_remainder, lam_range=lam_range)
    return split, report
