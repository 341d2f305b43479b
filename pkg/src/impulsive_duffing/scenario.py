"""Scenario files: the user-facing description of one experiment setup.

A scenario is a TOML document naming the system (kicked Duffing by default),
its coefficient signals, the impulse schedule and catalog entries, and the
horizons/tolerances/seed ladders used by the experiment subcommands.  Loading
validates everything at once and reports all problems together with field
paths; see the README for the documented grammar.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import duffing
from .actionangle import ReferenceChart, compute_reference
from .duffing import (CoefficientSignal, DuffingParams, ImpulseEntry,
                      constant_signal, fourier_signal, lacunary_signal,
                      signal_from_samples, zero_signal)
from .impulsive import (DEFAULT_ATOL, DEFAULT_ESCAPE_RADIUS, DEFAULT_RTOL,
                        ImpulseSchedule, ImpulsiveSystem, JumpMap)
from .poincare import MAP_ESCAPE_RADIUS, TimeOneMap

_SCENARIO_DIR = Path(__file__).parent / "scenarios"

DUFFING = "duffing"
KICKED_TANGENT = "kicked-tangent"


class ScenarioError(ValueError):
    """Validation failure; carries every issue found, with field paths."""

    def __init__(self, issues: Sequence[str]):
        self.issues = list(issues)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.issues))


@dataclass
class SweepSpec:
    x_range: Tuple[float, float] = (-5.0, 5.0)
    y_range: Tuple[float, float] = (-5.0, 5.0)
    nx: int = 20
    ny: int = 20
    horizon: int = 10000

    def grid(self) -> np.ndarray:
        xs = np.linspace(self.x_range[0], self.x_range[1], self.nx)
        ys = np.linspace(self.y_range[0], self.y_range[1], self.ny)
        XX, YY = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([XX.ravel(), YY.ravel()])


@dataclass
class Scenario:
    name: str
    system: str = DUFFING
    n: int = 1
    A: float = 1.0
    eps0: Optional[float] = None
    times: Tuple[float, ...] = ()
    impulse_specs: Tuple[dict, ...] = ()
    coefficient_specs: Tuple[dict, ...] = ()
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    escape_radius: float = DEFAULT_ESCAPE_RADIUS
    map_escape_radius: float = MAP_ESCAPE_RADIUS
    sweep: SweepSpec = dc_field(default_factory=SweepSpec)
    seed_ladder: Tuple[float, ...] = ()
    detect_iterates: int = 8192
    detect_residual_tol: float = 1e-4
    rotation_iterates: int = 4096
    simulate_initial: Tuple[float, ...] = ()
    simulate_span: Tuple[float, float] = (0.0, 10.0)
    simulate_samples: int = 1001
    warnings: List[str] = dc_field(default_factory=list)
    source_path: Optional[Path] = None
    source_hash: Optional[str] = None

    def seeds(self) -> np.ndarray:
        xs = np.asarray(self.seed_ladder, dtype=float)
        return np.column_stack([xs, np.zeros_like(xs)])


def _build_signal(spec: dict, issues: List[str], path: str) -> CoefficientSignal:
    kind = spec.get("kind", "zero")
    cls = spec.get("class", "holder")
    gamma = spec.get("gamma")
    if cls not in (duffing.HOLDER, duffing.INTEGRABLE):
        issues.append(f"{path}.class: must be 'holder' or 'integrable' [range]")
        cls = duffing.HOLDER
        gamma = 1.0
    try:
        if kind == "zero":
            return zero_signal()
        if kind == "constant":
            return constant_signal(float(spec["value"]))
        if kind == "fourier":
            terms = [(int(q), float(a), float(b)) for q, a, b in spec["terms"]]
            return fourier_signal(terms, holder_exponent=gamma, declared_class=cls)
        if kind == "samples":
            return signal_from_samples([float(v) for v in spec["values"]],
                                       holder_exponent=gamma, declared_class=cls)
        if kind == "lacunary":
            return lacunary_signal(float(spec["gamma"]),
                                   levels=int(spec.get("levels", 13)),
                                   amplitude=float(spec.get("amplitude", 1.0)))
        issues.append(f"{path}.kind: unknown signal kind {kind!r} [range]")
    except (KeyError, TypeError, ValueError) as exc:
        issues.append(f"{path}: {exc} [parse]")
    return zero_signal()


def _build_entry(spec: dict, issues: List[str], path: str) -> ImpulseEntry:
    kind = spec.get("kind")
    try:
        if kind == "constant-shift":
            return duffing.constant_shift(float(spec["alpha"]))
        if kind == "poly-kick":
            return duffing.polynomial_kick(float(spec.get("alpha", 0.0)),
                                           [float(b) for b in spec.get("beta", [])])
        if kind == "sin-kick":
            return duffing.sinusoidal_kick(float(spec.get("alpha", 0.0)),
                                           float(spec["beta"]),
                                           float(spec.get("phase", 0.0)))
        if kind == "gauss-kick":
            return duffing.gaussian_kick(float(spec.get("alpha", 0.0)),
                                         float(spec["beta"]),
                                         int(spec.get("power", 2)))
        if kind == "damp-kick":
            return duffing.damping_kick(float(spec["c"]))
        issues.append(f"{path}.kind: unknown impulse kind {kind!r} [range]")
    except (KeyError, TypeError, ValueError) as exc:
        issues.append(f"{path}: {exc} [parse]")
    return duffing.constant_shift(0.0)


def _validate_duffing(doc: dict, sc: Scenario, issues: List[str]) -> None:
    n = doc.get("n", 1)
    if not isinstance(n, int) or n < 1:
        issues.append("n: must be a positive integer [range]")
        n = 1
    sc.n = n

    times = [float(t) for t in doc.get("schedule", {}).get("times", [])]
    if not times:
        issues.append("schedule.times: at least one impulse time is required [shape]")
    if any(not (0.0 < t < 1.0) for t in times):
        issues.append("schedule.times: impulse times must lie strictly inside (0, 1) [range]")
    if any(b <= a for a, b in zip(times, times[1:])):
        issues.append("schedule.times: impulse times must satisfy "
                      "0 < t1 < ... < tk < 1 [schedule-ordering]")
    sc.times = tuple(times)

    imp_specs = doc.get("impulses", [])
    if len(imp_specs) != len(times):
        issues.append(
            f"impulses: need exactly one entry per impulse time "
            f"({len(times)} times, {len(imp_specs)} entries) [shape]")
    sc.impulse_specs = tuple(imp_specs)

    coeff_specs = doc.get("coefficients", [])
    if coeff_specs and len(coeff_specs) != 2 * n + 1:
        issues.append(
            f"coefficients: need 2n+1 = {2 * n + 1} signals (or none for the "
            f"unforced system), got {len(coeff_specs)} [shape]")
    sc.coefficient_specs = tuple(coeff_specs)

    floor = 1.0 - 1.0 / n
    for i, spec in enumerate(coeff_specs):
        if i <= n:
            continue
        cls = spec.get("class", "holder")
        gamma = spec.get("gamma", 1.0 if spec.get("kind", "zero") == "zero" else None)
        if spec.get("kind") == "lacunary":
            gamma = spec.get("gamma")
        if cls == duffing.INTEGRABLE and spec.get("kind", "zero") != "zero":
            issues.append(f"coefficients[{i}].class: indices above n must be "
                          f"Hoelder-declared [class]")
            continue
        if gamma is None:
            issues.append(f"coefficients[{i}].gamma: Hoelder exponent required [class]")
        elif not gamma > floor:
            issues.append(
                f"coefficients[{i}].gamma: exponent {gamma} must exceed "
                f"1 - 1/n = {floor:g} for nonlinearity degree n = {n} [class]")
        elif n == 1 and gamma < 1.0:
            sc.warnings.append(
                f"coefficients[{i}].gamma: any positive exponent qualifies when "
                f"n = 1 (threshold 1 - 1/n = 0); got {gamma}")


def _parse_scenario(doc: dict, name_hint: str) -> Scenario:
    issues: List[str] = []
    sc = Scenario(name=str(doc.get("name", name_hint)))
    sc.system = doc.get("system", DUFFING)
    if sc.system not in (DUFFING, KICKED_TANGENT):
        issues.append(f"system: unknown system tag {sc.system!r} [range]")

    A = doc.get("A", 1.0)
    if not (isinstance(A, (int, float)) and A > 0):
        issues.append("A: rescaling parameter must be positive [range]")
    else:
        sc.A = float(A)
    eps0 = doc.get("eps0")
    if eps0 is not None:
        if not (isinstance(eps0, (int, float)) and 0 < eps0 < 1):
            issues.append("eps0: must lie in (0, 1) [range]")
        else:
            sc.eps0 = float(eps0)

    tols = doc.get("tolerances", {})
    sc.rtol = float(tols.get("rtol", DEFAULT_RTOL))
    sc.atol = float(tols.get("atol", DEFAULT_ATOL))
    sc.escape_radius = float(tols.get("escape_radius", DEFAULT_ESCAPE_RADIUS))
    sc.map_escape_radius = float(tols.get("map_escape_radius", MAP_ESCAPE_RADIUS))
    if sc.rtol <= 0 or sc.atol <= 0:
        issues.append("tolerances: rtol and atol must be positive [range]")
    if sc.escape_radius <= 0 or sc.map_escape_radius <= 0:
        issues.append("tolerances: escape radii must be positive [range]")

    if sc.system == DUFFING:
        _validate_duffing(doc, sc, issues)

    sw = doc.get("sweep", {})
    try:
        sc.sweep = SweepSpec(
            x_range=tuple(float(v) for v in sw.get("x_range", (-5.0, 5.0))),
            y_range=tuple(float(v) for v in sw.get("y_range", (-5.0, 5.0))),
            nx=int(sw.get("nx", 20)), ny=int(sw.get("ny", 20)),
            horizon=int(sw.get("horizon", 10000)))
        if sc.sweep.nx < 1 or sc.sweep.ny < 1 or sc.sweep.horizon < 1:
            issues.append("sweep: grid counts and horizon must be positive [range]")
    except (TypeError, ValueError) as exc:
        issues.append(f"sweep: {exc} [parse]")

    seeds = doc.get("seeds", {})
    if "radial_x" in seeds:
        sc.seed_ladder = tuple(float(v) for v in seeds["radial_x"])
    else:
        start = float(seeds.get("start", 1.0))
        stop = float(seeds.get("stop", 4.75))
        count = int(seeds.get("count", 16))
        if count < 1:
            issues.append("seeds.count: must be positive [range]")
            count = 1
        sc.seed_ladder = tuple(np.linspace(start, stop, count))

    det = doc.get("detect", {})
    sc.detect_iterates = int(det.get("iterates", 8192))
    sc.detect_residual_tol = float(det.get("residual_tol", 1e-4))
    rot = doc.get("rotation", {})
    sc.rotation_iterates = int(rot.get("iterates", 4096))

    sim = doc.get("simulate", {})
    default_init = (0.0,) if sc.system == KICKED_TANGENT else (1.0, 0.0)
    sc.simulate_initial = tuple(float(v) for v in sim.get("initial", default_init))
    span = sim.get("span", (0.0, 10.0))
    sc.simulate_span = (float(span[0]), float(span[1]))
    sc.simulate_samples = int(sim.get("samples", 1001))
    if sc.simulate_samples < 2:
        issues.append("simulate.samples: need at least two sample points [range]")
    expected_dim = 1 if sc.system == KICKED_TANGENT else 2
    if len(sc.simulate_initial) != expected_dim:
        issues.append(f"simulate.initial: expected {expected_dim} components [shape]")

    if issues:
        raise ScenarioError(issues)
    return sc


def load_scenario(source) -> Scenario:
    """Load and validate a scenario from a path or a shipped scenario name."""
    path = Path(source)
    if not path.exists() and not path.suffix:
        shipped = _SCENARIO_DIR / f"{path.name}.toml"
        if shipped.exists():
            path = shipped
    if not path.exists():
        raise ScenarioError([f"scenario file not found: {source} [parse]"])
    raw = path.read_bytes()
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ScenarioError([f"not a valid scenario document: {exc} [parse]"])
    sc = _parse_scenario(doc, path.stem)
    sc.source_path = path
    sc.source_hash = hashlib.sha256(raw).hexdigest()
    return sc


def shipped_scenarios() -> List[str]:
    return sorted(p.stem for p in _SCENARIO_DIR.glob("*.toml"))


# ---------------------------------------------------------------------------
# builders


def build_params(sc: Scenario) -> DuffingParams:
    if sc.system != DUFFING:
        raise ValueError("coefficient signals exist only for the Duffing system")
    if not sc.coefficient_specs:
        return DuffingParams.unforced(sc.n)
    issues: List[str] = []
    sigs = [_build_signal(spec, issues, f"coefficients[{i}]")
            for i, spec in enumerate(sc.coefficient_specs)]
    if issues:
        raise ScenarioError(issues)
    return DuffingParams(sc.n, tuple(sigs))


def build_entries(sc: Scenario) -> List[ImpulseEntry]:
    issues: List[str] = []
    entries = [_build_entry(spec, issues, f"impulses[{i}]")
               for i, spec in enumerate(sc.impulse_specs)]
    if issues:
        raise ScenarioError(issues)
    return entries


def build_system(sc: Scenario) -> ImpulsiveSystem:
    if sc.system == KICKED_TANGENT:
        # scalar demo u' = 1 + u^2 with unit downward jumps every quarter-pi
        schedule = ImpulseSchedule(base_times=(math.pi / 4.0,), period=math.pi / 4.0)
        jump = JumpMap(jump=lambda u: -np.ones_like(u),
                       jacobian=lambda u: np.zeros((np.size(u), np.size(u))))
        return ImpulsiveSystem(field=lambda t, u: 1.0 + np.asarray(u) ** 2,
                               schedule=schedule, jumps=(jump,), state_dim=1)
    params = build_params(sc)
    entries = build_entries(sc)
    schedule = ImpulseSchedule(base_times=sc.times, period=1.0)
    return ImpulsiveSystem(field=duffing.duffing_field(params),
                           schedule=schedule,
                           jumps=tuple(e.to_jump_map() for e in entries),
                           state_dim=2,
                           field_jacobian=duffing.duffing_field_jacobian(params))


def build_map(sc: Scenario, rtol: Optional[float] = None,
              atol: Optional[float] = None,
              escape_radius: Optional[float] = None) -> TimeOneMap:
    if sc.system != DUFFING:
        raise ValueError("the time-1 map needs the 1-periodic Duffing form")
    return TimeOneMap(build_system(sc),
                      rtol=sc.rtol if rtol is None else rtol,
                      atol=sc.atol if atol is None else atol,
                      escape_radius=sc.map_escape_radius if escape_radius is None
                      else escape_radius)


def build_chart(sc: Scenario, tol: float = 1e-9, cache="auto") -> ReferenceChart:
    return compute_reference(sc.n, tol=tol, cache=cache)
