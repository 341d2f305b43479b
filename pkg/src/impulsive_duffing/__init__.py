"""Kicked Duffing oscillators: impulsive flows, time-1 maps, action-angle
charts, analytic smoothing, and KAM-style boundedness diagnostics."""

__version__ = "0.1.0"

from .actionangle import (NumericsError, ReferenceChart, compute_reference,
                          from_action_angle, hamiltonian_pieces,
                          jump_action_angle, rescale_in, rescale_out,
                          to_action_angle, unperturbed_rotation, wrap_half)
from .diagnostics import (CircleVerdict, RotationEstimate, SweepReport,
                          TwistProfile, boundedness_sweep, detect_circles,
                          invariant_circle_detect, rotation_number,
                          twist_profile)
from .duffing import (CoefficientSignal, DuffingParams, ImpulseEntry,
                      SmallnessReport, area_identity, constant_shift,
                      constant_signal, damping_kick, duffing_field,
                      duffing_field_jacobian, fourier_signal, gaussian_kick,
                      h0_energy, lacunary_signal, polynomial_kick,
                      signal_from_samples, sinusoidal_kick, smallness_report,
                      zero_signal)
from .impulsive import (ImpulseSchedule, ImpulsiveSystem, JumpMap,
                        PiecewiseTrajectory, TerminationReason, apply_jump,
                        integrate_segment, solve_ivp, solve_jump_equation,
                        zero_jump)
from .poincare import Escaped, JacobianRecord, Orbit, TimeOneMap
from .scenario import (Scenario, ScenarioError, build_chart, build_map,
                       build_system, load_scenario, shipped_scenarios)
from .smoothing import (AnalyticApproximation, PerturbationSplit,
                        SmoothingKernel, default_kernel, smooth,
                        smoothing_error_sup, split_perturbation, strip_bound)

__all__ = [name for name in dir() if not name.startswith("_")]
