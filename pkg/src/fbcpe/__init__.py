"""Simulator and diagnostics for the fixed-domain, free-boundary compressible
primitive equations with a physical-vacuum density profile."""

from .diagnostics import DiagRecord, basic_dissipation, basic_energy, fit_decay_rate, record
from .grid import Grid, Params, Variant, build_grid
from .kinematics import surface_tendency, vertical_velocity
from .physmap import to_physical
from .state import (State, SurfaceMode, ValidityBandError, VelocityMode, equilibrium_state,
                    perturbed_ic, project_zero_momentum)
from .stepper import Scheme, StepConfig, step, suggest_dt, trajectory

__all__ = [
    "DiagRecord", "Grid", "Params", "Scheme", "State", "StepConfig", "SurfaceMode",
    "ValidityBandError", "Variant", "VelocityMode", "basic_dissipation", "basic_energy",
    "build_grid", "equilibrium_state", "fit_decay_rate", "perturbed_ic",
    "project_zero_momentum", "record", "step", "suggest_dt", "surface_tendency",
    "to_physical", "trajectory", "vertical_velocity",
]
