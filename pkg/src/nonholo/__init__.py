"""Guiding vector fields for following a closed path under a Pfaffian (non-holonomic) constraint in R^3."""

__version__ = "0.1.0"

from .errors import (AssumptionViolated, InputError, NonholoError, NumericFailure,  # noqa: E402
                     SceneSchemaError)
from .expr import parse  # noqa: E402
from .scene import ImplicitLoop, Numerics, PfaffianConstraint, Scene, check_assumptions  # noqa: E402
from .gvf import Custom, Default, GuidingField, Robust, build_robust_weights, check_weights  # noqa: E402
from .connection import first_return, horizontal_velocity, lift_path, parallel_project, psi  # noqa: E402
from .flow import EventSpec, IntegratorConfig, integrate, simulate_gvf, winding_flow_period  # noqa: E402
from .verify import run_suite  # noqa: E402
from .scenefile import load_scene  # noqa: E402

__all__ = [
    "AssumptionViolated", "Custom", "Default", "EventSpec", "GuidingField", "ImplicitLoop", "InputError",
    "IntegratorConfig", "NonholoError", "NumericFailure", "Numerics", "PfaffianConstraint", "Robust",
    "Scene", "SceneSchemaError", "build_robust_weights", "check_assumptions", "check_weights",
    "first_return", "horizontal_velocity", "integrate", "lift_path", "load_scene", "parallel_project",
    "parse", "psi", "run_suite", "simulate_gvf", "winding_flow_period",
]
