"""Onset of bioconvection in a phototactic micro-swimmer suspension.

The package solves, in order: the layer's radiation field under oblique
collimated plus diffuse illumination (`radiative`), the equilibrium
concentration profile it induces (`basestate`), the radiation
disturbance carried by a concentration perturbation (`perturb`), and the
linear-stability eigenproblem whose neutral curves and critical modes
describe the onset of convection (`stability`).  `cli` wraps the
pipeline in a command-line front end with cached intermediates
(`cache`).
"""

from .basestate import (PhototaxisCurve, SuspensionParams, BaseState,
                        refraction_angle, solve_base_state,
                        sublayer_diagnostics)
from .radiative import (RadiationField, solve_basic_radiation,
                        uniform_suspension_intensity)
from .stability import (CriticalMode, NeutralBranch, critical_mode,
                        find_critical_mode, growth_rate, neutral_point,
                        trace_neutral_curve)

__version__ = "0.1.0"

__all__ = [
    "BaseState",
    "CriticalMode",
    "NeutralBranch",
    "PhototaxisCurve",
    "RadiationField",
    "SuspensionParams",
    "critical_mode",
    "find_critical_mode",
    "growth_rate",
    "neutral_point",
    "refraction_angle",
    "solve_base_state",
    "solve_basic_radiation",
    "sublayer_diagnostics",
    "trace_neutral_curve",
    "uniform_suspension_intensity",
]
