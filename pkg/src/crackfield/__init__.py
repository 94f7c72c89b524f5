"""Thermodynamic kinetics of interacting microcrack families."""

__version__ = "0.1.0"

from .cracks import CrackFamily, CrackGeometry, CrackSystem, IsotropicElastic, effective_pliability
from .errors import ConfigError, CrackfieldError, ModelError
from .kinetics import LoadProgram, MaterialState, ModelParams, energy_budget, integrate
from .phase import ShearModelParams, critical_point, maxwell_sigma
from .tensor import Rotation, SymTensor2

__all__ = [
    "ConfigError", "CrackFamily", "CrackGeometry", "CrackSystem", "CrackfieldError", "IsotropicElastic",
    "LoadProgram", "MaterialState", "ModelError", "ModelParams", "Rotation", "ShearModelParams", "SymTensor2",
    "critical_point", "effective_pliability", "energy_budget", "integrate", "maxwell_sigma",
]
