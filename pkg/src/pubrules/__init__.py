"""Optimal publication rules for costly and manipulable research designs."""

from . import calibration, design_rules, equilibrium_sim, gaussian_kernel, manipulation_rules
from ._errors import DomainError, InfeasibleError, NumericalError

__version__ = "0.1.0"
