"""Numerical toolkit for monotone contact Hamiltonian systems on flat tori."""

__version__ = "0.1.0"

from .errors import (ConfigError, ContactDynError, ContractError, InputDomainError, InternalContradiction,
                     NonConvergenceError, SamplingFailure, SolverFailure)
from .model import HamiltonianModel, MonotoneSign, PhasePoint, TorusPoint, eval_hamiltonian, eval_vector_field

__all__ = [
    "__version__", "HamiltonianModel", "MonotoneSign", "PhasePoint", "TorusPoint", "eval_hamiltonian",
    "eval_vector_field", "ConfigError", "ContactDynError", "ContractError", "InputDomainError",
    "InternalContradiction", "NonConvergenceError", "SamplingFailure", "SolverFailure",
]
