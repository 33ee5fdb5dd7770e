"""Quantum dynamics with a log-normally fluctuating Planck parameter.

Subpackages and modules
-----------------------
hilbert         finite-dimensional operators, states, traces, entropy
lambda_process  log-normal lambda law and counter-based seeded paths
propagator      piecewise-constant-lambda unitaries
montecarlo      lambda-path ensemble average of the density matrix
closed_form     Gaussian decay factor and its quadrature oracle
lindblad        double-commutator master equation (RK4)
position_space  1D split-operator grids and the pointer measurement model
experiments     cross-validation, sweeps, no-signalling, run persistence
"""
from ._backend import BACKEND
from .config import RunConfig
from .errors import ChaoticPlanckError, NumericalError, ValidationError
from .lambda_process import LambdaParams

__version__ = "0.1.0"

__all__ = ["BACKEND", "RunConfig", "LambdaParams", "ChaoticPlanckError", "NumericalError",
           "ValidationError", "__version__"]
