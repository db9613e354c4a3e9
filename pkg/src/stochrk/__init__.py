"""
Adaptive high-order Runge-Kutta integration of Itô stochastic differential
equations with strong solutions.
"""

__version__ = "0.1.0"

from .sde import SdeSystem, effective_increment, ito_drift_correction
from .tableau import ButcherTableau, builtin_rk4, builtin_tableau, load_tableau
from .brownian import BrownianStack, IncrementNode, RngStream
from .stepper import StepController, integrate_path, rk_step
from .ensemble import EnsembleResult, run_ensemble
