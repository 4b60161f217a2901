"""Variational quantum-trajectory simulation of open spin systems.

Stochastic time-dependent variational Monte Carlo for Lindblad dynamics of
the dissipative long-range transverse-field Ising chain, with exact dense and
closed-form references for validation.
"""

__version__ = "0.1.0"

from .model import ModelSpec
from .ansatz import RBM, Jastrow, make_ansatz
from .sampler import SamplerConfig
from .engine import RegularizationConfig
from .config import RunConfig
from .runner import run_simulation

__all__ = ["ModelSpec", "RBM", "Jastrow", "make_ansatz", "SamplerConfig",
           "RegularizationConfig", "RunConfig", "run_simulation", "__version__"]
