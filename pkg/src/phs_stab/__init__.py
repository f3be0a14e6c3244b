"""Stability lab for stochastic port-Hamiltonian systems at finite dimension.

Block operators and their semigroups live in :mod:`.space`, the nonlinear
coefficient maps in :mod:`.coefficients`, the contraction certificate in
:mod:`.certificate`, the mild-solution integrator in :mod:`.simulate` and the
Wasserstein-2 tools in :mod:`.transport`.  :mod:`.lab` wires them into
reproducible experiments.
"""

from .certificate import StabilityCertificate, beta_bound, compute_certificate, lambda_bound
from .coefficients import CoefficientSet, JumpMeasureSpec, MarkDistribution, QWienerSpec
from .simulate import SimConfig, integrate, integrate_coupled, integrate_ensemble
from .space import BlockOperator, SpaceDecomposition, build_damped_wave_chain

__all__ = [
    "BlockOperator",
    "SpaceDecomposition",
    "build_damped_wave_chain",
    "CoefficientSet",
    "JumpMeasureSpec",
    "MarkDistribution",
    "QWienerSpec",
    "StabilityCertificate",
    "beta_bound",
    "compute_certificate",
    "lambda_bound",
    "SimConfig",
    "integrate",
    "integrate_coupled",
    "integrate_ensemble",
]

__version__ = "0.1.0"
