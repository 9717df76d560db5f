"""Projection-based decision boundary attacks: sign-only victims, projections,
the generalized gradient estimator, the attack loop and its theory checks."""

from .attack import AttackConfig, AttackTrace, run_attack
from .estimator import EstimatorConfig, GradientEstimate, estimate_gradient
from .projections import Projection, ProjectionSpec, identity_projection, orthonormal_projection
from .victims import DifferenceOracle, GroundTruth, VictimSpec, build_victim

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackTrace",
    "run_attack",
    "EstimatorConfig",
    "GradientEstimate",
    "estimate_gradient",
    "Projection",
    "ProjectionSpec",
    "identity_projection",
    "orthonormal_projection",
    "DifferenceOracle",
    "GroundTruth",
    "VictimSpec",
    "build_victim",
]
