"""Standardized mean differences under unequal variances.

Estimators for pooled, Glass, arithmetic-weighted and geometric-weighted
SMDs, random-effects pooling of study-level effects, and a reproducible
Monte Carlo harness.
"""

from ._backend import BACKEND
from .effect_size import (
    EffectEstimate,
    Estimator,
    Family,
    GroupPair,
    GroupSummary,
    PopulationParams,
    SmdMethod,
    estimate,
    true_smd,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "EffectEstimate",
    "Estimator",
    "Family",
    "GroupPair",
    "GroupSummary",
    "PopulationParams",
    "SmdMethod",
    "__version__",
    "estimate",
    "true_smd",
]
