"""Stochastic phase-space dynamics for one quantum degree of freedom.

The package realizes three pictures of the same evolution law and the
instruments to check that they agree:

- ``core``: wavefunctions, coherent-state projections, Husimi grids,
  diffusion process models, score and guidance drifts, and a spectral
  Fokker-Planck stepper for the signed-diffusion equation.
- ``sde``: trajectory ensembles integrated backward from a terminal law
  or forward under score guidance.
- ``meanfield``: interacting particle systems whose mollified empirical
  density reproduces the guided drift as the population grows.
- ``metrics``: exact 1-D transport distances, KS statistics, and
  autocovariance estimators used to compare the pictures.
- ``cli``: scenario runner with reproducible manifests.
"""

from . import core, meanfield, metrics, sde
from .errors import (
    ConfigError,
    CoverageError,
    DomainError,
    EvaluationError,
    PhaseflowError,
    StabilityError,
    SupportError,
    UnsupportedModelError,
)

__version__ = "0.1.0"

__all__ = [
    "core",
    "meanfield",
    "metrics",
    "sde",
    "PhaseflowError",
    "DomainError",
    "CoverageError",
    "SupportError",
    "StabilityError",
    "UnsupportedModelError",
    "EvaluationError",
    "ConfigError",
    "__version__",
]
