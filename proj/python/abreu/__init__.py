"""Generalized Abreu equation toolkit for toric bundles over 2D Delzant polytopes."""

from ._core import (
    AbreuError,
    Config,
    ConfigError,
    ConvergenceError,
    ConvexityError,
    DomainError,
    IoError,
    LpError,
    RunResult,
    ValidationError,
    affine_check,
    curvature,
    evaluate,
    exit_code,
    run,
    stability,
)

__all__ = [
    "AbreuError",
    "Config",
    "ConfigError",
    "ConvergenceError",
    "ConvexityError",
    "DomainError",
    "IoError",
    "LpError",
    "RunResult",
    "ValidationError",
    "affine_check",
    "curvature",
    "evaluate",
    "exit_code",
    "run",
    "stability",
]
