"""Behavioural paradigms run against simulated memory stores."""
from .drm import ConvexityReport, DrmSweep, delta_convexity, project_simplex, run_drm, theorem4_check
from .forgetting import ForgettingConfig, ForgettingResult, LevelResult, run_forgetting
from .spacing import SpacingConfig, SpacingResult, run_spacing
from .tot import TotConfig, TotResult, run_tot

__all__ = [
    "ConvexityReport",
    "DrmSweep",
    "ForgettingConfig",
    "ForgettingResult",
    "LevelResult",
    "SpacingConfig",
    "SpacingResult",
    "TotConfig",
    "TotResult",
    "delta_convexity",
    "project_simplex",
    "run_drm",
    "run_forgetting",
    "run_spacing",
    "run_tot",
    "theorem4_check",
]
