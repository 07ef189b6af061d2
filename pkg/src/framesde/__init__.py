"""Frame-bundle stochastic differential equations on manifolds, integrated chart by chart."""

from .chart_sde import BumpParams, ChartSDE, FrameState, orthonormal_frame_at, strat_coefficients
from .errors import (ConfigError, DegeneratePlane, FrameBlowup, FrameSDEError, LeftAtlas, NotInOverlap,
                     PointOutsideChart)
from .geometry import ChartPoint, make_model
from .integrator import EventSwitch, GridSwitch, NoiseSource, NoSwitch, StepScheme, ensemble, simulate
from .report import VerificationReport

__version__ = "0.1.0"

__all__ = [
    "BumpParams", "ChartPoint", "ChartSDE", "ConfigError", "DegeneratePlane", "EventSwitch", "FrameBlowup",
    "FrameSDEError", "FrameState", "GridSwitch", "LeftAtlas", "NoSwitch", "NoiseSource", "NotInOverlap",
    "PointOutsideChart", "StepScheme", "VerificationReport", "ensemble", "make_model", "orthonormal_frame_at",
    "simulate", "strat_coefficients",
]
