"""
Map family and orbit machinery for the Rovella lab
Evaluates the map, validates its structural conditions, and measures
expansion, recurrence and tail sets by vectorised Monte Carlo
"""

from .errors import (
    EXCEEDS_HORIZON,
    BinMismatch,
    ConfigError,
    DegenerateFit,
    ExceedsHorizon,
    InconsistentRecord,
    NoConvergence,
    RovellaLabError,
    SingularityExhausted,
    SingularityHit,
)
from .map_core import MapParams, ValidationReport, derivative, evaluate, validate_params
from .orbit_engine import AnalysisConstants, TailCurve, iterate, tail_curve, truncated_distance

__all__ = [
    'EXCEEDS_HORIZON', 'BinMismatch', 'ConfigError', 'DegenerateFit', 'ExceedsHorizon',
    'InconsistentRecord', 'NoConvergence', 'RovellaLabError', 'SingularityExhausted', 'SingularityHit',
    'MapParams', 'ValidationReport', 'derivative', 'evaluate', 'validate_params',
    'AnalysisConstants', 'TailCurve', 'iterate', 'tail_curve', 'truncated_distance',
]
