"""
Invariant density and statistical laws
Histogram and Ulam density estimates, metric entropy, correlation decay,
large deviations and the central limit check for Hoelder observables
"""

from .observables import COBOUNDARY, ObservablePair, observable_names, resolve
from .srb_stats import (
    CLTReport,
    CorrelationCurve,
    DensityEstimate,
    DeviationCurve,
    StabilityLadder,
    clt_report,
    correlation_curve,
    density_mean,
    histogram_density,
    l1_distance,
    large_deviation_curve,
    metric_entropy,
    stability_ladder,
    ulam_density,
)

__all__ = [
    'COBOUNDARY', 'ObservablePair', 'observable_names', 'resolve',
    'CLTReport', 'CorrelationCurve', 'DensityEstimate', 'DeviationCurve', 'StabilityLadder',
    'clt_report', 'correlation_curve', 'density_mean', 'histogram_density', 'l1_distance',
    'large_deviation_curve', 'metric_entropy', 'stability_ladder', 'ulam_density',
]
