from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import DegenerateFit


@dataclass(frozen=True)
class ExponentialFit:
    """values ~ c * exp(-tau * n), fitted on the strictly positive entries"""
    c: float
    tau: float
    r_squared: float
    points_used: int
    restricted: bool


def fit_exponential_decay(n_values: Sequence[float], values: Sequence[float], min_points: int = 3) -> ExponentialFit:
    """
    Least-squares line through (n, log value) for positive values

    Raises:
        DegenerateFit: fewer than min_points positive entries, or all n equal
    """
    n = np.asarray(n_values, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    keep = v > 0
    if keep.sum() < min_points:
        raise DegenerateFit(f"only {int(keep.sum())} positive points, need {min_points}")
    n_used = n[keep]
    if np.ptp(n_used) == 0:
        raise DegenerateFit("all fit abscissae coincide")

    fit = stats.linregress(n_used, np.log(v[keep]))
    return ExponentialFit(
        c=float(np.exp(fit.intercept)),
        tau=float(-fit.slope),
        r_squared=float(fit.rvalue ** 2),
        points_used=int(keep.sum()),
        restricted=bool(not keep.all()),
    )


@dataclass(frozen=True)
class TrendFit:
    slope: float
    intercept: float
    stderr: float
    r_squared: float

    @property
    def slope_upper95(self) -> float:
        """One-sided 95% upper confidence bound on the slope"""
        return self.slope + 1.645 * self.stderr


def fit_trend(x: Sequence[float], y: Sequence[float]) -> TrendFit:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 3 or np.ptp(x) == 0:
        raise DegenerateFit("need at least 3 distinct abscissae for a trend")
    fit = stats.linregress(x, y)
    return TrendFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        stderr=float(fit.stderr),
        r_squared=float(fit.rvalue ** 2),
    )
