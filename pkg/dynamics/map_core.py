from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import SingularityHit

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class MapParams:
    """
    One member of the family f_a(x) = sign(x) * (-1 + (2 - a) * |x|^s)

    Args:
        a: family parameter in [0, a_max]
        s: singularity order in (1, 3]
        a_max: upper end of the admissible parameter range (< 2)
    """
    a: float = 0.0
    s: float = 1.5
    a_max: float = 0.5
    coeff: float = field(init=False)

    def __post_init__(self):
        if not 1.0 < self.s <= 3.0:
            raise ValueError(f"s must be in (1, 3], got {self.s}")
        if not 0.0 <= self.a_max < 2.0:
            raise ValueError(f"a_max must be in [0, 2), got {self.a_max}")
        if not 0.0 <= self.a <= self.a_max:
            raise ValueError(f"a must be in [0, a_max={self.a_max}], got {self.a}")
        object.__setattr__(self, "coeff", 2.0 - self.a)

    def critical_value(self, side: int) -> float:
        """One-sided limit of f at 0: -1 from the right, +1 from the left"""
        return -1.0 if side > 0 else 1.0


@dataclass(frozen=True)
class ValidationReport:
    k1: float
    k2: float
    schwarzian_max: float
    monotone_ok: bool
    limits_ok: bool
    image_ok: bool
    notes: str

    @property
    def ok(self) -> bool:
        return self.monotone_ok and self.limits_ok and self.image_ok and self.schwarzian_max < 0


def _as_result(values: np.ndarray) -> ArrayLike:
    return float(values) if values.ndim == 0 else values


def _check_nonzero(x: np.ndarray):
    if np.any(x == 0.0):
        raise SingularityHit(0, 0.0)


def evaluate(params: MapParams, x: ArrayLike) -> ArrayLike:
    """f_a(x); scalar in, scalar out; arrays are mapped elementwise"""
    x = np.asarray(x, dtype=np.float64)
    _check_nonzero(x)
    return _as_result(np.sign(x) * (-1.0 + params.coeff * np.abs(x) ** params.s))


def derivative(params: MapParams, x: ArrayLike) -> ArrayLike:
    x = np.asarray(x, dtype=np.float64)
    _check_nonzero(x)
    return _as_result((params.coeff * params.s) * np.abs(x) ** (params.s - 1.0))


def second_derivative(params: MapParams, x: ArrayLike) -> ArrayLike:
    x = np.asarray(x, dtype=np.float64)
    _check_nonzero(x)
    k = params.coeff * params.s * (params.s - 1.0)
    return _as_result(k * np.sign(x) * np.abs(x) ** (params.s - 2.0))


def schwarzian(params: MapParams, x: ArrayLike) -> ArrayLike:
    """Closed form S(f)(x) = -(s-1)(s+1) / (2 x^2)"""
    x = np.asarray(x, dtype=np.float64)
    _check_nonzero(x)
    return _as_result(-(params.s - 1.0) * (params.s + 1.0) / (2.0 * x * x))


def step(params: MapParams, x: np.ndarray) -> np.ndarray:
    """Unchecked vectorised map; 0 maps to -0.0 and stays there"""
    return np.sign(x) * (-1.0 + params.coeff * np.abs(x) ** params.s)


def log_derivative(params: MapParams, x: np.ndarray) -> np.ndarray:
    """Unchecked log f'(x); -inf at 0"""
    with np.errstate(divide="ignore"):
        return np.log(params.coeff * params.s) + (params.s - 1.0) * np.log(np.abs(x))


def inverse_branch(params: MapParams, y: ArrayLike, side: ArrayLike) -> ArrayLike:
    """
    Inverse of f on the branch x > 0 (side=+1) or x < 0 (side=-1)

    Values of y outside the branch image are clipped onto it.
    """
    y = np.asarray(y, dtype=np.float64)
    side = np.asarray(side, dtype=np.float64)
    base = np.clip((1.0 + side * y) / params.coeff, 0.0, None)
    x = side * np.minimum(base ** (1.0 / params.s), 1.0)
    return _as_result(x)


def validate_params(params: MapParams, grid_size: int = 64) -> ValidationReport:
    """
    Check the structural conditions on a symmetric grid that excludes 0

    Failures are carried in the report, never raised.
    """
    if grid_size < 16:
        raise ValueError("grid_size must be at least 16")

    half = grid_size // 2
    positive = np.arange(1, half + 1, dtype=np.float64) / half
    grid = np.concatenate([-positive[::-1], positive])
    notes = []

    values = evaluate(params, grid)
    right = values[half:]
    left = values[:half]
    monotone_ok = bool(np.all(np.diff(right) > 0) and np.all(np.diff(left) > 0))
    if not monotone_ok:
        notes.append("map is not strictly increasing on each side")

    tiny = 1e-12
    limits_ok = bool(abs(evaluate(params, tiny) + 1.0) < 1e-6 and abs(evaluate(params, -tiny) - 1.0) < 1e-6)
    if not limits_ok:
        notes.append("one-sided limits at 0 are not -1/+1")

    image_ok = bool(np.all(np.abs(values) <= 1.0))
    if not image_ok:
        notes.append("image leaves [-1, 1]")

    schwarzian_max = float(np.max(schwarzian(params, grid)))
    if schwarzian_max >= 0:
        notes.append("Schwarzian derivative is not negative")

    k = params.coeff * params.s
    return ValidationReport(
        k1=k,
        k2=k,
        schwarzian_max=schwarzian_max,
        monotone_ok=monotone_ok,
        limits_ok=limits_ok,
        image_ok=image_ok,
        notes="; ".join(notes) if notes else "all checks passed",
    )


def distance_ratio_constant(params: MapParams, lo: float, hi: float, samples: int = 65) -> float:
    """
    D(w) * sup|f''| / inf f' over an interval w = [lo, hi] with |w| <= D(w)

    D(w) is the distance from w to 0. The value bounds |f''(x)/f'(y)| * D(w)
    for x, y in w, so it is the constant of the f''/f' distance estimate.
    """
    if lo >= hi:
        raise ValueError("interval must have lo < hi")
    if lo <= 0.0 <= hi:
        raise ValueError("interval must not contain 0")
    dist = min(abs(lo), abs(hi))
    if hi - lo > dist:
        raise ValueError("interval is longer than its distance to 0")

    xs = np.linspace(lo, hi, samples)
    sup_second = float(np.max(np.abs(second_derivative(params, xs))))
    inf_first = float(np.min(derivative(params, xs)))
    return dist * sup_second / inf_first
