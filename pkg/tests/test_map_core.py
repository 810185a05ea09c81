import math

import numpy as np
import pytest

from dynamics.errors import SingularityHit
from dynamics.map_core import (
    MapParams,
    derivative,
    distance_ratio_constant,
    evaluate,
    inverse_branch,
    schwarzian,
    second_derivative,
    validate_params,
)

MISIUREWICZ = MapParams(a=0.0, s=2.0)


@pytest.mark.parametrize("x, expected", [(1.0, 1.0), (0.5, -0.5), (-1.0, -1.0)])
def test_evaluate_at_misiurewicz_parameter(x, expected):
    assert evaluate(MISIUREWICZ, x) == pytest.approx(expected)


@pytest.mark.parametrize("x, expected", [(0.5, 2.0), (1.0, 4.0), (-0.5, 2.0)])
def test_derivative_closed_form(x, expected):
    assert derivative(MISIUREWICZ, x) == pytest.approx(expected)


@pytest.mark.parametrize("params", [MISIUREWICZ, MapParams(a=0.2, s=1.7), MapParams(a=0.45, s=2.9)])
def test_map_is_odd(params):
    x = np.linspace(1e-6, 1.0, 501)
    assert np.array_equal(evaluate(params, -x), -evaluate(params, x))
    assert np.array_equal(derivative(params, -x), derivative(params, x))


@pytest.mark.parametrize("params", [MISIUREWICZ, MapParams(a=0.1, s=1.5), MapParams(a=0.3, s=2.7)])
def test_derivative_envelope_within_four_ulp(params):
    k = params.coeff * params.s
    x = np.concatenate([-np.geomspace(1.0, 1e-6, 200), np.geomspace(1e-6, 1.0, 200)])
    ratio = derivative(params, x) / np.abs(x) ** (params.s - 1.0)
    assert np.all(np.abs(ratio - k) <= 4 * np.spacing(k))
    report = validate_params(params, 64)
    assert report.k1 == report.k2 == k


@pytest.mark.parametrize("params", [MISIUREWICZ, MapParams(a=0.1, s=1.5), MapParams(a=0.4, s=1.2)])
def test_derivative_matches_central_difference(params):
    x = np.concatenate([-np.linspace(1.0, 0.01, 100), np.linspace(0.01, 1.0, 100)])
    h = 1e-7 * np.maximum(np.abs(x), 0.1)
    numeric = (evaluate(params, x + h) - evaluate(params, x - h)) / (2 * h)
    assert np.all(np.abs(numeric / derivative(params, x) - 1.0) <= 1e-6)


def test_scalar_in_scalar_out():
    assert isinstance(evaluate(MISIUREWICZ, 0.3), float)
    assert isinstance(derivative(MISIUREWICZ, np.array([0.3, 0.4])), np.ndarray)


@pytest.mark.parametrize("func", [evaluate, derivative, second_derivative, schwarzian])
def test_zero_is_singular(func):
    with pytest.raises(SingularityHit):
        func(MISIUREWICZ, 0.0)
    with pytest.raises(SingularityHit):
        func(MISIUREWICZ, np.array([0.5, 0.0]))


def test_second_derivative_at_s2_is_constant_magnitude():
    assert second_derivative(MISIUREWICZ, 0.3) == pytest.approx(4.0)
    assert second_derivative(MISIUREWICZ, -0.3) == pytest.approx(-4.0)


def test_schwarzian_negative():
    x = np.linspace(-1.0, 1.0, 41)
    x = x[x != 0]
    assert np.all(schwarzian(MapParams(a=0.3, s=1.2), x) < 0)


@pytest.mark.parametrize("kwargs", [
    {"s": 1.0},
    {"s": 3.5},
    {"a": -0.1},
    {"a": 0.6, "a_max": 0.5},
    {"a_max": 2.0},
])
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ValueError):
        MapParams(**kwargs)


def test_critical_values():
    assert MISIUREWICZ.critical_value(1) == -1.0
    assert MISIUREWICZ.critical_value(-1) == 1.0


def test_validate_misiurewicz():
    report = validate_params(MISIUREWICZ, 64)
    assert report.monotone_ok
    assert report.limits_ok
    assert report.image_ok
    assert report.schwarzian_max < 0
    assert report.k1 == pytest.approx(4.0)
    assert report.k2 == pytest.approx(4.0)
    assert report.ok


def test_validate_constants_at_small_parameter():
    report = validate_params(MapParams(a=0.1, s=1.5), 64)
    assert report.k1 == pytest.approx(2.85)
    assert report.k2 == pytest.approx(2.85)


def test_validate_rejects_coarse_grid():
    with pytest.raises(ValueError):
        validate_params(MISIUREWICZ, 8)


def test_inverse_branch_undoes_the_map():
    params = MapParams(a=0.1, s=1.5)
    for x in (0.2, 0.7, -0.4):
        side = 1 if x > 0 else -1
        assert inverse_branch(params, evaluate(params, x), side) == pytest.approx(x)


def test_distance_ratio_constant():
    r = math.exp(-5)
    assert distance_ratio_constant(MISIUREWICZ, r, 2 * r) == pytest.approx(1.0)
    assert distance_ratio_constant(MapParams(a=0.0, s=1.5), r, 2 * r) == pytest.approx(0.5)


@pytest.mark.parametrize("lo, hi", [(-0.1, 0.1), (0.1, 0.3), (0.2, 0.1)])
def test_distance_ratio_constant_rejects_bad_intervals(lo, hi):
    with pytest.raises(ValueError):
        distance_ratio_constant(MISIUREWICZ, lo, hi)
