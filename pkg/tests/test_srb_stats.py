import math

import numpy as np
import pytest

from dynamics.errors import BinMismatch, DegenerateFit, NoConvergence
from dynamics.map_core import MapParams
from srb.observables import COBOUNDARY, ObservablePair, observable_names, resolve
from srb.srb_stats import (
    DensityEstimate,
    clt_report,
    correlation_curve,
    covariance_from_sums,
    density_mean,
    ensemble,
    histogram_density,
    l1_distance,
    lagged_sums,
    large_deviation_curve,
    metric_entropy,
    stability_ladder,
    ulam_density,
    ulam_matrix,
)

MISIUREWICZ = MapParams(a=0.0, s=2.0)


def arcsine_density(bins: int) -> DensityEstimate:
    """Exact invariant density of the a=0, s=2 map, binned"""
    edges = np.linspace(-1.0, 1.0, bins + 1)
    mass = np.diff(np.arcsin(edges)) / math.pi
    return DensityEstimate(bins=bins, mass=mass / mass.sum(), method="exact")


def test_density_estimate_validation():
    with pytest.raises(ValueError):
        DensityEstimate(bins=2, mass=np.array([0.6, 0.6]), method="exact")
    with pytest.raises(ValueError):
        DensityEstimate(bins=2, mass=np.array([1.5, -0.5]), method="exact")
    with pytest.raises(ValueError):
        DensityEstimate(bins=3, mass=np.array([0.5, 0.5]), method="exact")


def test_histogram_is_normalised():
    density = histogram_density(MISIUREWICZ, burn_in=10, n=640, sample_size=200, bins=64, seed=1)
    assert density.mass.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(density.mass >= 0)
    assert density.method == "histogram"


def test_histogram_single_bin():
    density = histogram_density(MISIUREWICZ, burn_in=0, n=10, sample_size=50, bins=1, seed=0)
    assert np.array_equal(density.mass, [1.0])


def test_histogram_matches_arcsine_law():
    density = histogram_density(MISIUREWICZ, burn_in=20, n=2000, sample_size=200, bins=32, seed=4)
    assert l1_distance(density, arcsine_density(32)) < 0.05


def test_histogram_precondition():
    with pytest.raises(ValueError):
        histogram_density(MISIUREWICZ, burn_in=0, n=100, sample_size=10, bins=64, seed=0)


def test_histogram_is_worker_independent():
    serial = histogram_density(MISIUREWICZ, 5, 320, 5000, 32, seed=9, workers=1)
    parallel = histogram_density(MISIUREWICZ, 5, 320, 5000, 32, seed=9, workers=2)
    assert np.array_equal(serial.mass, parallel.mass)


def test_ulam_rows_are_stochastic():
    matrix = ulam_matrix(MapParams(a=0.05, s=1.5), 64, 16)
    rows = np.asarray(matrix.sum(axis=1)).ravel()
    assert np.max(np.abs(rows - 1.0)) < 1e-12


def test_ulam_returns_fixed_point():
    tol = 1e-10
    density = ulam_density(MISIUREWICZ, bins=64, subdivisions=16, tol=tol)
    matrix = ulam_matrix(MISIUREWICZ, 64, 16)
    residual = np.abs(matrix.T @ density.mass - density.mass).sum()
    assert residual < tol
    assert density.mass.sum() == pytest.approx(1.0, abs=1e-12)


def test_ulam_agrees_with_arcsine_law():
    # the edge bins at the fixed points x = 1 and x = -1 carry most of the discretisation error
    density = ulam_density(MISIUREWICZ, bins=1024, subdivisions=32)
    assert l1_distance(density, arcsine_density(1024)) < 0.1


def test_ulam_reports_non_convergence():
    with pytest.raises(NoConvergence) as info:
        ulam_density(MISIUREWICZ, bins=32, subdivisions=8, tol=0.0, max_iter=3)
    assert info.value.max_iter == 3


@pytest.mark.parametrize("kwargs", [{"bins": 8}, {"subdivisions": 4}])
def test_ulam_preconditions(kwargs):
    with pytest.raises(ValueError):
        ulam_density(MISIUREWICZ, **kwargs)


def test_l1_distance():
    d = arcsine_density(16)
    assert l1_distance(d, d) == 0.0
    left = DensityEstimate(bins=2, mass=np.array([1.0, 0.0]), method="exact")
    right = DensityEstimate(bins=2, mass=np.array([0.0, 1.0]), method="exact")
    assert l1_distance(left, right) == 2.0
    with pytest.raises(BinMismatch):
        l1_distance(d, left)


def test_entropy_of_exact_density():
    assert metric_entropy(MISIUREWICZ, arcsine_density(1024)) == pytest.approx(math.log(2.0), abs=1e-2)


def test_entropy_of_mass_at_fixed_point():
    mass = np.zeros(1024)
    mass[-1] = 1.0
    density = DensityEstimate(bins=1024, mass=mass, method="exact")
    # all mass in the last bin, centred at 1 - 1/1024
    assert metric_entropy(MISIUREWICZ, density) == pytest.approx(math.log(4.0 * (1.0 - 1.0 / 1024)), rel=1e-12)


def test_entropy_of_two_bin_mass():
    mass = np.zeros(1024)
    mass[[100, 700]] = [0.25, 0.75]
    density = DensityEstimate(bins=1024, mass=mass, method="exact")
    centres = [-1.0 + (2 * b + 1) / 1024 for b in (100, 700)]
    expected = sum(w * math.log(4.0 * abs(c)) for w, c in zip((0.25, 0.75), centres))
    assert metric_entropy(MISIUREWICZ, density) == pytest.approx(expected, rel=1e-12)


def test_entropy_stable_under_refinement():
    coarse = arcsine_density(256)
    fine = DensityEstimate(bins=512, mass=np.repeat(coarse.mass / 2.0, 2), method="exact")
    assert metric_entropy(MISIUREWICZ, fine) == pytest.approx(metric_entropy(MISIUREWICZ, coarse), abs=1e-3)


def test_density_mean_of_symmetric_density():
    assert density_mean(arcsine_density(64), "identity") == pytest.approx(0.0, abs=1e-12)
    assert density_mean(arcsine_density(64), "abs") == pytest.approx(2.0 / math.pi, abs=1e-2)


def test_observable_catalog():
    assert set(observable_names()) == {"identity", "cos_pi", "abs", "indicator_half", COBOUNDARY}
    assert resolve("indicator_half")(np.array([-0.5, 0.0, 0.5])).tolist() == [0.0, 1.0, 1.0]
    with pytest.raises(ValueError):
        resolve("square")
    with pytest.raises(ValueError):
        resolve(COBOUNDARY)
    with pytest.raises(ValueError):
        ObservablePair("identity", "square")


def test_zero_lag_covariance_is_sample_variance():
    rng = np.random.default_rng(0)
    orbits, _ = ensemble(MISIUREWICZ, rng, 50, 10, 300)
    values = resolve("cos_pi")(orbits)
    sums = lagged_sums(values, values, [0, 1, 2], 250)
    assert covariance_from_sums(sums)[0] == pytest.approx(np.var(values[:250]), abs=1e-10)


def test_constant_observable_has_no_correlation():
    values = np.full((100, 20), 0.7)
    sums = lagged_sums(values, values, [0, 1, 5], 80)
    assert np.allclose(covariance_from_sums(sums), 0.0, atol=1e-12)


def test_identity_correlations_at_misiurewicz_parameter():
    # in the angle coordinate the map is doubling mod pi and Cov_1 = 2 / (3 pi)
    pair = ObservablePair.of("identity", "identity")
    curve = correlation_curve(MISIUREWICZ, pair, range(6), sample_size=500, seed=3, orbit_length=500,
                              burn_in=20)
    assert curve.lags == (0, 1, 2, 3, 4, 5)
    assert curve.covariance[0] == pytest.approx(0.5, abs=0.02)
    assert curve.correlation[1] == pytest.approx(2.0 / (3.0 * math.pi), abs=0.02)
    assert all(b < a for a, b in zip(curve.correlation, curve.correlation[1:]))
    assert curve.correlation[5] < 0.05
    assert curve.fit.tau > 0


def test_large_deviation_impossible_epsilon():
    curve = large_deviation_curve(MISIUREWICZ, "identity", epsilon=2.5, n_range=[10, 20, 40],
                                  sample_size=200, seed=0, density_bins=32, require_fit=False)
    assert curve.fractions == (0.0, 0.0, 0.0)
    assert curve.fit is None
    with pytest.raises(DegenerateFit):
        large_deviation_curve(MISIUREWICZ, "identity", epsilon=2.5, n_range=[10, 20, 40],
                              sample_size=200, seed=0, density_bins=32)


def test_large_deviations_shrink_with_n():
    curve = large_deviation_curve(MISIUREWICZ, "identity", epsilon=0.1, n_range=[10, 40, 160, 640],
                                  sample_size=2000, seed=1, density_bins=64, require_fit=False)
    assert curve.fractions[-1] < curve.fractions[0]
    assert curve.epsilon_bias < 0.05


def test_large_deviation_needs_positive_epsilon():
    with pytest.raises(ValueError):
        large_deviation_curve(MISIUREWICZ, "identity", 0.0, [10], 100, 0)


def test_clt_flags_coboundary():
    report = clt_report(MISIUREWICZ, COBOUNDARY, n=1000, sample_size=1000, seed=2, burn_in=20)
    assert report.zero_variance
    assert report.sigma2 < 1e-2


def test_clt_identity_variance():
    report = clt_report(MISIUREWICZ, "identity", n=1000, sample_size=1000, seed=3, burn_in=20)
    assert not report.zero_variance
    # variance 1/2 plus twice the positive lagged covariances
    assert 1.0 < report.sigma2 < 1.6
    assert report.sigma2_err > 0
    assert 0.0 <= report.ks_distance <= 1.0
    assert 0.0 <= report.ks_distance_4n <= 1.0


def test_clt_compares_both_scales():
    sample = 2000
    report = clt_report(MISIUREWICZ, "identity", n=1000, sample_size=sample, seed=5, burn_in=20)
    assert report.ks_decreased == (report.ks_distance_4n < report.ks_distance)
    assert report.berry_esseen_sup == report.ks_distance
    slope = math.log(report.ks_distance_4n / report.ks_distance) / math.log(4.0)
    assert report.berry_esseen_slope == pytest.approx(slope)
    # both scales already sit inside the Kolmogorov band of the sample
    band = 1.95 / math.sqrt(sample)
    assert report.ks_distance < band
    assert report.ks_distance_4n < band
    assert abs(report.ks_distance - report.ks_distance_4n) < band


def test_clt_preconditions():
    with pytest.raises(ValueError):
        clt_report(MISIUREWICZ, "identity", n=100, sample_size=100, seed=0)


def test_stability_ladder_rows():
    params = MapParams(a=0.0, s=1.5)
    ladder = stability_ladder(params, steps=(0.04, 0.02), burn_in=10, n=320, sample_size=100, bins=32,
                              seed=0, subdivisions=8)
    assert [r.h for r in ladder.rungs] == [0.04, 0.02]
    for rung in ladder.rungs:
        assert 0.0 <= rung.l1 <= 2.0
        assert 0.0 <= rung.l1_ulam <= 2.0
        assert rung.noise == ladder.rungs[0].noise
