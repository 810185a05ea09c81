import math

import numpy as np
import pytest

from dynamics.errors import InconsistentRecord
from dynamics.map_core import MapParams
from dynamics.orbit_engine import AnalysisConstants
from partition.grid import OUTSIDE, Grid, GridIndex, cell_bounds
from partition.partition_engine import (
    ESSENTIAL,
    INESSENTIAL,
    PartitionElement,
    RefineStats,
    ReturnRecord,
    bound_period,
    bound_period_report,
    chop_image,
    depth_frequency,
    depth_ledger,
    distortion_ratio,
    essential_depth_sum,
    initial_partition,
    ledger_summary,
    ledger_table,
    refine,
    run_partition,
)

MISIUREWICZ = MapParams(a=0.0, s=2.0)


@pytest.fixture
def small_consts():
    return AnalysisConstants.for_map(2.0, delta_big=3)


def test_cell_bounds_mirror():
    lo, hi = cell_bounds(4, 3)
    assert cell_bounds(-4, 3) == (-hi, -lo)
    assert math.exp(-5) < lo < hi <= math.exp(-4)


def test_grid_covers_critical_neighbourhood():
    grid = Grid(3, 5)
    assert grid.cells_per_side == 9 + 16 + 25
    assert grid.edges[0] == -grid.radius
    assert grid.edges[-1] == grid.radius
    assert np.all(np.diff(grid.edges) > 0)
    assert 0.0 in grid.edges


def test_grid_locate():
    grid = Grid(3, 5)
    lo, hi = cell_bounds(4, 2)
    cell = grid.locate(0.5 * (lo + hi))
    assert grid.index(int(cell)) == GridIndex(4, 2)
    assert grid.cell_of(GridIndex(4, 2)) == int(cell)
    assert grid.locate(0.5) == OUTSIDE


def test_grid_index_validation():
    with pytest.raises(ValueError):
        GridIndex(0, 1)
    with pytest.raises(ValueError):
        GridIndex(3, 10)


def test_bound_periods_within_two_sided_bound():
    consts = AnalysisConstants.for_map(MISIUREWICZ)
    periods = []
    for m in range(consts.delta_big, consts.delta_big + 21):
        report = bound_period_report(MISIUREWICZ, consts, m)
        assert report.within, report
        periods.append(report.p)
    assert all(b >= a for a, b in zip(periods, periods[1:]))


def test_bound_period_matches_single_point_iteration():
    consts = AnalysisConstants.for_map(MISIUREWICZ)
    m = consts.delta_big
    x = 0.5 * (math.exp(-m) + math.exp(-m - 1))
    c = -1.0
    j = 1
    x = -1.0 + 2.0 * x * x
    while abs(x - c) <= math.exp(-consts.beta * j):
        j += 1
        x = math.copysign(1.0, x) * (-1.0 + 2.0 * x * x)
        c = math.copysign(1.0, c) * (-1.0 + 2.0 * c * c)
    assert abs(bound_period(MISIUREWICZ, consts, m) - j) <= 2


def test_bound_period_is_symmetric():
    consts = AnalysisConstants.for_map(MISIUREWICZ)
    assert bound_period(MISIUREWICZ, consts, 7) == bound_period(MISIUREWICZ, consts, -7)


def test_bound_period_rejects_shallow_depth():
    consts = AnalysisConstants.for_map(MISIUREWICZ)
    with pytest.raises(ValueError):
        bound_period(MISIUREWICZ, consts, consts.delta_big - 1)


def test_chop_image_sandwiches_children():
    grid = Grid(3, 5)
    first, last = 60, 70
    lo = grid.cell_lo[first] + 0.3 * (grid.cell_hi[first] - grid.cell_lo[first])
    hi = grid.cell_hi[last] - 0.3 * (grid.cell_hi[last] - grid.cell_lo[last])
    children = chop_image(grid, lo, hi)
    assert len(children) == last - first - 1
    assert children[0][0] == lo
    assert children[-1][1] == hi
    for (c_lo, c_hi, cell, _), nxt in zip(children, children[1:] + [None]):
        assert cell != OUTSIDE
        assert c_lo <= grid.cell_lo[cell] and grid.cell_hi[cell] <= c_hi
        assert grid.plus_lo[cell] <= c_lo and c_hi <= grid.plus_hi[cell]
        if nxt is not None:
            assert c_hi == nxt[0]


def test_chop_image_splits_at_zero():
    grid = Grid(3, 5)
    children = chop_image(grid, -0.01, 0.02)
    assert all(c_hi <= 0.0 or c_lo >= 0.0 for c_lo, c_hi, _, _ in children)
    assert sum(c_hi - c_lo for c_lo, c_hi, _, _ in children) == pytest.approx(0.03)


def test_initial_partition(small_consts):
    part = initial_partition(MISIUREWICZ, small_consts, max_depth=5, horizon=10)
    assert part.size == 2 + 2 * (9 + 16 + 25)
    assert part.total_length() == pytest.approx(2.0, abs=1e-12)
    assert np.array_equal(part.x_lo[1:], part.x_hi[:-1])


def test_refine_preserves_length_and_order(small_consts):
    part = initial_partition(MISIUREWICZ, small_consts, max_depth=5, horizon=10)
    for n in range(1, 6):
        part = refine(part, MISIUREWICZ, small_consts, n)
        assert part.n == n
        assert part.total_length() == pytest.approx(2.0, abs=1e-12 * part.size)
        assert np.array_equal(part.x_lo[1:], part.x_hi[:-1])
        assert np.all(part.x_hi >= part.x_lo)
        assert np.all(part.y_hi >= part.y_lo)
        assert not np.any((part.y_lo < 0.0) & (part.y_hi > 0.0))


def test_refine_rejects_wrong_step(small_consts):
    part = initial_partition(MISIUREWICZ, small_consts, max_depth=5, horizon=10)
    with pytest.raises(InconsistentRecord):
        refine(part, MISIUREWICZ, small_consts, 3)


def test_return_records_are_consistent(small_consts):
    part = initial_partition(MISIUREWICZ, small_consts, max_depth=5, horizon=10)
    for n in range(1, 6):
        part = refine(part, MISIUREWICZ, small_consts, n)
    for i in range(0, part.size, max(1, part.size // 50)):
        element = part.element(i)
        times = [r.time for r in element.returns]
        assert times == sorted(set(times))
        assert all(r.host.depth >= small_consts.delta_big for r in element.returns)
        assert len(element.sides) == part.n


def _element(returns=(), image=(0.2, 0.6), sides=()):
    return PartitionElement(
        interval=image, image=image, returns=tuple(returns),
        state="free", bound_until=0, birth=0, sides=tuple(sides),
    )


def test_empty_ledger():
    ledger = depth_ledger(_element(), 10)
    assert ledger.essential_depths == ()
    assert ledger.inessential_sum == 0
    assert ledger.bound_sum == 0


def test_single_essential_return_ledger():
    record = ReturnRecord(time=3, host=GridIndex(7, 2), kind="essential", image_length=1e-4)
    ledger = depth_ledger(_element([record]), 10)
    assert ledger.essential_depths == (7,)
    assert ledger.breakdown == ((7, 0),)
    assert essential_depth_sum(_element([record]), 10, theta=5) == 7
    assert essential_depth_sum(_element([record]), 10, theta=8) == 0


def test_trailing_sums():
    records = [
        ReturnRecord(1, GridIndex(8, 1), "essential", 1e-4),
        ReturnRecord(4, GridIndex(5, 1), "inessential", 1e-3),
        ReturnRecord(6, GridIndex(-6, 1), "bound", 1e-3),
    ]
    ledger = depth_ledger(_element(records), 10)
    assert ledger.breakdown == ((8, 11),)
    assert ledger.inessential_sum == 5
    assert ledger.bound_sum == 6
    assert ledger.dominated


def test_distortion_at_time_zero():
    assert distortion_ratio(MISIUREWICZ, _element(image=(0.2, 0.6)), 0) == pytest.approx(3.0)


def test_distortion_of_tiny_element_is_one():
    ratio = distortion_ratio(MISIUREWICZ, _element(image=(0.5, 0.5 + 1e-10)), 0)
    assert ratio == pytest.approx(1.0, abs=1e-8)


def test_distortion_needs_two_probes():
    with pytest.raises(ValueError):
        distortion_ratio(MISIUREWICZ, _element(), 0, probes=1)


def test_depth_frequency_without_deep_returns(small_consts):
    part = initial_partition(MISIUREWICZ, small_consts, max_depth=5, horizon=10)
    assert depth_frequency(part, theta=6).mass == {}


def test_depth_frequency_mass_bounded(small_consts):
    run = run_partition(MISIUREWICZ, small_consts, n_part=6, max_depth=5, distortion_every=2)
    frequency = depth_frequency(run.partition, small_consts.delta_big, MISIUREWICZ, small_consts)
    assert 0.0 <= frequency.total <= 2.0
    assert all(m >= small_consts.delta_big for m in frequency.mass)


def test_run_partition_records(small_consts):
    run = run_partition(MISIUREWICZ, small_consts, n_part=6, max_depth=5, distortion_every=2)
    assert run.steps == 6
    assert not run.truncated
    assert run.partition.total_length() == pytest.approx(2.0, abs=1e-9)
    assert [n for n, _, _ in run.distortion] == [2, 4, 6]
    for _, ratio, count in run.distortion:
        assert count == 0 or ratio >= 1.0


def test_run_partition_truncates(small_consts):
    run = run_partition(MISIUREWICZ, small_consts, n_part=6, max_elements=50, max_depth=5)
    assert run.truncated
    assert run.steps == 0


def test_depth_frequency_counts_every_essential_depth(small_consts):
    fresh = depth_frequency(initial_partition(MISIUREWICZ, small_consts, max_depth=5, horizon=10), theta=3)
    part = initial_partition(MISIUREWICZ, small_consts, max_depth=5, horizon=10)
    row = 1 + part.grid.cell_of(GridIndex(4, 2))
    length = part.x_hi[row] - part.x_lo[row]
    log = part.log
    node = log.append([part.node[row]], 1, [5], [3], ESSENTIAL, [1e-3])[0]
    node = log.append([node], 2, [3], [1], INESSENTIAL, [2e-3])[0]
    # a second return at the same depth is not counted twice
    part.node[row] = log.append([node], 3, [-5], [7], ESSENTIAL, [1e-3])[0]

    frequency = depth_frequency(part, theta=3)
    assert frequency.mass[3] == pytest.approx(fresh.mass[3])
    assert frequency.mass[4] == pytest.approx(fresh.mass[4])
    assert frequency.mass[5] == pytest.approx(fresh.mass[5] + length)
    assert frequency.deepest_mass[4] == pytest.approx(fresh.mass[4] - length)
    assert frequency.deepest_mass[5] == pytest.approx(fresh.mass[5] + length)
    assert frequency.total == pytest.approx(fresh.total)


def test_depth_frequency_respects_theta(small_consts):
    part = initial_partition(MISIUREWICZ, small_consts, max_depth=5, horizon=10)
    frequency = depth_frequency(part, theta=4)
    assert sorted(frequency.mass) == [4, 5]
    assert frequency.mass == frequency.deepest_mass
    with pytest.raises(ValueError):
        depth_frequency(part, theta=2)


def test_ledger_table_reports_essential_depth_sum(small_consts):
    part = initial_partition(MISIUREWICZ, small_consts, max_depth=5, horizon=10)
    table = ledger_table(part, theta=4)
    assert len(table) == part.size
    outer = table[0]
    assert outer[3] == 0 and outer[4] == 0
    for row, x_lo, x_hi, f_n, essential, inessential, bound, dominated in table[1:-1]:
        depth = part.grid.index(row - 1).depth
        assert (x_lo, x_hi) == (part.x_lo[row], part.x_hi[row])
        assert f_n == (depth if depth >= 4 else 0)
        assert essential == 1
        assert inessential == bound == 0
        assert dominated
    assert len(ledger_table(part, theta=4, limit=10)) <= 10


@pytest.fixture(scope="module")
def small_run():
    """Delta=3 grid down to depth 5, refined step by step to n=10"""
    consts = AnalysisConstants.for_map(2.0, delta_big=3)
    stats = RefineStats()
    generations = [initial_partition(MISIUREWICZ, consts, max_depth=5, horizon=10)]
    for n in range(1, 11):
        generations.append(refine(generations[-1], MISIUREWICZ, consts, n, stats))
    run = run_partition(MISIUREWICZ, consts, n_part=10, max_depth=5, distortion_every=2)
    return consts, generations, stats, run


def test_small_run_matches_run_partition(small_run):
    _, generations, stats, run = small_run
    assert run.steps == 10
    assert not run.truncated
    assert np.array_equal(run.partition.x_lo, generations[-1].x_lo)
    assert stats.growth_pairs == run.stats.growth_pairs


def test_small_run_refines_monotonically(small_run):
    _, generations, _, _ = small_run
    for old, new in zip(generations, generations[1:]):
        parent = np.searchsorted(old.x_lo, new.x_lo, side="right") - 1
        assert np.all(parent >= 0)
        assert np.all(new.x_hi <= old.x_hi[parent])
        assert np.all(np.isin(old.x_lo, new.x_lo))
        assert new.size >= old.size


def test_small_run_children_sandwich_their_host(small_run):
    _, generations, _, _ = small_run
    checked = 0
    for n, part in enumerate(generations[1:], start=1):
        grid, log = part.grid, part.log
        fresh = (part.birth == n) & (log.time[part.node] == n) & (log.kind[part.node] == ESSENTIAL)
        for i in np.flatnonzero(fresh):
            node = part.node[i]
            cell = grid.cell_of(GridIndex(int(log.m[node]), int(log.k[node])))
            lo, hi = part.y_lo[i], part.y_hi[i]
            assert grid.plus_lo[cell] <= lo and hi <= grid.plus_hi[cell]
            if grid.contains_full_cell(np.array([lo]), np.array([hi]))[0]:
                assert lo <= grid.cell_lo[cell] and grid.cell_hi[cell] <= hi
                checked += 1
    assert checked > 0


def test_small_run_images_double_between_returns(small_run):
    _, _, stats, run = small_run
    assert stats.growth_pairs
    for _, before, after in stats.growth_pairs:
        assert after >= 2.0 * before
    assert run.doubling_fraction == 1.0


def test_small_run_escapes_reenter_large(small_run):
    _, _, stats, run = small_run
    for _, length in stats.escape_reentries:
        assert length >= run.escape_threshold
    assert math.isnan(run.escape_ok_fraction) or run.escape_ok_fraction == 1.0


def test_small_run_ledgers_are_dominated(small_run):
    consts, _, _, run = small_run
    summary = ledger_summary(run.partition)
    assert summary["elements_scanned"] >= 1
    assert summary["dominated_fraction"] == 1.0
    assert math.isfinite(summary["max_trailing_ratio"])
    for *_, dominated in ledger_table(run.partition, consts.theta):
        assert dominated


def test_small_run_depth_frequency_decays(small_run):
    consts, _, _, run = small_run
    frequency = depth_frequency(run.partition, consts.theta, MISIUREWICZ, consts)
    assert frequency.trend is not None
    assert frequency.slope_ok
    for m, mass in frequency.mass.items():
        assert 0.0 < mass <= 2.0
        assert frequency.deepest_mass.get(m, 0.0) <= mass + 1e-15


def test_small_run_distortion_stays_finite(small_run):
    _, _, _, run = small_run
    measured = [(n, ratio) for n, ratio, count in run.distortion if count > 0]
    assert measured
    for _, ratio in measured:
        assert math.isfinite(ratio) and ratio >= 1.0
    trend = run.distortion_trend()
    if trend is not None:
        assert math.isfinite(trend.slope)
        assert math.isfinite(trend.intercept)
