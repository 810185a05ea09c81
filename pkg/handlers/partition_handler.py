import math
import sys
from typing import TYPE_CHECKING, Dict

from partition.partition_engine import (
    bound_period_report,
    depth_frequency,
    ledger_summary,
    ledger_table,
    run_partition,
)

if TYPE_CHECKING:
    from runner.config import ExperimentConfig
    from runner.output import RunOutput


def run_partition_experiment(config: "ExperimentConfig", output: "RunOutput") -> Dict:
    """
    Bound-period table for |m| in [Delta, Delta + bound_span], then a
    partition run with its distortion, growth, escape and depth records
    """
    params, consts, run = config.map, config.consts, config.run
    depths = range(consts.delta_big, consts.delta_big + run["bound_span"] + 1)

    reports = [bound_period_report(params, consts, sign * m) for m in depths for sign in (1, -1)]
    output.emit_csv(
        "bound_periods",
        ["m", "p", "lower", "upper", "within", "expansion_log_min", "expansion_target", "c0", "discarded"],
        [(r.m, r.p, r.lower, r.upper, r.within, r.expansion_log_min, r.expansion_target, r.c0, r.discarded)
         for r in reports],
    )
    within = sum(1 for r in reports if r.within)
    print(f"📊 Bound periods within bounds: {within}/{len(reports)}", file=sys.stderr)

    result = run_partition(
        params, consts,
        n_part=run["n_part"],
        max_elements=run["max_elements"],
        max_depth=run["max_depth"],
        distortion_every=run["distortion_every"],
        probes=run["probes"],
    )
    part = result.partition
    output.emit_csv("distortion", ["n", "max_ratio", "elements"], result.distortion)
    output.emit_csv(
        "growth_pairs",
        ["n", "before", "after", "ratio"],
        [(n, before, after, after / before) for n, before, after in result.stats.growth_pairs],
    )
    output.emit_csv("escapes", ["n", "length"], result.stats.escape_reentries)

    frequency = depth_frequency(part, consts.theta, params, consts)
    found = sorted(set(frequency.mass) | set(frequency.deepest_mass))
    output.emit_csv("depth_frequency", ["m", "mass", "deepest_mass"],
                    [(m, frequency.mass.get(m, 0.0), frequency.deepest_mass.get(m, 0.0)) for m in found])
    output.emit_csv(
        "ledgers",
        ["element", "x_lo", "x_hi", "F_n", "essential_returns", "inessential_sum", "bound_sum", "dominated"],
        ledger_table(part, consts.theta),
    )

    trend = result.distortion_trend()
    ledgers = ledger_summary(part)
    if not math.isnan(result.doubling_fraction) and result.doubling_fraction < 1.0:
        print(f"⚠️ Doubling held for {result.doubling_fraction:.4%} of pairs", file=sys.stderr)

    return {
        "steps": result.steps,
        "truncated": result.truncated,
        "elements": part.size,
        "total_length": part.total_length(),
        "bound_within_fraction": within / len(reports),
        "doubling_fraction": result.doubling_fraction,
        "growth_pairs": len(result.stats.growth_pairs),
        "escape_threshold": result.escape_threshold,
        "escape_ok_fraction": result.escape_ok_fraction,
        "escape_reentries": len(result.stats.escape_reentries),
        "essential_returns": result.stats.essential_returns,
        "inessential_returns": result.stats.inessential_returns,
        "bound_returns": result.stats.bound_returns,
        "bound_splits": result.stats.bound_splits,
        "distortion_max": max((r for _, r, _ in result.distortion if not math.isnan(r)), default=None),
        "distortion_slope": trend.slope if trend else None,
        "distortion_slope_upper95": trend.slope_upper95 if trend else None,
        "distortion_plateau": trend.intercept + trend.slope * result.steps if trend else None,
        "depth_slope": frequency.trend.slope if frequency.trend else None,
        "depth_slope_bound": frequency.slope_bound,
        "depth_slope_ok": frequency.slope_ok,
        "ledger": ledgers,
    }
