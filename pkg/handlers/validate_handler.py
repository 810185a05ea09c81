import math
import sys
from typing import TYPE_CHECKING, Dict

import numpy as np

from dynamics.map_core import derivative, distance_ratio_constant, evaluate, schwarzian, validate_params

if TYPE_CHECKING:
    from runner.config import ExperimentConfig
    from runner.output import RunOutput


def run_validate(config: "ExperimentConfig", output: "RunOutput") -> Dict:
    """
    Structural checks of the map plus a sampled grid of f, f' and Sf

    Args:
        config: experiment config; uses map.* and run.grid_size
        output: run output for validate_grid.csv

    Returns:
        dict of scalar results
    """
    params = config.map
    grid_size = config.run["grid_size"]
    report = validate_params(params, grid_size)

    half = grid_size // 2
    positive = np.arange(1, half + 1, dtype=np.float64) / half
    grid = np.concatenate([-positive[::-1], positive])
    rows = zip(grid, evaluate(params, grid), derivative(params, grid), schwarzian(params, grid))
    output.emit_csv("grid", ["x", "f", "df", "schwarzian"], rows)

    # an interval one radius long at distance e^-Delta from the singularity
    radius = config.consts.critical_radius
    c1 = distance_ratio_constant(params, radius, 2.0 * radius)

    if report.ok:
        print(f"✅ Map checks passed: K1={report.k1:.6g}, max Sf={report.schwarzian_max:.6g}", file=sys.stderr)
    else:
        print(f"⚠️ Map checks failed: {report.notes}", file=sys.stderr)

    return {
        "k1": report.k1,
        "k2": report.k2,
        "schwarzian_max": report.schwarzian_max,
        "monotone_ok": report.monotone_ok,
        "limits_ok": report.limits_ok,
        "image_ok": report.image_ok,
        "ok": report.ok,
        "notes": report.notes,
        "distance_ratio_constant": c1,
        "critical_values": [params.critical_value(1), params.critical_value(-1)],
        "log_coeff_s": math.log(params.coeff * params.s),
    }
