import math
import sys
from typing import TYPE_CHECKING, Dict

import numpy as np

from dynamics.orbit_engine import finite_time_lyapunov
from srb.srb_stats import (
    density_mean,
    histogram_density,
    l1_distance,
    metric_entropy,
    stability_ladder,
    ulam_density,
    ulam_matrix,
)

if TYPE_CHECKING:
    from runner.config import ExperimentConfig
    from runner.output import RunOutput


def _estimates(config: "ExperimentConfig"):
    params, run = config.map, config.run
    hist = histogram_density(params, run["burn_in"], run["n_steps"], run["sample_size"], run["bins"],
                             run["seed"], config.workers)
    ulam = ulam_density(params, run["bins"], run["subdivisions"], run["tol"], run["max_iter"])
    return hist, ulam


def run_density(config: "ExperimentConfig", output: "RunOutput") -> Dict:
    """
    Histogram and Ulam estimates of the invariant density on the same bins

    Returns:
        dict with the L1 gap between the two, Ulam diagnostics and the
        mean of run.phi under each estimate
    """
    params, run = config.map, config.run
    hist, ulam = _estimates(config)
    width = 2.0 / hist.bins
    output.emit_csv(
        "density",
        ["x", "histogram_mass", "ulam_mass", "histogram_density", "ulam_density"],
        zip(hist.centers, hist.mass, ulam.mass, hist.mass / width, ulam.mass / width),
    )

    matrix = ulam_matrix(params, run["bins"], run["subdivisions"])
    row_error = float(np.max(np.abs(np.asarray(matrix.sum(axis=1)).ravel() - 1.0)))
    gap = l1_distance(hist, ulam)
    print(f"📊 Histogram vs Ulam L1 = {gap:.4g} at {hist.bins} bins", file=sys.stderr)
    return {
        "bins": hist.bins,
        "l1_histogram_ulam": gap,
        "ulam_iterations": ulam.meta["iterations"],
        "ulam_residual": ulam.meta["residual"],
        "ulam_row_error": row_error,
        "histogram_redrawn": hist.meta["redrawn"],
        "phi": run["phi"],
        "phi_mean_histogram": density_mean(hist, run["phi"], params),
        "phi_mean_ulam": density_mean(ulam, run["phi"], params),
    }


def run_stability(config: "ExperimentConfig", output: "RunOutput") -> Dict:
    """L1 density distance along the a, a + h ladder"""
    params, run = config.map, config.run
    ladder = stability_ladder(
        params, run["steps"],
        burn_in=run["burn_in"],
        n=run["n_steps"],
        sample_size=run["sample_size"],
        bins=run["bins"],
        seed=run["seed"],
        subdivisions=run["subdivisions"],
        tol=run["tol"],
        max_iter=run["max_iter"],
        workers=config.workers,
    )
    output.emit_csv("stability", ["h", "l1", "noise", "l1_ulam"],
                    [(r.h, r.l1, r.noise, r.l1_ulam) for r in ladder.rungs])
    if not ladder.decreasing:
        print("⚠️ L1 distance does not decrease along the ladder", file=sys.stderr)
    return {
        "base_a": ladder.base_a,
        "decreasing": ladder.decreasing,
        "noise": ladder.rungs[0].noise if ladder.rungs else None,
    }


def run_entropy(config: "ExperimentConfig", output: "RunOutput") -> Dict:
    """Metric entropy from both density estimates, next to the mean Lyapunov exponent"""
    params, run = config.map, config.run
    hist, ulam = _estimates(config)
    entropy_hist = metric_entropy(params, hist)
    entropy_ulam = metric_entropy(params, ulam)
    lyapunov = finite_time_lyapunov(params, run["sample_size"], run["n_max"], run["seed"], config.workers)
    output.emit_csv("entropy", ["method", "entropy"], [("histogram", entropy_hist), ("ulam", entropy_ulam)])
    print(f"📊 Entropy: histogram {entropy_hist:.6g}, Ulam {entropy_ulam:.6g}, "
          f"Lyapunov {lyapunov['mean']:.6g}", file=sys.stderr)
    return {
        "entropy_histogram": entropy_hist,
        "entropy_ulam": entropy_ulam,
        "lyapunov_mean": lyapunov["mean"],
        "log2": math.log(2.0),
    }
