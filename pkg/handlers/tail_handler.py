import sys
from typing import TYPE_CHECKING, Dict

from dynamics.errors import DegenerateFit
from dynamics.orbit_engine import (
    deep_approach_fraction,
    finite_time_lyapunov,
    free_expansion_rate,
    slow_recurrence_fraction,
    tail_curve,
)

if TYPE_CHECKING:
    from runner.config import ExperimentConfig
    from runner.output import RunOutput

# free-expansion pieces get rare past this length
FREE_EXPANSION_STEPS = 50


def run_tail(config: "ExperimentConfig", output: "RunOutput") -> Dict:
    """
    Tail-set decay curve with its exponential fit, plus the deep-approach,
    slow-recurrence and Lyapunov side measurements
    """
    params, consts, run = config.map, config.consts, config.run
    seed, sample_size, n_max = run["seed"], run["sample_size"], run["n_max"]

    curve = tail_curve(params, consts, sample_size, n_max, seed, config.workers)
    output.emit_csv(
        "curve",
        ["n", "gamma_fraction", "fit_c", "fit_tau", "r2"],
        [(n, g, curve.fitted_c, curve.fitted_tau, curve.r_squared)
         for n, g in zip(curve.n_values, curve.gamma_fraction)],
    )
    print(f"📊 Tail fit: C={curve.fitted_c:.4g}, tau={curve.fitted_tau:.4g}, r2={curve.r_squared:.4f}",
          file=sys.stderr)
    if curve.fit_restricted:
        print("⚠️ Fit restricted to the positive fractions", file=sys.stderr)

    deep = [(n, deep_approach_fraction(params, sample_size, n, consts.alpha, seed, config.workers))
            for n in run["n_values"]]
    output.emit_csv("deep_approach", ["n", "fraction"], deep)

    lyapunov = finite_time_lyapunov(params, sample_size, n_max, seed, config.workers)
    slow = slow_recurrence_fraction(params, consts, sample_size, n_max, seed, config.workers)

    free = None
    try:
        free = free_expansion_rate(params, consts.delta, FREE_EXPANSION_STEPS, min(sample_size, 10000), seed)
        output.emit_csv("free_expansion", ["n", "min_log_derivative"],
                        zip(free.n_values, free.min_log_derivative))
    except DegenerateFit as e:
        print(f"⚠️ Free expansion fit skipped: {e}", file=sys.stderr)

    return {
        "fitted_c": curve.fitted_c,
        "fitted_tau": curve.fitted_tau,
        "r_squared": curve.r_squared,
        "nested": curve.is_nested(),
        "sample_size": curve.sample_size,
        "redrawn": curve.redrawn,
        "fit_restricted": curve.fit_restricted,
        "exceeds_fraction": curve.exceeds_fraction,
        "c_exp": consts.c_exp,
        "epsilon_rec": consts.epsilon_rec,
        "delta": consts.delta,
        "slow_recurrence_fraction": slow,
        "lyapunov": lyapunov,
        "free_expansion_log_c": free.log_c if free else None,
        "free_expansion_log_lambda": free.log_lambda if free else None,
    }
