import sys
from dataclasses import asdict
from typing import TYPE_CHECKING, Dict

from srb.observables import ObservablePair
from srb.srb_stats import clt_report, correlation_curve, large_deviation_curve

if TYPE_CHECKING:
    from runner.config import ExperimentConfig
    from runner.output import RunOutput


def _fit_fields(fit) -> Dict:
    if fit is None:
        return {"fitted_c": None, "fitted_tau": None, "r_squared": None, "fit_restricted": None}
    return {"fitted_c": fit.c, "fitted_tau": fit.tau, "r_squared": fit.r_squared, "fit_restricted": fit.restricted}


def run_correlations(config: "ExperimentConfig", output: "RunOutput") -> Dict:
    run = config.run
    pair = ObservablePair.of(run["phi"], run["psi"])
    curve = correlation_curve(
        config.map, pair, range(run["max_lag"] + 1), run["sample_size"], run["seed"],
        orbit_length=run["orbit_length"],
        burn_in=run["burn_in"],
        workers=config.workers,
    )
    fit = curve.fit
    output.emit_csv(
        "correlations",
        ["n", "covariance", "correlation", "fit_c", "fit_tau", "r2"],
        [(n, cov, cor, fit.c, fit.tau, fit.r_squared)
         for n, cov, cor in zip(curve.lags, curve.covariance, curve.correlation)],
    )
    print(f"📊 Correlation decay ({pair.phi}, {pair.psi}): tau={fit.tau:.4g}, r2={fit.r_squared:.4f}",
          file=sys.stderr)
    return {"phi": pair.phi, "psi": pair.psi, "holder_exponent": pair.holder_exponent,
            "variance": curve.covariance[0] if curve.lags[0] == 0 else None,
            "redrawn": curve.redrawn, **_fit_fields(fit)}


def run_deviations(config: "ExperimentConfig", output: "RunOutput") -> Dict:
    run = config.run
    curve = large_deviation_curve(
        config.map, run["phi"], run["epsilon"], run["n_values"], run["sample_size"], run["seed"],
        burn_in=run["burn_in"],
        density_bins=run["bins"],
        workers=config.workers,
    )
    fit = curve.fit
    output.emit_csv(
        "deviations",
        ["n", "fraction", "count", "fit_c", "fit_tau", "r2"],
        [(n, frac, count, fit.c, fit.tau, fit.r_squared)
         for n, frac, count in zip(curve.n_values, curve.fractions, curve.counts)],
    )
    if curve.epsilon_bias > 0.1 * curve.epsilon:
        print(f"⚠️ Density mean differs from the sample mean by {curve.epsilon_bias:.3g}", file=sys.stderr)
    return {"phi": run["phi"], "epsilon": curve.epsilon, "mean": curve.mean,
            "epsilon_bias": curve.epsilon_bias, **_fit_fields(fit)}


def run_clt(config: "ExperimentConfig", output: "RunOutput") -> Dict:
    run = config.run
    report = clt_report(config.map, run["phi"], run["clt_n"], run["sample_size"], run["seed"],
                        burn_in=run["burn_in"], blocks=run["blocks"], workers=config.workers)
    output.emit_csv(
        "clt",
        ["n", "ks_distance"],
        [(report.n, report.ks_distance), (4 * report.n, report.ks_distance_4n)],
    )
    if report.zero_variance:
        print(f"📊 {run['phi']}: zero variance", file=sys.stderr)
    else:
        print(f"📊 {run['phi']}: sigma2={report.sigma2:.4g}, KS {report.ks_distance:.4g} -> "
              f"{report.ks_distance_4n:.4g}", file=sys.stderr)
    return {"phi": run["phi"], "ks_decreased": report.ks_decreased, **asdict(report)}
