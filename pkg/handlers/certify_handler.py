import sys
from dataclasses import asdict
from typing import TYPE_CHECKING, Dict

from parameters.parameter_lab import certify, scan

if TYPE_CHECKING:
    from runner.config import ExperimentConfig
    from runner.output import RunOutput

REPORT_COLUMNS = ["a", "certified", "c2_margin", "c3_margin", "fa_fraction", "coverage", "c4_ok",
                  "lyapunov_plus", "lyapunov_minus"]


def _row(report):
    return [report.param_a, report.certified, report.c2_margin, report.c3_margin, report.fa_fraction,
            report.coverage, report.c4_ok, report.lyapunov_plus, report.lyapunov_minus]


def run_certify(config: "ExperimentConfig", output: "RunOutput") -> Dict:
    """Certify the configured parameter at run.horizon"""
    run = config.run
    report = certify(config.map, config.consts, run["horizon"], run["eps_fa"], run["coverage_bins"],
                     run["require_c4"])
    output.emit_csv("certificate", REPORT_COLUMNS, [_row(report)])
    if report.certified:
        print(f"✅ a={report.param_a} certified at horizon {report.horizon}", file=sys.stderr)
    else:
        print(f"⚠️ a={report.param_a} not certified: {report.reason}", file=sys.stderr)
    return asdict(report)


def run_scan(config: "ExperimentConfig", output: "RunOutput") -> Dict:
    """Certify every point of the a grid and record the running certified share"""
    run = config.run
    result = scan(
        (run["a_lo"], run["a_hi"]), run["grid"], config.consts,
        horizon=run["horizon"],
        eps_fa=run["eps_fa"],
        s=config.map.s,
        a_max=config.map.a_max,
        coverage_bins=run["coverage_bins"],
        require_c4=run["require_c4"],
        workers=config.workers,
    )
    output.emit_csv(
        "scan",
        REPORT_COLUMNS + ["density"],
        [_row(r) + [share] for r, (_, share) in zip(result.reports, result.density)],
    )
    certified = [r.param_a for r in result.reports if r.certified]
    print(f"📊 {len(certified)}/{len(result.reports)} parameters certified", file=sys.stderr)
    return {
        "grid": len(result.reports),
        "certified": len(certified),
        "certified_fraction": result.certified_fraction,
        "first_certified": certified[0] if certified else None,
        "last_certified": certified[-1] if certified else None,
    }
