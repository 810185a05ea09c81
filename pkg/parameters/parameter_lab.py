import math
import sys
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from dynamics.map_core import MapParams, log_derivative
from dynamics.orbit_engine import HIT_THRESHOLD, AnalysisConstants
from dynamics.parallel import run_chunks
from partition.partition_engine import MAX_PROBE_DEPTH, bound_period

COVERAGE_THRESHOLD = 0.9


@dataclass(frozen=True)
class CertificationReport:
    param_a: float
    horizon: int
    c2_margin: float
    c3_margin: float
    fa_fraction: float
    coverage: float
    c4_ok: bool
    certified: bool
    reason: str
    lyapunov_plus: float
    lyapunov_minus: float


@dataclass(frozen=True)
class ScanResult:
    reports: Tuple[CertificationReport, ...]
    density: Tuple[Tuple[float, float], ...]

    @property
    def certified_fraction(self) -> float:
        return self.density[-1][1] if self.density else float("nan")


def _critical_orbit(params: MapParams, seed: float, horizon: int) -> Tuple[np.ndarray, Optional[int]]:
    """x_0 = seed, ..., x_{horizon-1}; stops early (with the time) on a singularity hit"""
    orbit = np.empty(horizon)
    x = np.float64(seed)
    orbit[0] = x
    for i in range(1, horizon):
        x = np.sign(x) * (-1.0 + params.coeff * np.abs(x) ** params.s)
        if abs(x) < HIT_THRESHOLD:
            return orbit[:i], i
        orbit[i] = x
    return orbit, None


def _free_count(params: MapParams, consts: AnalysisConstants, orbit: np.ndarray) -> int:
    """Free times of a critical orbit; each return to U_Delta opens a bound window"""
    radius = consts.critical_radius
    until = -1
    free = 0
    for i, x in enumerate(orbit):
        bound = i <= until
        if not bound:
            free += 1
        if abs(x) < radius:
            depth = min(max(int(math.floor(-math.log(abs(x)))), consts.delta_big), MAX_PROBE_DEPTH)
            until = max(until, i + bound_period(params, consts, depth))
    return free


def certify(params: MapParams, consts: AnalysisConstants, horizon: int = 1000, eps_fa: float = 0.1,
            coverage_bins: int = 64, require_c4: bool = False) -> CertificationReport:
    """
    Finite-horizon check of the growth, basic-assumption, free-period and
    density conditions along both critical orbits (seeds +1 and -1)
    """
    if horizon < 100:
        raise ValueError("horizon must be at least 100")

    c2 = c3 = math.inf
    fa = 1.0
    exponents = []
    visited = set()
    reasons = []
    for seed in (1.0, -1.0):
        orbit, hit = _critical_orbit(params, seed, horizon)
        if hit is not None:
            reasons.append(f"critical orbit of {seed:+.0f} hit the singularity at time {hit}")

        sums = np.cumsum(log_derivative(params, orbit))
        n = np.arange(1, orbit.size + 1)
        c2 = min(c2, float(np.min(sums / n)) - math.log(consts.lambda_c))
        c3 = min(c3, float(np.min(np.log(np.abs(orbit)) + consts.alpha * n)))
        fa = min(fa, _free_count(params, consts, orbit) / orbit.size)
        exponents.append(float(sums[-1] / orbit.size))

        bins = np.clip(np.floor((orbit + 1.0) / 2.0 * coverage_bins).astype(np.int64), 0, coverage_bins - 1)
        visited.update(int(b) for b in np.unique(bins))

    coverage = len(visited) / coverage_bins
    c4_ok = coverage >= COVERAGE_THRESHOLD
    if c2 < 0:
        reasons.append(f"Lyapunov margin {c2:.4g} < 0")
    if c3 < 0:
        reasons.append(f"basic assumption margin {c3:.4g} < 0")
    if fa < 1.0 - eps_fa:
        reasons.append(f"free fraction {fa:.4g} < {1.0 - eps_fa:.4g}")
    if require_c4 and not c4_ok:
        reasons.append(f"coverage {coverage:.3f} < {COVERAGE_THRESHOLD}")

    return CertificationReport(
        param_a=params.a,
        horizon=horizon,
        c2_margin=c2,
        c3_margin=c3,
        fa_fraction=fa,
        coverage=coverage,
        c4_ok=c4_ok,
        certified=not reasons,
        reason="; ".join(reasons),
        lyapunov_plus=exponents[0],
        lyapunov_minus=exponents[1],
    )


def scan_grid(a_lo: float, a_hi: float, grid: int) -> List[float]:
    """lo + (hi - lo) * (i / (grid - 1)); refined grids reproduce shared points exactly"""
    if grid < 1:
        raise ValueError("grid must be at least 1")
    if grid == 1:
        return [a_lo]
    return [a_lo + (a_hi - a_lo) * (i / (grid - 1)) for i in range(grid)]


def _certify_task(task) -> CertificationReport:
    params, consts, horizon, eps_fa, coverage_bins, require_c4 = task
    return certify(params, consts, horizon, eps_fa, coverage_bins, require_c4)


def scan(a_range: Tuple[float, float], grid: int, consts: AnalysisConstants, horizon: int = 1000,
         eps_fa: float = 0.1, s: float = 1.5, a_max: float = 0.5, coverage_bins: int = 64,
         require_c4: bool = False, workers: int = 1) -> ScanResult:
    """
    Certify every grid parameter; density[i] is the certified share of
    the first i+1 grid points (a proxy for |E n (0, a]| / a)
    """
    a_lo, a_hi = a_range
    cap = max(a_max, a_hi)
    tasks = [(MapParams(a=a, s=s, a_max=cap), consts, horizon, eps_fa, coverage_bins, require_c4)
             for a in scan_grid(a_lo, a_hi, grid)]
    print(f"📊 Scanning {len(tasks)} parameters in [{a_lo}, {a_hi}]", file=sys.stderr)
    reports = run_chunks(_certify_task, tasks, workers)

    density = []
    certified = 0
    for i, report in enumerate(reports):
        certified += int(report.certified)
        density.append((report.param_a, certified / (i + 1)))
    return ScanResult(reports=tuple(reports), density=tuple(density))
