import math
import sys
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse, stats

from dynamics.errors import BinMismatch, DegenerateFit, NoConvergence
from dynamics.fitting import ExponentialFit, fit_exponential_decay
from dynamics.map_core import MapParams, log_derivative, step
from dynamics.orbit_engine import HIT_THRESHOLD
from dynamics.parallel import DEFAULT_CHUNK, chunk_plan, run_chunks
from .observables import Observable, ObservablePair, resolve

# Upper bound on floats held per chunk by the orbit-ensemble kernels.
CHUNK_FLOATS = 4_000_000
SINGULAR_SUBBINS = 64


@dataclass(eq=False)
class DensityEstimate:
    bins: int
    mass: np.ndarray
    method: str
    meta: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=np.float64)
        if self.mass.shape != (self.bins,):
            raise ValueError(f"mass must have {self.bins} entries")
        if np.any(self.mass < 0):
            raise ValueError("mass must be non-negative")
        if abs(self.mass.sum() - 1.0) > 1e-12:
            raise ValueError(f"mass sums to {self.mass.sum()!r}, not 1")

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.bins + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])


def bin_index(x: np.ndarray, bins: int) -> np.ndarray:
    return np.clip(np.floor((x + 1.0) / 2.0 * bins).astype(np.int64), 0, bins - 1)


def _advance(params: MapParams, x: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
    """One step; orbits that land on the singularity restart from a fresh draw"""
    with np.errstate(divide="ignore", invalid="ignore"):
        x = step(params, x)
    hit = np.abs(x) < HIT_THRESHOLD
    count = int(hit.sum())
    if count:
        x[hit] = rng.uniform(-1.0, 1.0, size=count)
    return x, count


def ensemble(params: MapParams, rng: np.random.Generator, count: int, burn_in: int, length: int) -> Tuple[np.ndarray, int]:
    """(length, count) array of orbit points after burn_in steps from Lebesgue-random starts"""
    x = rng.uniform(-1.0, 1.0, size=count)
    redrawn = 0
    for _ in range(burn_in):
        x, hits = _advance(params, x, rng)
        redrawn += hits
    out = np.empty((length, count))
    for i in range(length):
        out[i] = x
        if i + 1 < length:
            x, hits = _advance(params, x, rng)
            redrawn += hits
    return out, redrawn


def _ensemble_chunk_size(length: int) -> int:
    return max(1, min(DEFAULT_CHUNK, CHUNK_FLOATS // max(length, 1)))


def _report_redraws(redrawn: int):
    if redrawn:
        print(f"⚠️ Restarted {redrawn} orbits that hit the singularity", file=sys.stderr)


# -- densities ---------------------------------------------------------------

def _histogram_chunk(task):
    params, burn_in, n, bins, count, seq = task
    rng = np.random.default_rng(seq)
    x = rng.uniform(-1.0, 1.0, size=count)
    redrawn = 0
    for _ in range(burn_in):
        x, hits = _advance(params, x, rng)
        redrawn += hits
    counts = np.zeros(bins, dtype=np.int64)
    for i in range(n):
        counts += np.bincount(bin_index(x, bins), minlength=bins)
        if i + 1 < n:
            x, hits = _advance(params, x, rng)
            redrawn += hits
    return counts, redrawn


def histogram_density(params: MapParams, burn_in: int, n: int, sample_size: int, bins: int, seed: int,
                      workers: int = 1) -> DensityEstimate:
    """Pool n orbit points per sample, after burn_in steps, into a normalised histogram"""
    if n < 10 * bins:
        raise ValueError("n must be at least 10 * bins")
    if burn_in < 0:
        raise ValueError("burn_in must be non-negative")
    tasks = [(params, burn_in, n, bins, count, seq) for count, seq in chunk_plan(seed, sample_size)]
    counts = np.zeros(bins, dtype=np.int64)
    redrawn = 0
    for c, r in run_chunks(_histogram_chunk, tasks, workers):
        counts += c
        redrawn += r
    _report_redraws(redrawn)
    return DensityEstimate(
        bins=bins,
        mass=counts / counts.sum(),
        method="histogram",
        meta={"burn_in": burn_in, "n": n, "sample_size": sample_size, "seed": seed, "redrawn": redrawn},
    )


def ulam_matrix(params: MapParams, bins: int, subdivisions: int) -> sparse.csr_matrix:
    """Row-stochastic bin-to-bin transition matrix from per-bin midpoint quadrature"""
    edges = np.linspace(-1.0, 1.0, bins + 1)
    width = edges[1] - edges[0]
    offsets = (np.arange(subdivisions) + 0.5) / subdivisions * width
    x = edges[:-1, None] + offsets[None, :]
    valid = x != 0.0
    rows = np.repeat(np.arange(bins), subdivisions).reshape(bins, subdivisions)
    with np.errstate(divide="ignore", invalid="ignore"):
        cols = bin_index(step(params, x), bins)
    weight = 1.0 / valid.sum(axis=1, keepdims=True)
    data = np.broadcast_to(weight, x.shape)
    matrix = sparse.coo_matrix((data[valid], (rows[valid], cols[valid])), shape=(bins, bins))
    return matrix.tocsr()


def ulam_density(params: MapParams, bins: int = 1024, subdivisions: int = 32, tol: float = 1e-10,
                 max_iter: int = 100_000) -> DensityEstimate:
    """
    Stationary vector of the Ulam matrix by power iteration

    The returned vector is the one whose step change ||P^T m - m||_1 < tol.

    Raises:
        NoConvergence: tol not reached within max_iter steps
    """
    if bins < 16:
        raise ValueError("bins must be at least 16")
    if subdivisions < 8:
        raise ValueError("subdivisions must be at least 8")
    transposed = ulam_matrix(params, bins, subdivisions).T.tocsr()
    mass = np.full(bins, 1.0 / bins)
    residual = math.inf
    for iteration in range(1, max_iter + 1):
        nxt = transposed @ mass
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - mass).sum())
        if residual < tol:
            return DensityEstimate(
                bins=bins,
                mass=mass,
                method="ulam",
                meta={"subdivisions": subdivisions, "iterations": iteration, "residual": residual, "tol": tol},
            )
        mass = nxt
    raise NoConvergence(max_iter, residual)


def l1_distance(d1: DensityEstimate, d2: DensityEstimate) -> float:
    if d1.bins != d2.bins:
        raise BinMismatch(f"{d1.bins} bins vs {d2.bins} bins")
    return float(np.abs(d1.mass - d2.mass).sum())


def _integral_log(width: float) -> float:
    """Integral of log x over [0, width], summed over geometric sub-bins toward 0"""
    if width <= 0.0:
        return 0.0

    def antiderivative(x):
        return x * math.log(x) - x if x > 0.0 else 0.0

    total = 0.0
    hi = width
    for _ in range(SINGULAR_SUBBINS - 1):
        lo = hi * 0.5
        total += antiderivative(hi) - antiderivative(lo)
        hi = lo
    return total + antiderivative(hi)


def metric_entropy(params: MapParams, density: DensityEstimate) -> float:
    """
    Integral of log f' against the piecewise-constant density

    Bins touching 0 use the exact bin average of log|x|; others use the bin centre.
    """
    edges = density.edges
    lo, hi = edges[:-1], edges[1:]
    singular = (lo <= 0.0) & (hi >= 0.0)
    centers = np.where(singular, 1.0, 0.5 * (lo + hi))
    logs = log_derivative(params, centers)
    for b in np.flatnonzero(singular):
        mean_log_abs = (_integral_log(-lo[b]) + _integral_log(hi[b])) / (hi[b] - lo[b])
        logs[b] = math.log(params.coeff * params.s) + (params.s - 1.0) * mean_log_abs
    return float(np.dot(density.mass, logs))


def density_mean(density: DensityEstimate, phi: Union[str, Observable], params: Optional[MapParams] = None) -> float:
    fn = resolve(phi, params) if isinstance(phi, str) else phi
    return float(np.dot(density.mass, fn(density.centers)))


@dataclass(frozen=True)
class StabilityRung:
    h: float
    l1: float
    noise: float
    l1_ulam: float


@dataclass(frozen=True)
class StabilityLadder:
    base_a: float
    rungs: Tuple[StabilityRung, ...]

    @property
    def decreasing(self) -> bool:
        values = [r.l1 for r in self.rungs]
        return all(b < a for a, b in zip(values, values[1:]))


def stability_ladder(params: MapParams, steps: Sequence[float] = (0.04, 0.02, 0.01), burn_in: int = 100,
                     n: int = 20_000, sample_size: int = 200, bins: int = 256, seed: int = 0,
                     subdivisions: int = 32, tol: float = 1e-10, max_iter: int = 100_000,
                     workers: int = 1) -> StabilityLadder:
    """
    L1 distance between densities at a and a + h for each h

    The histogram pair shares the seed; the noise column is the distance
    between two independently seeded histograms at the base parameter.
    """
    base = histogram_density(params, burn_in, n, sample_size, bins, seed, workers)
    other = histogram_density(params, burn_in, n, sample_size, bins, seed + 1, workers)
    noise = l1_distance(base, other)
    base_ulam = ulam_density(params, bins, subdivisions, tol, max_iter)

    rungs = []
    for h in steps:
        a = params.a + h
        shifted = MapParams(a=a, s=params.s, a_max=max(params.a_max, a))
        hist = histogram_density(shifted, burn_in, n, sample_size, bins, seed, workers)
        ulam = ulam_density(shifted, bins, subdivisions, tol, max_iter)
        rungs.append(StabilityRung(h=h, l1=l1_distance(base, hist), noise=noise, l1_ulam=l1_distance(base_ulam, ulam)))
        print(f"📊 h={h}: L1={rungs[-1].l1:.4g} (noise {noise:.4g}), Ulam L1={rungs[-1].l1_ulam:.4g}", file=sys.stderr)
    return StabilityLadder(base_a=params.a, rungs=tuple(rungs))


# -- statistical laws --------------------------------------------------------

def lagged_sums(phi_values: np.ndarray, psi_values: np.ndarray, lags: Sequence[int], window: int) -> np.ndarray:
    """
    Per lag: [sum phi*psi_n, sum phi, sum psi_n, count] over the first
    window times of every column
    """
    out = np.zeros((len(lags), 4))
    a = phi_values[:window]
    for i, lag in enumerate(lags):
        b = psi_values[lag:lag + window]
        out[i] = (np.sum(a * b), np.sum(a), np.sum(b), a.size)
    return out


def covariance_from_sums(sums: np.ndarray) -> np.ndarray:
    count = sums[:, 3]
    return sums[:, 0] / count - (sums[:, 1] / count) * (sums[:, 2] / count)


@dataclass(frozen=True)
class CorrelationCurve:
    lags: Tuple[int, ...]
    covariance: Tuple[float, ...]
    correlation: Tuple[float, ...]
    fit: Optional[ExponentialFit]
    pair: ObservablePair
    redrawn: int


def _correlation_chunk(task):
    params, pair, lags, window, burn_in, count, seq = task
    rng = np.random.default_rng(seq)
    orbits, redrawn = ensemble(params, rng, count, burn_in, window + max(lags))
    phi = resolve(pair.phi, params)(orbits)
    psi = resolve(pair.psi, params)(orbits)
    return lagged_sums(phi, psi, lags, window), redrawn


def correlation_curve(params: MapParams, pair: ObservablePair, n_range: Sequence[int], sample_size: int, seed: int,
                      orbit_length: int = 2000, burn_in: int = 100, workers: int = 1,
                      require_fit: bool = True) -> CorrelationCurve:
    """
    |Cor(phi, psi o f^n)| from time averages over an equilibrated orbit ensemble

    Raises:
        DegenerateFit: require_fit and fewer than 3 positive lags
    """
    lags = tuple(int(n) for n in n_range)
    if not lags or min(lags) < 0:
        raise ValueError("lags must be non-negative")
    chunk = _ensemble_chunk_size(orbit_length + max(lags))
    tasks = [(params, pair, lags, orbit_length, burn_in, count, seq)
             for count, seq in chunk_plan(seed, sample_size, chunk)]
    sums = np.zeros((len(lags), 4))
    redrawn = 0
    for s, r in run_chunks(_correlation_chunk, tasks, workers):
        sums += s
        redrawn += r
    _report_redraws(redrawn)

    covariance = covariance_from_sums(sums)
    correlation = np.abs(covariance)
    fit = _maybe_fit(lags, correlation, require_fit, exclude_zero_lag=True)
    return CorrelationCurve(
        lags=lags,
        covariance=tuple(float(v) for v in covariance),
        correlation=tuple(float(v) for v in correlation),
        fit=fit,
        pair=pair,
        redrawn=redrawn,
    )


def _maybe_fit(n_values, values, require_fit: bool, exclude_zero_lag: bool = False) -> Optional[ExponentialFit]:
    n_values = np.asarray(n_values, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if exclude_zero_lag and (n_values > 0).sum() >= 3:
        keep = n_values > 0
        n_values, values = n_values[keep], values[keep]
    try:
        return fit_exponential_decay(n_values, values)
    except DegenerateFit:
        if require_fit:
            raise
        return None


@dataclass(frozen=True)
class DeviationCurve:
    n_values: Tuple[int, ...]
    fractions: Tuple[float, ...]
    counts: Tuple[int, ...]
    fit: Optional[ExponentialFit]
    mean: float
    epsilon: float
    epsilon_bias: float


def _deviation_chunk(task):
    params, phi_name, mean, epsilon, n_values, burn_in, count, seq = task
    rng = np.random.default_rng(seq)
    orbits, redrawn = ensemble(params, rng, count, burn_in, max(n_values))
    values = resolve(phi_name, params)(orbits)
    partial = np.cumsum(values, axis=0)
    counts = np.array([(np.abs(partial[n - 1] / n - mean) > epsilon).sum() for n in n_values], dtype=np.int64)
    return counts, float(partial[-1].sum()), values.size, redrawn


def large_deviation_curve(params: MapParams, phi: str, epsilon: float, n_range: Sequence[int], sample_size: int,
                          seed: int, burn_in: int = 100, density_bins: int = 256, workers: int = 1,
                          require_fit: bool = True) -> DeviationCurve:
    """
    Share of samples whose Birkhoff average at time n misses mu(phi) by more than epsilon

    mu(phi) comes from a histogram density; its gap to the pooled sample
    mean is reported as epsilon_bias.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    n_values = tuple(sorted(int(n) for n in n_range))
    if not n_values or n_values[0] < 1:
        raise ValueError("n values must be positive")

    density = histogram_density(params, burn_in, 10 * density_bins, min(sample_size, 256), density_bins, seed, workers)
    mean = density_mean(density, phi, params)

    chunk = _ensemble_chunk_size(n_values[-1])
    tasks = [(params, phi, mean, epsilon, n_values, burn_in, count, seq)
             for count, seq in chunk_plan(seed + 1, sample_size, chunk)]
    counts = np.zeros(len(n_values), dtype=np.int64)
    total = 0.0
    points = 0
    redrawn = 0
    for c, s, p, r in run_chunks(_deviation_chunk, tasks, workers):
        counts += c
        total += s
        points += p
        redrawn += r
    _report_redraws(redrawn)

    fractions = counts / sample_size
    return DeviationCurve(
        n_values=n_values,
        fractions=tuple(float(v) for v in fractions),
        counts=tuple(int(c) for c in counts),
        fit=_maybe_fit(n_values, fractions, require_fit),
        mean=mean,
        epsilon=epsilon,
        epsilon_bias=abs(mean - total / points),
    )


@dataclass(frozen=True)
class CLTReport:
    n: int
    sigma2: float
    sigma2_err: float
    sigma2_n: float
    sigma2_limit: float
    sigma2_limit_err: float
    ks_distance: float
    ks_distance_4n: float
    berry_esseen_sup: float
    berry_esseen_slope: float
    zero_variance: bool

    @property
    def ks_decreased(self) -> bool:
        return self.ks_distance_4n < self.ks_distance


def _clt_chunk(task):
    params, phi_name, n, burn_in, count, seq = task
    rng = np.random.default_rng(seq)
    orbits, redrawn = ensemble(params, rng, count, burn_in, 4 * n)
    values = resolve(phi_name, params)(orbits)
    return values[:n].sum(axis=0), values.sum(axis=0), redrawn


def _jackknife(estimator: Callable[[np.ndarray], float], groups: int, size: int) -> float:
    labels = np.arange(size) * groups // size
    leave_out = np.array([estimator(labels != g) for g in range(groups)])
    return float(math.sqrt((groups - 1) / groups * np.sum((leave_out - leave_out.mean()) ** 2)))


def clt_report(params: MapParams, phi: str, n: int, sample_size: int, seed: int, burn_in: int = 100,
               blocks: int = 10, workers: int = 1) -> CLTReport:
    """
    sigma^2 of the Birkhoff sums at n and 4n, the Kolmogorov-Smirnov
    distance to the normal law at both scales, and a zero-variance flag

    sigma2 is estimated at 4n; a two-scale extrapolation and the ratio
    sigma2(4n) / sigma2(n) back up the coboundary check.
    """
    if n < 1000:
        raise ValueError("n must be at least 1000")
    if blocks < 2 or blocks > sample_size:
        raise ValueError("blocks must be in [2, sample_size]")
    chunk = _ensemble_chunk_size(4 * n)
    tasks = [(params, phi, n, burn_in, count, seq) for count, seq in chunk_plan(seed, sample_size, chunk)]
    sums_n, sums_4n, redrawn = [], [], 0
    for s_n, s_4n, r in run_chunks(_clt_chunk, tasks, workers):
        sums_n.append(s_n)
        sums_4n.append(s_4n)
        redrawn += r
    _report_redraws(redrawn)
    sums_n = np.concatenate(sums_n)
    sums_4n = np.concatenate(sums_4n)

    mean = sums_4n.sum() / (4 * n * sums_4n.size)
    z_n = (sums_n - n * mean) / math.sqrt(n)
    z_4n = (sums_4n - 4 * n * mean) / math.sqrt(4 * n)

    def sigma2_at(z, mask):
        return float(np.mean(z[mask] ** 2))

    def limit(mask):
        return (4.0 * sigma2_at(z_4n, mask) - sigma2_at(z_n, mask)) / 3.0

    everything = np.ones(z_n.size, dtype=bool)
    sigma2 = sigma2_at(z_4n, everything)
    sigma2_n = sigma2_at(z_n, everything)
    sigma2_err = _jackknife(lambda m: sigma2_at(z_4n, m), blocks, z_n.size)
    sigma2_limit = limit(everything)
    limit_err = _jackknife(limit, blocks, z_n.size)

    zero_variance = bool(
        sigma2 < 1e-6
        or sigma2_limit < 3.0 * limit_err
        or (sigma2_n > 0 and sigma2 / sigma2_n < 0.5)
    )
    if zero_variance:
        print("⚠️ Variance vanishes at the tested scales: coboundary suspected", file=sys.stderr)

    scale = math.sqrt(max(sigma2, 1e-300))
    ks_n = float(stats.kstest(z_n, "norm", args=(0.0, scale)).statistic)
    ks_4n = float(stats.kstest(z_4n, "norm", args=(0.0, scale)).statistic)
    slope = math.log(ks_4n / ks_n) / math.log(4.0) if ks_n > 0 and ks_4n > 0 else float("nan")
    return CLTReport(
        n=n,
        sigma2=sigma2,
        sigma2_err=sigma2_err,
        sigma2_n=sigma2_n,
        sigma2_limit=sigma2_limit,
        sigma2_limit_err=limit_err,
        ks_distance=ks_n,
        ks_distance_4n=ks_4n,
        berry_esseen_sup=ks_n,
        berry_esseen_slope=slope,
        zero_variance=zero_variance,
    )
