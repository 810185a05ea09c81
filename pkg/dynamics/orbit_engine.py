import math
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .errors import EXCEEDS_HORIZON, ExceedsHorizon, SingularityExhausted, SingularityHit
from .fitting import fit_exponential_decay, fit_trend
from .map_core import MapParams, log_derivative, step
from .parallel import DEFAULT_CHUNK, chunk_plan, run_chunks

# Magnitudes below this count as landing on the critical point.
HIT_THRESHOLD = 1e-300
# Integer code for ExceedsHorizon inside vectorised time arrays.
HORIZON_CODE = -1
MAX_REDRAW_ROUNDS = 100

TimeResult = Union[int, ExceedsHorizon]


@dataclass(frozen=True)
class AnalysisConstants:
    """
    Tunable constants of the expansion/recurrence analysis

    beta is always s * alpha for the session's s. theta, epsilon_rec and
    c_exp fall back to Delta, c_exp / 4 and the closed-form rate.
    """
    s: float
    lambda_c: float = 1.2
    alpha: float = 0.05
    delta_big: int = 5
    theta: Optional[int] = None
    epsilon_rec: Optional[float] = None
    c_exp: Optional[float] = None
    beta: float = field(init=False)

    def __post_init__(self):
        if self.lambda_c <= 1.0:
            raise ValueError("lambda_c must be > 1")
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if int(self.delta_big) != self.delta_big or self.delta_big < 2:
            raise ValueError("delta_big must be an integer >= 2")
        object.__setattr__(self, "beta", self.s * self.alpha)
        if self.theta is None:
            object.__setattr__(self, "theta", int(self.delta_big))
        if int(self.theta) != self.theta or self.theta < self.delta_big:
            raise ValueError("theta must be an integer >= delta_big")
        if self.c_exp is None:
            default = math.log(self.lambda_c) / (self.s + 1.0) - self.beta - self.s * self.alpha
            object.__setattr__(self, "c_exp", max(default, 1e-3))
        if self.c_exp <= 0.0:
            raise ValueError("c_exp must be positive")
        if self.epsilon_rec is None:
            object.__setattr__(self, "epsilon_rec", self.c_exp / 4.0)
        if self.epsilon_rec <= 0.0:
            raise ValueError("epsilon_rec must be positive")

    @classmethod
    def for_map(cls, params: Union[MapParams, float], **overrides) -> "AnalysisConstants":
        s = params.s if isinstance(params, MapParams) else float(params)
        return cls(s=s, **overrides)

    @property
    def delta(self) -> float:
        """Truncation radius e^-theta of the recurrence distance"""
        return math.exp(-self.theta)

    @property
    def critical_radius(self) -> float:
        """Radius e^-Delta of the critical neighbourhood U_Delta"""
        return math.exp(-self.delta_big)

    @property
    def delta_zero(self) -> int:
        return math.ceil(self.beta * (self.s + 2.0) * self.delta_big / (self.beta + math.log(self.lambda_c)))


@dataclass(frozen=True)
class TailCurve:
    n_values: Tuple[int, ...]
    gamma_fraction: Tuple[float, ...]
    event_counts: Tuple[int, ...]
    fitted_c: float
    fitted_tau: float
    r_squared: float
    sample_size: int
    seed: int
    redrawn: int
    fit_restricted: bool
    exceeds_fraction: float

    def is_nested(self) -> bool:
        return all(b <= a for a, b in zip(self.gamma_fraction, self.gamma_fraction[1:]))


# -- single orbits ---------------------------------------------------------

def _orbit(params: MapParams, x0: float, steps: int) -> np.ndarray:
    if x0 == 0.0 or abs(x0) < HIT_THRESHOLD:
        raise SingularityHit(0, x0)
    out = np.empty(steps + 1)
    out[0] = x0
    x = np.float64(x0)
    for i in range(1, steps + 1):
        x = np.sign(x) * (-1.0 + params.coeff * np.abs(x) ** params.s)
        if abs(x) < HIT_THRESHOLD:
            raise SingularityHit(i, float(x))
        out[i] = x
    return out


def iterate(params: MapParams, x0: float, n: int) -> np.ndarray:
    """Orbit (x0, f(x0), ..., f^n(x0)); SingularityHit carries the hitting time"""
    if n < 1:
        raise ValueError("n must be a positive integer")
    return _orbit(params, x0, n)


def truncated_distance(x: float, y: float, delta: float) -> float:
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    d = abs(x - y)
    return d if d <= delta else 1.0


def recurrence_summands(orbit: np.ndarray, delta: float) -> np.ndarray:
    """-log d_delta(x, 0) along an orbit array (any shape)"""
    a = np.abs(orbit)
    with np.errstate(divide="ignore"):
        return np.where(a <= delta, -np.log(a), 0.0)


def _first_stable_time(good: np.ndarray) -> np.ndarray:
    """
    good[n-1, j] says the inequality holds at time n for orbit j.
    Returns least N with good on [N, n_max], or HORIZON_CODE.
    """
    n_max = good.shape[0]
    bad = ~good
    any_bad = bad.any(axis=0)
    last_bad = n_max - np.argmax(bad[::-1], axis=0)
    times = np.where(any_bad, last_bad + 1, 1)
    return np.where(bad[-1], HORIZON_CODE, times)


def expansion_times_from_orbits(params: MapParams, orbits: np.ndarray, c_exp: float) -> np.ndarray:
    """orbits has shape (n_max, samples): x_0 .. x_{n_max-1} per column"""
    sums = np.cumsum(log_derivative(params, orbits), axis=0)
    n = np.arange(1, orbits.shape[0] + 1, dtype=np.float64).reshape(-1, *([1] * (orbits.ndim - 1)))
    return _first_stable_time(sums / n > c_exp)


def recurrence_times_from_orbits(orbits: np.ndarray, delta: float, epsilon_rec: float) -> np.ndarray:
    sums = np.cumsum(recurrence_summands(orbits, delta), axis=0)
    n = np.arange(1, orbits.shape[0] + 1, dtype=np.float64).reshape(-1, *([1] * (orbits.ndim - 1)))
    return _first_stable_time(sums / n < epsilon_rec)


def _as_time(code: int) -> TimeResult:
    return EXCEEDS_HORIZON if code == HORIZON_CODE else int(code)


def expansion_time_from_orbit(params: MapParams, orbit: np.ndarray, c_exp: float) -> TimeResult:
    orbit = np.asarray(orbit, dtype=np.float64).reshape(-1, 1)
    return _as_time(expansion_times_from_orbits(params, orbit, c_exp)[0])


def recurrence_time_from_orbit(orbit: np.ndarray, delta: float, epsilon_rec: float) -> TimeResult:
    orbit = np.asarray(orbit, dtype=np.float64).reshape(-1, 1)
    return _as_time(recurrence_times_from_orbits(orbit, delta, epsilon_rec)[0])


def expansion_time(params: MapParams, x: float, consts: AnalysisConstants, n_max: int) -> TimeResult:
    """
    Least N with (1/n) sum_{i<n} log f'(f^i x) > c_exp for all N <= n <= n_max

    Returns EXCEEDS_HORIZON when the inequality fails at n_max.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    return expansion_time_from_orbit(params, _orbit(params, x, n_max - 1), consts.c_exp)


def recurrence_time(params: MapParams, x: float, consts: AnalysisConstants, n_max: int) -> TimeResult:
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    return recurrence_time_from_orbit(_orbit(params, x, n_max - 1), consts.delta, consts.epsilon_rec)


def slow_recurrence_average(params: MapParams, x: float, consts: AnalysisConstants, n: int) -> float:
    """T_n(x): mean of -log d_delta(f^j x, 0) over j < n"""
    if n < 1:
        raise ValueError("n must be at least 1")
    summands = recurrence_summands(_orbit(params, x, n - 1), consts.delta)
    return float(np.cumsum(summands)[-1] / n)


# -- vectorised sampling -----------------------------------------------------

def orbit_block(params: MapParams, x0: np.ndarray, steps: int) -> np.ndarray:
    """Rows x_0 .. x_steps for every start point; hits propagate as +-0"""
    out = np.empty((steps + 1, x0.size))
    out[0] = x0
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(steps):
            out[i + 1] = step(params, out[i])
    return out


def sample_clean_orbits(params: MapParams, rng: np.random.Generator, count: int, steps: int) -> Tuple[np.ndarray, int]:
    """
    count Lebesgue-random orbits of length steps+1 that never hit the singularity

    Samples that hit are redrawn; the number of redraws is returned.
    """
    kept = []
    missing = count
    redrawn = 0
    for _ in range(MAX_REDRAW_ROUNDS):
        block = orbit_block(params, rng.uniform(-1.0, 1.0, size=missing), steps)
        ok = ~(np.abs(block) < HIT_THRESHOLD).any(axis=0)
        kept.append(block[:, ok])
        redrawn += int(missing - ok.sum())
        missing = int(missing - ok.sum())
        if missing == 0:
            return np.concatenate(kept, axis=1), redrawn
    raise SingularityExhausted(redrawn)


def geometric_ladder(n_max: int, ratio: float = 1.3) -> Tuple[int, ...]:
    values = set()
    v = 1.0
    while v < n_max:
        values.add(int(round(v)))
        v *= ratio
    values.add(int(n_max))
    return tuple(sorted(values))


def _tail_chunk(task):
    params, consts, n_max, ladder, count, seq = task
    rng = np.random.default_rng(seq)
    orbits, redrawn = sample_clean_orbits(params, rng, count, n_max - 1)
    exp_t = expansion_times_from_orbits(params, orbits, consts.c_exp)
    rec_t = recurrence_times_from_orbits(orbits, consts.delta, consts.epsilon_rec)
    worst = np.where((exp_t == HORIZON_CODE) | (rec_t == HORIZON_CODE), np.iinfo(np.int64).max, np.maximum(exp_t, rec_t))
    counts = np.array([(worst > n).sum() for n in ladder], dtype=np.int64)
    exceeds = int(((exp_t == HORIZON_CODE) | (rec_t == HORIZON_CODE)).sum())
    return counts, redrawn, exceeds


def tail_curve(params: MapParams, consts: AnalysisConstants, sample_size: int, n_max: int, seed: int,
               workers: int = 1, chunk_size: int = DEFAULT_CHUNK) -> TailCurve:
    """
    Fraction of Lebesgue-random points in the tail set at each ladder time

    Raises:
        DegenerateFit: fewer than 3 positive fractions
    """
    if sample_size < 1000:
        raise ValueError("sample_size must be at least 1000")
    if n_max < 50:
        raise ValueError("n_max must be at least 50")

    ladder = geometric_ladder(n_max)
    tasks = [(params, consts, n_max, ladder, count, seq) for count, seq in chunk_plan(seed, sample_size, chunk_size)]
    results = run_chunks(_tail_chunk, tasks, workers)

    counts = np.zeros(len(ladder), dtype=np.int64)
    redrawn = exceeds = 0
    for c, r, e in results:
        counts += c
        redrawn += r
        exceeds += e
    if redrawn:
        print(f"⚠️ Redrew {redrawn} samples that hit the singularity", file=sys.stderr)

    fractions = counts / sample_size
    fit = fit_exponential_decay(ladder, fractions)
    return TailCurve(
        n_values=ladder,
        gamma_fraction=tuple(float(v) for v in fractions),
        event_counts=tuple(int(c) for c in counts),
        fitted_c=fit.c,
        fitted_tau=fit.tau,
        r_squared=fit.r_squared,
        sample_size=sample_size,
        seed=seed,
        redrawn=redrawn,
        fit_restricted=fit.restricted,
        exceeds_fraction=exceeds / sample_size,
    )


def _deep_chunk(task):
    params, n, radius, count, seq = task
    rng = np.random.default_rng(seq)
    x = rng.uniform(-1.0, 1.0, size=count)
    hit = np.zeros(count, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(n):
            x = step(params, x)
            hit |= np.abs(x) <= radius
    return int(hit.sum())


def deep_approach_fraction(params: MapParams, sample_size: int, n: int, alpha: float, seed: int,
                           workers: int = 1, chunk_size: int = DEFAULT_CHUNK) -> float:
    """Share of [-1, 1] with |f^i(x)| <= e^{-alpha n} for some 1 <= i <= n"""
    if n < 1:
        raise ValueError("n must be at least 1")
    radius = math.exp(-alpha * n)
    if radius < HIT_THRESHOLD:
        return 0.0
    tasks = [(params, n, radius, count, seq) for count, seq in chunk_plan(seed, sample_size, chunk_size)]
    return sum(run_chunks(_deep_chunk, tasks, workers)) / sample_size


def _slow_chunk(task):
    params, consts, n, count, seq = task
    rng = np.random.default_rng(seq)
    orbits, _ = sample_clean_orbits(params, rng, count, n - 1)
    averages = np.cumsum(recurrence_summands(orbits, consts.delta), axis=0)[-1] / n
    return int((averages > consts.epsilon_rec).sum())


def slow_recurrence_fraction(params: MapParams, consts: AnalysisConstants, sample_size: int, n: int, seed: int,
                             workers: int = 1, chunk_size: int = DEFAULT_CHUNK) -> float:
    """Share of [-1, 1] where T_n exceeds epsilon_rec"""
    if n < 1:
        raise ValueError("n must be at least 1")
    tasks = [(params, consts, n, count, seq) for count, seq in chunk_plan(seed, sample_size, chunk_size)]
    return sum(run_chunks(_slow_chunk, tasks, workers)) / sample_size


def finite_time_lyapunov(params: MapParams, sample_size: int, n: int, seed: int,
                         workers: int = 1, chunk_size: int = DEFAULT_CHUNK) -> Dict[str, float]:
    """Summary of (1/n) log (f^n)'(x) over Lebesgue-random x"""
    if n < 1:
        raise ValueError("n must be at least 1")
    tasks = [(params, n, count, seq) for count, seq in chunk_plan(seed, sample_size, chunk_size)]
    exponents = np.concatenate(run_chunks(_lyapunov_chunk, tasks, workers))
    q05, q50, q95 = np.quantile(exponents, [0.05, 0.5, 0.95])
    return {
        "mean": float(exponents.mean()),
        "std": float(exponents.std()),
        "q05": float(q05),
        "median": float(q50),
        "q95": float(q95),
    }


def _lyapunov_chunk(task):
    params, n, count, seq = task
    rng = np.random.default_rng(seq)
    orbits, _ = sample_clean_orbits(params, rng, count, n - 1)
    return log_derivative(params, orbits).sum(axis=0) / n


@dataclass(frozen=True)
class FreeExpansion:
    delta: float
    n_values: Tuple[int, ...]
    min_log_derivative: Tuple[float, ...]
    log_c: float
    log_lambda: float


def free_expansion_rate(params: MapParams, delta: float, n_max: int, sample_size: int, seed: int) -> FreeExpansion:
    """
    Fit log c(delta) + n log lambda under min log (f^n)'(x) over orbit pieces
    x, ..., f^{n-1} x that stay outside (-delta, delta)
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    rng = np.random.default_rng(seed)
    orbits, _ = sample_clean_orbits(params, rng, sample_size, n_max - 1)
    outside = np.cumprod(np.abs(orbits) >= delta, axis=0).astype(bool)
    sums = np.cumsum(log_derivative(params, orbits), axis=0)

    n_values: List[int] = []
    minima: List[float] = []
    for i in range(n_max):
        alive = outside[i]
        if alive.any():
            n_values.append(i + 1)
            minima.append(float(sums[i, alive].min()))

    trend = fit_trend(n_values, minima)
    return FreeExpansion(
        delta=delta,
        n_values=tuple(n_values),
        min_log_derivative=tuple(minima),
        log_c=trend.intercept,
        log_lambda=trend.slope,
    )
