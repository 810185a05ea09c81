"""
Inductive partition of [-1, 1] into pieces on which f^n is a diffeomorphism

Elements live in parallel numpy arrays (phase-space interval, current image,
state, bound-until time, packed branch bits). Every return event is appended
to a shared ReturnLog tree, and each element points at its latest event, so
records are never copied when an element is chopped.
"""

import math
import sys
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from dynamics.errors import InconsistentRecord, SingularityHit
from dynamics.fitting import TrendFit, fit_trend
from dynamics.map_core import MapParams, inverse_branch, log_derivative, step
from dynamics.orbit_engine import HIT_THRESHOLD, AnalysisConstants
from .grid import OUTSIDE, Grid, GridIndex

FREE, BOUND, ESCAPED = 0, 1, 2
STATE_NAMES = {FREE: "free", BOUND: "bound", ESCAPED: "escaped"}

ESSENTIAL, INESSENTIAL, BOUND_RETURN = 0, 1, 2
KIND_NAMES = {ESSENTIAL: "essential", INESSENTIAL: "inessential", BOUND_RETURN: "bound"}

BOUND_HORIZON = 10 ** 6
BOUND_PROBES = 11
# Depth cap for bound periods of returns far below the grid.
MAX_PROBE_DEPTH = 250
WORD = 64

_CHILD_ESSENTIAL, _CHILD_ESCAPE, _CHILD_SPLIT = 0, 1, 2


@dataclass(frozen=True)
class ReturnRecord:
    time: int
    host: GridIndex
    kind: str
    image_length: float


@dataclass(frozen=True)
class PartitionElement:
    """
    One element of P_n

    sides[j] is the branch (+1/-1) holding f^j of the element, j < n.
    """
    interval: Tuple[float, float]
    image: Tuple[float, float]
    returns: Tuple[ReturnRecord, ...]
    state: str
    bound_until: int
    birth: int
    sides: Tuple[int, ...]

    @property
    def length(self) -> float:
        return self.interval[1] - self.interval[0]


@dataclass(frozen=True)
class DepthLedger:
    essential_depths: Tuple[int, ...]
    inessential_sum: int
    bound_sum: int
    breakdown: Tuple[Tuple[int, int], ...]
    dominated: bool

    @property
    def max_trailing_ratio(self) -> float:
        ratios = [trailing / m for m, trailing in self.breakdown if m > 0]
        return max(ratios) if ratios else 0.0


class ReturnLog:
    """Append-only tree of return events; node 0 is the empty history"""

    def __init__(self, capacity: int = 1024):
        self._size = 1
        self.parent = np.zeros(capacity, dtype=np.int64)
        self.time = np.zeros(capacity, dtype=np.int64)
        self.m = np.zeros(capacity, dtype=np.int64)
        self.k = np.zeros(capacity, dtype=np.int64)
        self.kind = np.full(capacity, -1, dtype=np.int8)
        self.length = np.zeros(capacity)
        self.max_essential = np.zeros(capacity, dtype=np.int64)

    def __len__(self) -> int:
        return self._size

    def _grow(self, needed: int):
        capacity = self.parent.size
        if needed <= capacity:
            return
        while capacity < needed:
            capacity *= 2
        for name in ("parent", "time", "m", "k", "kind", "length", "max_essential"):
            old = getattr(self, name)
            new = np.zeros(capacity, dtype=old.dtype)
            new[:old.size] = old
            setattr(self, name, new)

    def append(self, parents, time: int, m, k, kind: int, lengths) -> np.ndarray:
        parents = np.asarray(parents, dtype=np.int64)
        count = parents.size
        if count == 0:
            return parents
        self._grow(self._size + count)
        ids = np.arange(self._size, self._size + count)
        depth = np.abs(np.asarray(m, dtype=np.int64))
        self.parent[ids] = parents
        self.time[ids] = time
        self.m[ids] = m
        self.k[ids] = k
        self.kind[ids] = kind
        self.length[ids] = lengths
        own = depth if kind == ESSENTIAL else 0
        self.max_essential[ids] = np.maximum(self.max_essential[parents], own)
        self._size += count
        return ids

    def chain(self, node: int) -> List[ReturnRecord]:
        out = []
        while node != 0:
            if not 0 < node < self._size:
                raise InconsistentRecord(f"broken return chain at node {node}")
            out.append(ReturnRecord(
                time=int(self.time[node]),
                host=GridIndex(int(self.m[node]), int(self.k[node])),
                kind=KIND_NAMES[int(self.kind[node])],
                image_length=float(self.length[node]),
            ))
            node = int(self.parent[node])
        out.reverse()
        for a, b in zip(out, out[1:]):
            if b.time <= a.time:
                raise InconsistentRecord("return times are not strictly increasing")
        return out


@dataclass
class PartitionState:
    """P_n as struct-of-arrays, sorted by left endpoint"""
    n: int
    grid: Grid
    log: ReturnLog
    x_lo: np.ndarray
    x_hi: np.ndarray
    y_lo: np.ndarray
    y_hi: np.ndarray
    state: np.ndarray
    bound_until: np.ndarray
    birth: np.ndarray
    node: np.ndarray
    last_length: np.ndarray
    bits: np.ndarray

    @property
    def size(self) -> int:
        return self.x_lo.size

    def sides(self, rows: np.ndarray, n: Optional[int] = None) -> np.ndarray:
        """Decoded branch signs, shape (len(rows), n)"""
        n = self.n if n is None else n
        return _decode_sides(self.bits[rows], n)

    def element(self, i: int) -> PartitionElement:
        return PartitionElement(
            interval=(float(self.x_lo[i]), float(self.x_hi[i])),
            image=(float(self.y_lo[i]), float(self.y_hi[i])),
            returns=tuple(self.log.chain(int(self.node[i]))),
            state=STATE_NAMES[int(self.state[i])],
            bound_until=int(self.bound_until[i]),
            birth=int(self.birth[i]),
            sides=tuple(int(v) for v in self.sides(np.array([i]))[0]),
        )

    def total_length(self) -> float:
        return float(np.sum(self.x_hi - self.x_lo))


@dataclass
class RefineStats:
    growth_pairs: List[Tuple[int, float, float]] = field(default_factory=list)
    escape_reentries: List[Tuple[int, float]] = field(default_factory=list)
    bound_splits: int = 0
    essential_returns: int = 0
    inessential_returns: int = 0
    bound_returns: int = 0


def _decode_sides(bits: np.ndarray, n: int) -> np.ndarray:
    out = np.empty((bits.shape[0], n))
    for j in range(n):
        word, bit = divmod(j, WORD)
        on = (bits[:, word] >> np.uint64(bit)) & np.uint64(1)
        out[:, j] = np.where(on == 1, 1.0, -1.0)
    return out


# -- bound periods -----------------------------------------------------------

@dataclass(frozen=True)
class BoundPeriodReport:
    m: int
    p: int
    lower: float
    upper: float
    within: bool
    expansion_log_min: float
    expansion_target: float
    c0: float
    discarded: int


@lru_cache(maxsize=None)
def _shadowing(params: MapParams, consts: AnalysisConstants, m: int, horizon: int):
    depth = abs(m)
    side = 1 if m > 0 else -1
    # I_m^+ = I_{m-1} u I_m u I_{m+1}
    x = side * np.linspace(math.exp(-depth - 2), math.exp(-depth + 1), BOUND_PROBES)
    crit = params.critical_value(side)

    fail = np.full(x.size, horizon, dtype=np.int64)
    alive = np.ones(x.size, dtype=bool)
    discarded = np.zeros(x.size, dtype=bool)
    log_sums = [np.zeros(x.size)]
    shadow_max = [np.zeros(x.size)]

    c = np.float64(crit)
    log_sum = log_derivative(params, x)
    shadow = np.zeros(x.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = step(params, x)
        for j in range(1, horizon + 1):
            log_sums.append(log_sum.copy())
            hit = alive & (np.abs(x) < HIT_THRESHOLD)
            discarded |= hit
            alive &= ~hit
            shadow = shadow + log_derivative(params, x) - log_derivative(params, np.array([c]))[0]
            shadow_max.append(np.maximum(shadow_max[-1], np.abs(shadow)))
            failed = alive & (np.abs(x - c) > math.exp(-consts.beta * j))
            fail[failed] = j
            alive &= ~failed
            if not alive.any():
                break
            log_sum = log_sum + log_derivative(params, x)
            x = step(params, x)
            c = step(params, np.array([c]))[0]

    usable = ~discarded
    p = int(fail[usable].min()) if usable.any() else horizon
    idx = min(p, len(log_sums) - 1)
    expansion = float(log_sums[idx][usable].min()) if usable.any() else float("nan")
    c0_log = float(shadow_max[max(p - 1, 0)][usable].max()) if usable.any() else 0.0
    return p, expansion, math.exp(c0_log), int(discarded.sum())


def bound_period(params: MapParams, consts: AnalysisConstants, m: int, horizon: int = BOUND_HORIZON) -> int:
    """
    Largest p with |f^j(x) - f^{j-1}(-+1)| <= e^{-beta j} for 1 <= j < p
    at every probe x of I_m^+; the sign is -1 for m > 0 and +1 for m < 0
    """
    if abs(m) < consts.delta_big:
        raise ValueError(f"|m| must be >= Delta={consts.delta_big}, got {m}")
    return _shadowing(params, consts, int(m), horizon)[0]


def bound_period_bounds(params: MapParams, consts: AnalysisConstants, m: int) -> Tuple[float, float]:
    """Two-sided estimate s|m|/(beta+log 4) - K <= p(m) <= (s+1)|m|/(beta+log lambda_c)"""
    log4 = math.log(4.0)
    k = (-log4 + math.log(params.coeff) + params.s) / (consts.beta + log4)
    lower = params.s * abs(m) / (consts.beta + log4) - k
    upper = (params.s + 1.0) * abs(m) / (consts.beta + math.log(consts.lambda_c))
    return lower, upper


def bound_period_report(params: MapParams, consts: AnalysisConstants, m: int, slack: int = 2) -> BoundPeriodReport:
    if abs(m) < consts.delta_big:
        raise ValueError(f"|m| must be >= Delta={consts.delta_big}, got {m}")
    p, expansion, c0, discarded = _shadowing(params, consts, int(m), BOUND_HORIZON)
    lower, upper = bound_period_bounds(params, consts, m)
    rate = 1.0 - consts.beta * (params.s + 2.0) / (consts.beta + math.log(consts.lambda_c))
    return BoundPeriodReport(
        m=int(m),
        p=p,
        lower=lower,
        upper=upper,
        within=bool(lower - slack <= p <= upper + slack),
        expansion_log_min=expansion,
        expansion_target=rate * abs(m),
        c0=c0,
        discarded=discarded,
    )


def _bound_for_depths(params: MapParams, consts: AnalysisConstants, depths: np.ndarray) -> np.ndarray:
    depths = np.minimum(np.abs(depths), MAX_PROBE_DEPTH)
    table = {int(d): bound_period(params, consts, int(d)) for d in np.unique(depths)}
    return np.array([table[int(d)] for d in depths], dtype=np.int64)


# -- construction ------------------------------------------------------------

def initial_partition(params: MapParams, consts: AnalysisConstants, max_depth: Optional[int] = None,
                      horizon: int = 300) -> PartitionState:
    """
    P_0: the two outer pieces plus every grid cell

    Cells start with an essential return at time 0 hosted by themselves.
    """
    grid = Grid(consts.delta_big, max_depth or 3 * consts.delta_big)
    log = ReturnLog()
    words = horizon // WORD + 1

    x_lo = np.concatenate([[-1.0], grid.cell_lo, [grid.radius]])
    x_hi = np.concatenate([[-grid.radius], grid.cell_hi, [1.0]])
    count = x_lo.size
    state = np.full(count, BOUND, dtype=np.int8)
    state[0] = state[-1] = FREE

    lengths = grid.cell_hi - grid.cell_lo
    nodes = np.zeros(count, dtype=np.int64)
    nodes[1:-1] = log.append(np.zeros(grid.n_cells, dtype=np.int64), 0, grid.cell_m, grid.cell_k, ESSENTIAL, lengths)
    until = np.zeros(count, dtype=np.int64)
    until[1:-1] = _bound_for_depths(params, consts, grid.cell_m)
    last = np.full(count, np.nan)
    last[1:-1] = lengths

    return PartitionState(
        n=0, grid=grid, log=log,
        x_lo=x_lo, x_hi=x_hi, y_lo=x_lo.copy(), y_hi=x_hi.copy(),
        state=state, bound_until=until, birth=np.zeros(count, dtype=np.int64),
        node=nodes, last_length=last, bits=np.zeros((count, words), dtype=np.uint64),
    )


def _host_cells(grid: Grid, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Cell holding the midpoint, or the outermost cell when the midpoint is outside U_Delta"""
    mid = np.clip(0.5 * (lo + hi), -grid.radius, grid.radius)
    cells = grid.locate(mid)
    outside = cells == OUTSIDE
    cells[outside & (mid > 0)] = grid.n_cells - 1
    cells[outside & (mid <= 0)] = 0
    return cells


def _chop_side(grid: Grid, lo, hi, cells, full, outer):
    """Merge the pieces of one side of 0 into (lo, hi, cell, kind) children"""
    escape = outer & ((hi - lo) >= grid.escape_length)
    core = np.flatnonzero(~escape)
    children = []
    if core.size:
        full_core = core[full[core]]
        if full_core.size == 0:
            inside = core[~outer[core]]
            pool = inside if inside.size else core
            # no whole cell: host is the longer piece
            best = pool[np.argmax(hi[pool] - lo[pool])]
            cell = int(cells[best]) if cells[best] != OUTSIDE else (grid.n_cells - 1 if lo[best] > 0 else 0)
            children.append([lo[core[0]], hi[core[-1]], cell, _CHILD_ESSENTIAL])
        else:
            for i in full_core:
                children.append([lo[i], hi[i], int(cells[i]), _CHILD_ESSENTIAL])
            children[0][0] = lo[core[0]]
            children[-1][1] = hi[core[-1]]
    for i in np.flatnonzero(escape):
        entry = [lo[i], hi[i], OUTSIDE, _CHILD_ESCAPE]
        if lo[i] < 0:
            children.insert(0, entry)
        else:
            children.append(entry)
    return children


def chop_image(grid: Grid, lo: float, hi: float) -> List[list]:
    """
    Cut an image at every grid line (0 included) and merge the pieces

    Partial end pieces join the adjacent whole cell; outer pieces at least
    as long as I_{Delta-1,(Delta-1)^2} become escape components.
    """
    edges = grid.edges
    a = np.searchsorted(edges, lo, side="right")
    b = np.searchsorted(edges, hi, side="left")
    points = np.concatenate([[lo], edges[a:b], [hi]])
    p, q = points[:-1], points[1:]
    cells = grid.locate(0.5 * (p + q))
    outer = cells == OUTSIDE
    safe = np.where(outer, 0, cells)
    full = ~outer & (p == grid.cell_lo[safe]) & (q == grid.cell_hi[safe])

    children = []
    for on_side in (q <= 0.0, p >= 0.0):
        idx = np.flatnonzero(on_side)
        if idx.size:
            children.extend(_chop_side(grid, p[idx], q[idx], cells[idx], full[idx], outer[idx]))
    return children


def _pull_back(params: MapParams, y: np.ndarray, bits: np.ndarray, n: int) -> np.ndarray:
    """Invert f^n along stored branches: level-n points back to phase space"""
    for j in range(n - 1, -1, -1):
        word, bit = divmod(j, WORD)
        on = (bits[:, word] >> np.uint64(bit)) & np.uint64(1)
        y = inverse_branch(params, y, np.where(on == 1, 1.0, -1.0))
    return np.asarray(y, dtype=np.float64)


def refine(partition: PartitionState, params: MapParams, consts: AnalysisConstants, n: int,
           stats: Optional[RefineStats] = None) -> PartitionState:
    """
    P_{n-1} -> P_n

    Bound and free elements pass through; inessential returns are recorded
    in place; essential return situations are chopped along the grid.

    Raises:
        InconsistentRecord: the input is not P_{n-1} or an image holds 0
    """
    if partition.n != n - 1:
        raise InconsistentRecord(f"expected P_{n - 1}, got P_{partition.n}")
    stats = stats if stats is not None else RefineStats()
    grid = partition.grid
    y_lo, y_hi = partition.y_lo, partition.y_hi
    if np.any((y_lo < 0.0) & (y_hi > 0.0)):
        raise InconsistentRecord("an image contains 0 in its interior")

    word, bit = divmod(n - 1, WORD)
    if word >= partition.bits.shape[1]:
        raise InconsistentRecord(f"branch bits only cover {partition.bits.shape[1] * WORD} steps")
    bits = partition.bits.copy()
    bits[y_lo >= 0.0, word] |= np.uint64(1) << np.uint64(bit)

    with np.errstate(divide="ignore", invalid="ignore"):
        new_lo = np.where(y_lo == 0.0, -1.0, step(params, y_lo))
        new_hi = np.where(y_hi == 0.0, 1.0, step(params, y_hi))

    state = partition.state.copy()
    until = partition.bound_until.copy()
    node = partition.node.copy()
    last = partition.last_length.copy()
    state[(state == BOUND) & (until < n)] = FREE

    r = grid.radius
    length = new_hi - new_lo
    in_u = (new_hi > -r) & (new_lo < r)
    zero_in = (new_lo < 0.0) & (new_hi > 0.0)
    shallow = (new_lo >= grid.outer_cell_edge) | (new_hi <= -grid.outer_cell_edge)
    is_bound = state == BOUND

    situation = (~is_bound & in_u & ~shallow) | zero_in
    hosts = _host_cells(grid, new_lo, new_hi)
    inside_plus = (new_lo >= grid.plus_lo[hosts]) & (new_hi <= grid.plus_hi[hosts])
    covers = grid.contains_full_cell(new_lo, new_hi)
    inessential = situation & ~is_bound & ~zero_in & inside_plus & ~covers
    essential = situation & ~inessential
    bound_touch = is_bound & in_u & ~zero_in

    reentry = (essential | inessential) & (state == ESCAPED)
    for i in np.flatnonzero(reentry):
        stats.escape_reentries.append((n, float(length[i])))
    paired = (essential | inessential) & ~is_bound & np.isfinite(last)
    for i in np.flatnonzero(paired):
        stats.growth_pairs.append((n, float(last[i]), float(length[i])))

    if bound_touch.any():
        idx = np.flatnonzero(bound_touch)
        h = hosts[idx]
        node[idx] = partition.log.append(node[idx], n, grid.cell_m[h], grid.cell_k[h], BOUND_RETURN, length[idx])
        stats.bound_returns += idx.size

    if inessential.any():
        idx = np.flatnonzero(inessential)
        h = hosts[idx]
        node[idx] = partition.log.append(node[idx], n, grid.cell_m[h], grid.cell_k[h], INESSENTIAL, length[idx])
        state[idx] = BOUND
        until[idx] = n + _bound_for_depths(params, consts, grid.cell_m[h])
        last[idx] = length[idx]
        stats.inessential_returns += idx.size

    chop_rows = np.flatnonzero(essential)
    counts = np.ones(partition.size, dtype=np.int64)
    children: Dict[int, List[list]] = {}
    for i in chop_rows:
        if is_bound[i]:
            kids = [[new_lo[i], 0.0, OUTSIDE, _CHILD_SPLIT], [0.0, new_hi[i], OUTSIDE, _CHILD_SPLIT]]
            stats.bound_splits += 1
        else:
            kids = chop_image(grid, new_lo[i], new_hi[i])
        children[int(i)] = kids
        counts[i] = len(kids)

    # phase-space cut points for every chop, pulled back in one pass
    cut_y, cut_parent = [], []
    for i, kids in children.items():
        for kid in kids[:-1]:
            cut_y.append(kid[1])
            cut_parent.append(i)
    cut_x = np.empty(0)
    if cut_y:
        cut_parent = np.array(cut_parent, dtype=np.int64)
        cut_x = _pull_back(params, np.array(cut_y), bits[cut_parent], n)
        cut_x = np.clip(cut_x, partition.x_lo[cut_parent], partition.x_hi[cut_parent])
        cut_x = np.maximum.accumulate(cut_x)

    source = np.repeat(np.arange(partition.size), counts)
    out_x_lo = partition.x_lo[source].copy()
    out_x_hi = partition.x_hi[source].copy()
    out_y_lo = new_lo[source].copy()
    out_y_hi = new_hi[source].copy()
    out_state = state[source].copy()
    out_until = until[source].copy()
    out_birth = partition.birth[source].copy()
    out_node = node[source].copy()
    out_last = last[source].copy()
    out_bits = bits[source]

    offsets = np.cumsum(counts) - counts
    cursor = 0
    new_parents, new_pos, new_cells, new_lengths = [], [], [], []
    for i, kids in children.items():
        base = offsets[i]
        for j, (c_lo, c_hi, cell, kind) in enumerate(kids):
            pos = base + j
            if j > 0:
                out_x_lo[pos] = cut_x[cursor + j - 1]
            if j < len(kids) - 1:
                out_x_hi[pos] = cut_x[cursor + j]
            out_y_lo[pos] = c_lo
            out_y_hi[pos] = c_hi
            out_birth[pos] = n
            if kind == _CHILD_ESSENTIAL:
                new_parents.append(node[i])
                new_pos.append(pos)
                new_cells.append(cell)
                new_lengths.append(c_hi - c_lo)
            elif kind == _CHILD_ESCAPE:
                out_state[pos] = ESCAPED
                out_last[pos] = np.nan
        cursor += len(kids) - 1

    if new_pos:
        pos = np.array(new_pos, dtype=np.int64)
        cells = np.array(new_cells, dtype=np.int64)
        lengths = np.array(new_lengths)
        out_node[pos] = partition.log.append(np.array(new_parents), n, grid.cell_m[cells], grid.cell_k[cells],
                                             ESSENTIAL, lengths)
        out_state[pos] = BOUND
        out_until[pos] = n + _bound_for_depths(params, consts, grid.cell_m[cells])
        out_last[pos] = lengths
        stats.essential_returns += pos.size

    return PartitionState(
        n=n, grid=grid, log=partition.log,
        x_lo=out_x_lo, x_hi=out_x_hi, y_lo=out_y_lo, y_hi=out_y_hi,
        state=out_state, bound_until=out_until, birth=out_birth,
        node=out_node, last_length=out_last, bits=out_bits,
    )


# -- measurements ------------------------------------------------------------

def distortion_batch(params: MapParams, y_lo: np.ndarray, y_hi: np.ndarray, sides: np.ndarray,
                     probes: int) -> np.ndarray:
    """
    max/min of (f^{n+1})' over probe points for each element, computed from
    probes spread over the image and pulled back along the stored branches
    """
    t = np.linspace(0.0, 1.0, probes)
    y = y_lo[:, None] + (y_hi - y_lo)[:, None] * t[None, :]
    singular = (np.abs(y) < HIT_THRESHOLD).any(axis=1)
    logs = log_derivative(params, y)
    for j in range(sides.shape[1] - 1, -1, -1):
        y = inverse_branch(params, y, sides[:, j][:, None])
        logs = logs + log_derivative(params, y)
    ratio = np.exp(logs.max(axis=1) - logs.min(axis=1))
    return np.where(singular, np.nan, ratio)


def distortion_ratio(params: MapParams, element: PartitionElement, n: int, probes: int = 5) -> float:
    """
    Bounded-distortion ratio max (f^{n+1})'(x) / (f^{n+1})'(y) over probes of the element

    Raises:
        SingularityHit: a probe sits on 0 at time n
    """
    if probes < 2:
        raise ValueError("probes must be at least 2")
    if len(element.sides) != n:
        raise ValueError(f"element carries {len(element.sides)} branch steps, not {n}")
    sides = np.array(element.sides, dtype=np.float64).reshape(1, n)
    ratio = distortion_batch(params, np.array([element.image[0]]), np.array([element.image[1]]), sides, probes)[0]
    if np.isnan(ratio):
        raise SingularityHit(n)
    return float(ratio)


def depth_ledger(element: PartitionElement, n: int) -> DepthLedger:
    """Split the return history into essential returns and their trailing depths"""
    essential: List[int] = []
    breakdown: List[List[int]] = []
    inessential_sum = bound_sum = 0
    dominated = True
    for record in element.returns:
        if record.time > n:
            break
        depth = record.host.depth
        if record.kind == "essential":
            essential.append(depth)
            breakdown.append([depth, 0])
            continue
        if record.kind == "inessential":
            inessential_sum += depth
            if essential and depth > essential[-1]:
                dominated = False
        else:
            bound_sum += depth
        if breakdown:
            breakdown[-1][1] += depth
    return DepthLedger(
        essential_depths=tuple(essential),
        inessential_sum=inessential_sum,
        bound_sum=bound_sum,
        breakdown=tuple((m, s) for m, s in breakdown),
        dominated=dominated,
    )


def essential_depth_sum(element: PartitionElement, n: int, theta: int) -> int:
    """F_n: total depth of essential returns at depth >= theta up to time n"""
    return sum(r.host.depth for r in element.returns
               if r.kind == "essential" and r.time <= n and r.host.depth >= theta)


@dataclass(frozen=True)
class DepthFrequency:
    mass: Dict[int, float]
    trend: Optional[TrendFit]
    slope_bound: float
    deepest_mass: Dict[int, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return sum(self.deepest_mass.values())

    @property
    def slope_ok(self) -> Optional[bool]:
        if self.trend is None:
            return None
        return self.trend.slope <= self.slope_bound + 0.2


def essential_depth_pairs(partition: PartitionState, theta: int) -> Tuple[np.ndarray, np.ndarray]:
    """(element row, depth) once per distinct essential return depth >= theta in each history"""
    log = partition.log
    rows = np.arange(partition.size)
    node = partition.node.copy()
    found_rows, found_depths = [], []
    while True:
        live = np.flatnonzero(node != 0)
        if live.size == 0:
            break
        current = node[live]
        depth = np.abs(log.m[current])
        hit = (log.kind[current] == ESSENTIAL) & (depth >= theta)
        found_rows.append(rows[live[hit]])
        found_depths.append(depth[hit])
        node[live] = log.parent[current]
    if not found_rows:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    pairs = np.unique(np.column_stack([np.concatenate(found_rows), np.concatenate(found_depths)]), axis=0)
    return pairs[:, 0], pairs[:, 1]


def depth_frequency(partition: PartitionState, theta: int, params: Optional[MapParams] = None,
                    consts: Optional[AnalysisConstants] = None) -> DepthFrequency:
    """
    Length of phase space whose history holds an essential return at depth m, for m >= theta

    An element with essential returns at several depths counts toward each
    of them. deepest_mass counts every element once, at its deepest
    essential return, so its total never exceeds |I|.
    """
    if theta < partition.grid.delta_big:
        raise ValueError("theta must be >= Delta")
    lengths = partition.x_hi - partition.x_lo
    rows, depths = essential_depth_pairs(partition, theta)
    mass = {int(m): float(lengths[rows[depths == m]].sum()) for m in np.unique(depths)}

    deepest = partition.log.max_essential[partition.node]
    keep = deepest >= theta
    deepest_mass = {int(m): float(lengths[keep & (deepest == m)].sum()) for m in np.unique(deepest[keep])}

    trend = None
    positive = [(m, v) for m, v in sorted(mass.items()) if v > 0]
    if len(positive) >= 3:
        trend = fit_trend([m for m, _ in positive], [math.log(v) for _, v in positive])
    bound = float("nan")
    if params is not None and consts is not None:
        bound = -(1.0 - consts.beta * (params.s + 5.0) / (consts.beta + math.log(consts.lambda_c)))
    return DepthFrequency(mass=mass, trend=trend, slope_bound=bound, deepest_mass=deepest_mass)


@dataclass
class PartitionRun:
    partition: PartitionState
    steps: int
    truncated: bool
    stats: RefineStats
    distortion: List[Tuple[int, float, int]]
    escape_threshold: float

    @property
    def doubling_fraction(self) -> float:
        if not self.stats.growth_pairs:
            return float("nan")
        ok = sum(1 for _, before, after in self.stats.growth_pairs if after >= 2.0 * before)
        return ok / len(self.stats.growth_pairs)

    @property
    def escape_ok_fraction(self) -> float:
        if not self.stats.escape_reentries:
            return float("nan")
        ok = sum(1 for _, length in self.stats.escape_reentries if length >= self.escape_threshold)
        return ok / len(self.stats.escape_reentries)

    def distortion_trend(self) -> Optional[TrendFit]:
        points = [(n, ratio) for n, ratio, _ in self.distortion if np.isfinite(ratio)]
        if len(points) < 3:
            return None
        return fit_trend([n for n, _ in points], [r for _, r in points])


def _distortion_checkpoint(params: MapParams, consts: AnalysisConstants, part: PartitionState,
                           probes: int, limit: int) -> Tuple[float, int]:
    radius = math.exp(-consts.delta_zero)
    rows = np.flatnonzero(
        (part.y_lo > -radius) & (part.y_hi < radius) & (part.y_lo != 0.0) & (part.y_hi != 0.0)
        & (part.state != ESCAPED)
    )
    if rows.size == 0:
        return float("nan"), 0
    if rows.size > limit:
        rows = rows[::-(-rows.size // limit)]
    ratios = distortion_batch(params, part.y_lo[rows], part.y_hi[rows], part.sides(rows), probes)
    ratios = ratios[np.isfinite(ratios)]
    if ratios.size == 0:
        return float("nan"), 0
    return float(ratios.max()), int(ratios.size)


def run_partition(params: MapParams, consts: AnalysisConstants, n_part: int = 300,
                  max_elements: int = 1_000_000, max_depth: Optional[int] = None,
                  distortion_every: int = 10, probes: int = 5, distortion_limit: int = 2000) -> PartitionRun:
    """Refine P_0 up to n_part or until the element cap is hit"""
    part = initial_partition(params, consts, max_depth, horizon=n_part)
    stats = RefineStats()
    distortion: List[Tuple[int, float, int]] = []
    truncated = False
    print(f"🚀 Partition run: {part.size} initial elements, horizon {n_part}", file=sys.stderr)

    for n in range(1, n_part + 1):
        nxt = refine(part, params, consts, n, stats)
        if nxt.size > max_elements:
            truncated = True
            print(f"⚠️ Partition truncated at n={n}: {nxt.size} elements exceed cap {max_elements}",
                  file=sys.stderr)
            break
        part = nxt
        if distortion_every and n % distortion_every == 0:
            ratio, count = _distortion_checkpoint(params, consts, part, probes, distortion_limit)
            distortion.append((n, ratio, count))
            print(f"📊 n={n}: {part.size} elements, max distortion {ratio:.4g} over {count}", file=sys.stderr)

    threshold = math.exp(-consts.beta * (params.s + 3.0) * consts.delta_big
                         / (consts.beta + math.log(consts.lambda_c)))
    return PartitionRun(
        partition=part,
        steps=part.n,
        truncated=truncated,
        stats=stats,
        distortion=distortion,
        escape_threshold=threshold,
    )


def _ledger_rows(partition: PartitionState, limit: int) -> np.ndarray:
    rows = np.arange(partition.size)
    if rows.size > limit:
        rows = rows[::-(-rows.size // limit)]
    return rows


def ledger_table(partition: PartitionState, theta: int, limit: int = 5000) -> List[Tuple]:
    """
    Per-element ledger rows over a stride sample:
    (row, x_lo, x_hi, F_n, essential_returns, inessential_sum, bound_sum, dominated)
    """
    table = []
    for i in _ledger_rows(partition, limit):
        element = partition.element(int(i))
        ledger = depth_ledger(element, partition.n)
        table.append((
            int(i), element.interval[0], element.interval[1],
            essential_depth_sum(element, partition.n, theta),
            len(ledger.essential_depths), ledger.inessential_sum, ledger.bound_sum, ledger.dominated,
        ))
    return table


def ledger_summary(partition: PartitionState, limit: int = 5000) -> Dict[str, float]:
    """Scan (a stride sample of) element ledgers for the trailing-sum constant"""
    rows = _ledger_rows(partition, limit)
    worst = 0.0
    dominated = 0
    groups = 0
    for i in rows:
        ledger = depth_ledger(partition.element(int(i)), partition.n)
        worst = max(worst, ledger.max_trailing_ratio)
        dominated += int(ledger.dominated)
        groups += len(ledger.breakdown)
    return {
        "elements_scanned": int(rows.size),
        "essential_groups": groups,
        "max_trailing_ratio": worst,
        "dominated_fraction": dominated / rows.size if rows.size else float("nan"),
    }
