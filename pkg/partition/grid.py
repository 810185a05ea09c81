import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

OUTSIDE = -1


@dataclass(frozen=True, order=True)
class GridIndex:
    """I_{m,k}: the k-th of m^2 equal pieces of I_m, larger k closer to 0"""
    m: int
    k: int

    def __post_init__(self):
        if self.m == 0:
            raise ValueError("m must be non-zero")
        if not 1 <= self.k <= self.m * self.m:
            raise ValueError(f"k must be in [1, {self.m * self.m}], got {self.k}")

    @property
    def depth(self) -> int:
        return abs(self.m)


def cell_bounds(m: int, k: int) -> Tuple[float, float]:
    """Closed-form endpoints of I_{m,k}, with I_{-m,k} = -I_{m,k}"""
    depth = abs(m)
    top = math.exp(-depth)
    width = (top - math.exp(-depth - 1)) / (depth * depth)
    lo, hi = top - k * width, top - (k - 1) * width
    return (lo, hi) if m > 0 else (-hi, -lo)


class Grid:
    """
    The cells I_{m,k} for Delta <= |m| <= max_depth as one sorted edge array

    The innermost cell on each side is stretched to 0, so the grid covers
    U_Delta = (-e^-Delta, e^-Delta) without gaps. Points on a grid line
    belong to the cell farther from 0.
    """

    def __init__(self, delta_big: int, max_depth: int):
        if delta_big < 2:
            raise ValueError("delta_big must be at least 2")
        if max_depth < delta_big:
            raise ValueError("max_depth must be >= delta_big")
        self.delta_big = delta_big
        self.max_depth = max_depth

        positive = [0.0]
        labels_m, labels_k = [], []
        for m in range(max_depth, delta_big - 1, -1):
            top = math.exp(-m)
            width = (top - math.exp(-m - 1)) / (m * m)
            for k in range(m * m, 0, -1):
                positive.append(top if k == 1 else top - (k - 1) * width)
                labels_m.append(m)
                labels_k.append(k)
        positive = np.array(positive)
        self.cells_per_side = len(labels_m)
        half = self.cells_per_side

        self.edges = np.concatenate([-positive[:0:-1], positive])
        self.cell_m = np.concatenate([-np.array(labels_m[::-1]), np.array(labels_m)]).astype(np.int64)
        self.cell_k = np.concatenate([np.array(labels_k[::-1]), np.array(labels_k)]).astype(np.int64)
        self.cell_lo = self.edges[:-1]
        self.cell_hi = self.edges[1:]

        self.radius = float(positive[-1])
        self.outer_cell_edge = float(positive[-2])
        below = delta_big - 1
        self.escape_length = (math.exp(-below) - math.exp(-delta_big)) / (below * below)

        n_cells = 2 * half
        idx = np.arange(n_cells)
        plus_lo = self.edges[np.maximum(idx - 1, 0)]
        plus_hi = self.edges[np.minimum(idx + 2, n_cells)]
        # neighbours never cross 0; the outermost cells reach into I_{Delta-1}
        plus_lo[half] = 0.0
        plus_hi[half - 1] = 0.0
        plus_lo[0] = -(self.radius + self.escape_length)
        plus_hi[n_cells - 1] = self.radius + self.escape_length
        self.plus_lo = plus_lo
        self.plus_hi = plus_hi

    @property
    def n_cells(self) -> int:
        return self.cell_lo.size

    def locate(self, y) -> np.ndarray:
        """Cell index for each y, OUTSIDE when |y| >= e^-Delta"""
        y = np.asarray(y, dtype=np.float64)
        right = np.searchsorted(self.edges, y, side="right") - 1
        left = np.searchsorted(self.edges, y, side="left") - 1
        idx = np.where(y >= 0, right, left)
        return np.where((idx < 0) | (idx >= self.n_cells), OUTSIDE, idx)

    def index(self, cell: int) -> GridIndex:
        return GridIndex(int(self.cell_m[cell]), int(self.cell_k[cell]))

    def cell_of(self, grid_index: GridIndex) -> int:
        hits = np.flatnonzero((self.cell_m == grid_index.m) & (self.cell_k == grid_index.k))
        if hits.size == 0:
            raise KeyError(f"{grid_index} is not on this grid")
        return int(hits[0])

    def contains_full_cell(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """True where [lo, hi] contains some whole cell"""
        first = np.searchsorted(self.edges, lo, side="left")
        last = np.searchsorted(self.edges, hi, side="right") - 1
        return last - first >= 1
