"""Bipartite assignment of predicted queries to ground-truth objects.

Both solvers break ties the same way: among assignments whose total cost lies
within a tiny relative tolerance of the optimum, the pair list that is
lexicographically smallest in ``(query_index, gt_index)`` order wins. Total
cost is always summed in ascending query order, so two solvers that agree on
the pairs agree on the cost bit-for-bit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import NonFiniteCost, TooLarge, UnknownClass
from .geometry import BoundingBox
from .losses import giou_loss

DEFAULT_MATCH_WEIGHTS = (2.0, 5.0, 2.0)
BRUTE_FORCE_MAX_DIM = 9
BRUTE_FORCE_MAX_INJECTIONS = 4_000_000


@dataclass
class QueryPrediction:
    box: BoundingBox
    class_probs: np.ndarray
    feature: Optional[np.ndarray] = None

    def __post_init__(self):
        self.class_probs = np.asarray(self.class_probs, dtype=float)
        if np.any(self.class_probs < 0.0) or np.any(self.class_probs > 1.0):
            raise ValueError("class probabilities must lie in [0, 1]")
        if self.class_probs.sum() > 1.0 + 1e-6:
            raise ValueError("class probabilities sum above 1")
        if self.feature is not None:
            self.feature = np.asarray(self.feature, dtype=float)


@dataclass
class MatchAssignment:
    pairs: List[Tuple[int, int]]
    total_cost: float


def pair_cost(
    q: QueryPrediction,
    g: BoundingBox,
    weights: Sequence[float] = DEFAULT_MATCH_WEIGHTS,
    image_size: Tuple[float, float] = (1.0, 1.0),
) -> float:
    """Class + L1 + GIoU matching cost of query ``q`` against ground truth ``g``.

    ``g.category_id`` selects the class probability; L1 distances are taken on
    coordinates divided by ``image_size = (width, height)``.
    """
    w_cls, w_l1, w_giou = weights
    if min(weights) < 0:
        raise ValueError("matching weights must be nonnegative")
    if not 0 <= g.category_id < len(q.class_probs):
        raise UnknownClass(g.category_id)
    width, height = image_size
    scale = (width, height, width, height)
    l1 = sum(abs(a - b) / s for a, b, s in zip(q.box.as_list(), g.as_list(), scale))
    cls = 1.0 - float(q.class_probs[g.category_id])
    return w_cls * cls + w_l1 * l1 + w_giou * giou_loss(q.box, g)


def cost_matrix(
    queries: Sequence[QueryPrediction],
    gts: Sequence[BoundingBox],
    weights: Sequence[float] = DEFAULT_MATCH_WEIGHTS,
    image_size: Tuple[float, float] = (1.0, 1.0),
) -> np.ndarray:
    c = np.zeros((len(queries), len(gts)))
    for i, q in enumerate(queries):
        for j, g in enumerate(gts):
            c[i, j] = pair_cost(q, g, weights, image_size)
    return c


def assignment_cost(cost: np.ndarray, pairs: Sequence[Tuple[int, int]]) -> float:
    total = 0.0
    for i, j in sorted(pairs):
        total += float(cost[i, j])
    return total


def _check(cost) -> np.ndarray:
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise NonFiniteCost("cost matrix has non-finite entries")
    return c


def _tie_tolerance(c: np.ndarray) -> float:
    scale = float(np.abs(c).max()) if c.size else 0.0
    return 1e-10 * max(1.0, scale) * max(1, min(c.shape))


def _solve_square(c: np.ndarray):
    """Shortest-augmenting-path assignment on a square matrix.

    Returns ``(col_of_row, u, v)``; ``c[i, j] - u[i] - v[j] >= 0`` up to
    rounding, with equality on the assigned edges.
    """
    n = c.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: 1-based row on column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = c[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row, u[1:], v[1:]


def _padded(c: np.ndarray) -> np.ndarray:
    n, m = c.shape
    size = max(n, m)
    pad = np.zeros((size, size))
    pad[:n, :m] = c
    return pad


def _square_total(pad: np.ndarray, col_of_row: np.ndarray) -> float:
    total = 0.0
    for i, j in enumerate(col_of_row):
        total += float(pad[i, j])
    return total


def hungarian(cost) -> MatchAssignment:
    """Minimum-cost injection of rows (queries) into columns (ground truths)."""
    c = _check(cost)
    n, m = c.shape
    if n == 0 or m == 0:
        return MatchAssignment([], 0.0)
    pad = _padded(c)
    size = pad.shape[0]
    col_of_row, u, v = _solve_square(pad)
    best = _square_total(pad, col_of_row)
    tol = _tie_tolerance(c)
    reduced = pad - u[:, None] - v[None, :]

    fixed_rows: List[int] = []
    fixed_cols: List[int] = []
    for i in range(n):
        current = int(col_of_row[i])
        taken = set(fixed_cols)
        # any real column beats staying unmatched (a dummy column)
        candidates = [j for j in range(m) if j not in taken and (current >= m or j < current)]
        for j in candidates:
            if reduced[i, j] > tol:
                continue
            rows = [r for r in range(size) if r not in fixed_rows and r != i]
            cols = [k for k in range(size) if k not in taken and k != j]
            trial = col_of_row.copy()
            trial[i] = j
            if rows:
                sub_cols, _, _ = _solve_square(pad[np.ix_(rows, cols)])
                for r, k in zip(rows, sub_cols):
                    trial[r] = cols[k]
            for r, k in zip(fixed_rows, fixed_cols):
                trial[r] = k
            if _square_total(pad, trial) <= best + tol:
                col_of_row = trial
                break
        fixed_rows.append(i)
        fixed_cols.append(int(col_of_row[i]))

    pairs = [(i, int(col_of_row[i])) for i in range(n) if col_of_row[i] < m]
    return MatchAssignment(pairs, assignment_cost(c, pairs))


def _injections_rows_first(n: int, m: int):
    # rows > cols: each row gets a column or the sentinel m, exactly n - m sentinels
    skips = n - m

    def rec(i, used, skipped, prefix):
        if i == n:
            yield tuple(prefix)
            return
        if len(used) < m:
            for j in range(m):
                if j not in used:
                    used.add(j)
                    prefix.append(j)
                    yield from rec(i + 1, used, skipped, prefix)
                    prefix.pop()
                    used.discard(j)
        if skipped < skips:
            prefix.append(m)
            yield from rec(i + 1, used, skipped + 1, prefix)
            prefix.pop()

    return rec(0, set(), 0, [])


@lru_cache(maxsize=128)
def _enumeration(n: int, m: int) -> np.ndarray:
    if n <= m:
        rows = itertools.permutations(range(m), n)
    else:
        rows = _injections_rows_first(n, m)
    return np.array(list(rows), dtype=np.int64).reshape(-1, n)


def brute_force_assignment(cost) -> MatchAssignment:
    """Exhaustive enumeration of injections; the test oracle for :func:`hungarian`."""
    c = _check(cost)
    n, m = c.shape
    if n == 0 or m == 0:
        return MatchAssignment([], 0.0)
    if min(n, m) > BRUTE_FORCE_MAX_DIM:
        raise TooLarge(f"brute force limited to min dimension {BRUTE_FORCE_MAX_DIM}, got {min(n, m)}")
    count = math.perm(max(n, m), min(n, m))
    if count > BRUTE_FORCE_MAX_INJECTIONS:
        raise TooLarge(f"{count} injections exceeds the enumeration limit")
    table = _enumeration(n, m)
    padded = np.hstack([c, np.zeros((n, 1))])
    totals = padded[np.arange(n)[None, :], table].sum(axis=1)
    best = totals.min()
    k = int(np.flatnonzero(totals <= best + _tie_tolerance(c))[0])
    pairs = [(i, int(j)) for i, j in enumerate(table[k]) if j < m]
    return MatchAssignment(pairs, assignment_cost(c, pairs))
