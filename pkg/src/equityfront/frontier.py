"""Exact bi-objective (total cost, inequality) Pareto sets over all v-tour solutions.

A solution assigns every customer to exactly one of ``v`` capacity-feasible
tours and picks one achievable length per tour.  In conventional mode any
distinct tour length of the subset may be chosen; in TSP-constrained mode
only the optimum.  The solution space is enumerated exhaustively in
vectorized chunks and filtered with an exact nondominance sweep; points with
identical objectives are all retained.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Optional, Sequence

import numpy as np

from .errors import SizeLimitError
from .instance import Instance
from .measures import Measure, _row_sums, evaluate_sorted, lex_compare, sort_desc
from .tours import (
    CONVENTIONAL,
    MAX_TABLE_CUSTOMERS,
    MODES,
    TSP_CONSTRAINED,
    SubsetCache,
    demand_table,
    members,
    popcount_table,
)

log = logging.getLogger(__name__)

CHUNK_ROWS = 400_000
MERGE_ROWS = 200_000
UNIT_BATCH = 20_000
COST_TOL = 1e-9
KEY_DIGITS = 9


def lowest_member(mask: int) -> int:
    return (mask & -mask).bit_length() - 1


@dataclass(frozen=True)
class Solution:
    """Blocks are customer bitmasks ordered by their lowest member."""

    blocks: tuple[int, ...]
    lengths: tuple[float, ...]
    workload: tuple[float, ...]
    cost: float

    @classmethod
    def build(cls, blocks: Sequence[int], lengths: Sequence[float]) -> "Solution":
        pairs = sorted(zip((int(b) for b in blocks), (float(x) for x in lengths)),
                       key=lambda p: lowest_member(p[0]))
        blocks = tuple(p[0] for p in pairs)
        lengths = tuple(p[1] for p in pairs)
        w = sort_desc(np.array([lengths]))
        return cls(blocks, lengths, tuple(float(x) for x in w[0]), float(_row_sums(w)[0]))

    @property
    def key(self) -> tuple:
        return tuple((b, round(x, KEY_DIGITS)) for b, x in zip(self.blocks, self.lengths))

    def value(self, measure: Measure):
        if measure is Measure.LEX:
            return self.workload
        return float(evaluate_sorted(measure, np.array([self.workload]))[0])

    def point(self, measure: Measure) -> "ObjectivePoint":
        return ObjectivePoint(self.cost, self.value(measure))


@dataclass(frozen=True)
class ObjectivePoint:
    cost: float
    ineq: Any  # float for scalar measures, a non-increasing tuple for the lex order


def _ineq_cmp(a, b, measure: Measure) -> int:
    lex_a, lex_b = isinstance(a, tuple), isinstance(b, tuple)
    if lex_a != lex_b or lex_a != (measure is Measure.LEX):
        raise ValueError("objective points mix scalar and lexicographic inequality values")
    if lex_a:
        return lex_compare(a, b)
    return (a > b) - (a < b)


def dominates(a: ObjectivePoint, b: ObjectivePoint, measure: Measure) -> bool:
    """Pareto dominance for (cost, inequality), both minimized."""
    c = _ineq_cmp(a.ineq, b.ineq, measure)
    return a.cost <= b.cost and c <= 0 and (a.cost < b.cost or c < 0)


def lex_ranks(w: np.ndarray) -> np.ndarray:
    """Dense lexicographic rank of each row (equal rows share a rank)."""
    if w.shape[0] == 0:
        return np.zeros(0)
    order = np.lexsort(w.T[::-1])
    s = w[order]
    step = np.r_[False, np.any(s[1:] != s[:-1], axis=1)]
    ranks = np.empty(w.shape[0])
    ranks[order] = np.cumsum(step)
    return ranks


def nondominated_mask(cost: np.ndarray, ineq: np.ndarray) -> np.ndarray:
    """Exact nondominance of (cost, ineq) pairs; ties on both objectives are all kept."""
    n = cost.shape[0]
    keep = np.zeros(n, dtype=bool)
    if n == 0:
        return keep
    order = np.lexsort((ineq, cost))
    c, q = cost[order], ineq[order]
    starts = np.flatnonzero(np.r_[True, c[1:] != c[:-1]])
    group = np.cumsum(np.r_[True, c[1:] != c[:-1]]) - 1
    group_min = np.minimum.reduceat(q, starts)
    best_before = np.r_[np.inf, np.minimum.accumulate(group_min)[:-1]]
    keep[order] = (q == group_min[group]) & (group_min[group] < best_before[group])
    return keep


def _ineq_column(measure: Measure, w: np.ndarray) -> np.ndarray:
    if measure is Measure.LEX:
        return lex_ranks(w)
    return evaluate_sorted(measure, w)


def pareto_filter(points: Sequence[tuple[ObjectivePoint, Any]], measure: Measure) -> list:
    """Nondominated (point, payload) pairs, ordered by cost, inequality, then payload key."""
    if not points:
        return []
    measure = Measure(measure)
    cost = np.array([p.cost for p, _ in points], dtype=float)
    if measure is Measure.LEX:
        ineq = lex_ranks(np.array([p.ineq for p, _ in points], dtype=float))
    else:
        ineq = np.array([p.ineq for p, _ in points], dtype=float)
    keep = np.flatnonzero(nondominated_mask(cost, ineq))

    def tiebreak(i):
        payload = points[i][1]
        return getattr(payload, "key", i)

    return [points[i] for i in sorted(keep, key=lambda i: (cost[i], ineq[i], tiebreak(i)))]


class Partitioner:
    """Canonical enumeration of customer partitions into exactly v feasible blocks.

    Each block list is emitted once, blocks ordered by lowest member; the
    block holding the lowest unassigned customer is chosen at every level.
    Sub-partitions of the same remaining set are memoized as mask arrays.
    """

    def __init__(self, inst: Instance):
        n = inst.n_customers
        if n > MAX_TABLE_CUSTOMERS:
            raise SizeLimitError(f"partition enumeration supports at most {MAX_TABLE_CUSTOMERS} customers")
        self.n, self.v, self.q = n, inst.vehicles, inst.capacity
        self.pc = popcount_table(n)
        self.dem = demand_table(inst.demands)
        masks = np.flatnonzero(self.dem <= self.q)
        masks = masks[masks > 0]
        low = np.zeros(masks.size, dtype=np.int64)
        for i in range(n - 1, -1, -1):
            low[(masks >> i) & 1 == 1] = i
        self.by_low = [masks[low == i].astype(np.int64) for i in range(n)]
        self.full = (1 << n) - 1
        self._memo: dict[tuple[int, int], np.ndarray] = {}

    def parts(self, rest: int, k: int) -> np.ndarray:
        if k == 1:
            if rest and self.dem[rest] <= self.q:
                return np.array([[rest]], dtype=np.int64)
            return np.empty((0, 1), dtype=np.int64)
        key = (rest, k)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        cands = self.by_low[lowest_member(rest)]
        cands = cands[(cands & ~rest) == 0]
        remaining = rest ^ cands
        ok = (self.pc[remaining] >= k - 1) & (self.dem[remaining] <= (k - 1) * self.q)
        cands = cands[ok]
        subs, heads = [], []
        for b in cands:
            sub = self.parts(rest ^ int(b), k - 1)
            if sub.shape[0]:
                subs.append(sub)
                heads.append(np.full(sub.shape[0], b, dtype=np.int64))
        if subs:
            out = np.column_stack([np.concatenate(heads), np.concatenate(subs)])
        else:
            out = np.empty((0, k), dtype=np.int64)
        if k < self.v - 1:
            self._memo[key] = out
        return out

    def units(self) -> Iterator[np.ndarray]:
        """Independent work units, one per choice of the block holding customer 0."""
        if self.v == 1:
            yield self.parts(self.full, 1)
            return
        cands = self.by_low[0]
        remaining = self.full ^ cands
        ok = (self.pc[remaining] >= self.v - 1) & (self.dem[remaining] <= (self.v - 1) * self.q)
        for b in cands[ok]:
            sub = self.parts(self.full ^ int(b), self.v - 1)
            if sub.shape[0]:
                yield np.column_stack([np.full(sub.shape[0], b, dtype=np.int64), sub])


def enumerate_partitions(inst: Instance, cache: Optional[SubsetCache] = None) -> Iterator[tuple[int, ...]]:
    """Every partition of the customers into exactly v capacity-feasible blocks, once each."""
    found = False
    for rows in Partitioner(inst).units():
        for row in rows:
            found = True
            yield tuple(int(b) for b in row)
    if not found:
        warnings.warn(f"instance {inst.name!r} has no feasible partition into {inst.vehicles} tours")


@dataclass
class ParetoSet:
    measure: Measure
    mode: str
    solutions: list[Solution]
    instance_name: str = ""
    instance_hash: str = ""
    max_cost_factor: Optional[float] = None
    min_cost: float = math.nan
    space_size: int = 0
    tsp_optimal: Optional[list[bool]] = None
    consistent: Optional[list[bool]] = None

    def __len__(self) -> int:
        return len(self.solutions)

    def keys(self) -> list[tuple]:
        return [s.key for s in self.solutions]

    @property
    def exact(self) -> bool:
        return self.max_cost_factor is None


@dataclass
class _Candidates:
    """Running nondominated buffer for one measure."""

    measure: Measure
    w: list = field(default_factory=list)
    blocks: list = field(default_factory=list)
    lengths: list = field(default_factory=list)
    size: int = 0

    def add(self, w, blocks, lengths):
        if w.shape[0] == 0:
            return
        keep = nondominated_mask(_row_sums(w), _ineq_column(self.measure, w))
        self.w.append(w[keep])
        self.blocks.append(blocks[keep])
        self.lengths.append(lengths[keep])
        self.size += int(keep.sum())
        if self.size > MERGE_ROWS:
            self.compact()

    def compact(self):
        if not self.w:
            return
        w, b, x = (np.concatenate(a) for a in (self.w, self.blocks, self.lengths))
        keep = nondominated_mask(_row_sums(w), _ineq_column(self.measure, w))
        self.w, self.blocks, self.lengths = [w[keep]], [b[keep]], [x[keep]]
        self.size = int(keep.sum())

    def solutions(self) -> list[Solution]:
        self.compact()
        if not self.w:
            return []
        sols = [Solution.build(b, x) for b, x in zip(self.blocks[0], self.lengths[0])]
        if self.measure is Measure.LEX:
            return sorted(sols, key=lambda s: (s.cost, s.workload, s.key))
        return sorted(sols, key=lambda s: (s.cost, s.value(self.measure), s.key))


class SpaceScan:
    """Chunked walk over the full solution space of one instance and mode.

    Yields ``(w, blocks, lengths)`` triples: ``w`` holds each solution's
    workloads sorted non-increasingly, ``blocks`` the block masks and
    ``lengths`` the chosen length per block (both in block order).
    """

    def __init__(
        self,
        inst: Instance,
        cache: SubsetCache,
        mode: str,
        max_cost_factor: Optional[float] = None,
        chunk_rows: int = CHUNK_ROWS,
    ):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if cache.instance_hash != inst.content_hash():
            raise ValueError("cache does not belong to this instance")
        if mode == CONVENTIONAL and cache.mode != CONVENTIONAL:
            raise ValueError("conventional enumeration needs a cache with all tour lengths")
        self.inst, self.cache, self.mode = inst, cache, mode
        self.max_cost_factor = max_cost_factor
        self.chunk_rows = chunk_rows
        self.partitioner = Partitioner(inst)
        self.tsp = cache.tsp_table()
        if mode == CONVENTIONAL:
            self.counts, self.offsets, self.flat = cache.length_tables()
        self.min_cost = self._min_cost()
        self.ceiling = math.inf if max_cost_factor is None else max_cost_factor * self.min_cost
        self.size = 0

    def _batches(self) -> Iterator[np.ndarray]:
        """Work units concatenated into batches of at least ``UNIT_BATCH`` partitions."""
        pending, count = [], 0
        for rows in self.partitioner.units():
            pending.append(rows)
            count += rows.shape[0]
            if count >= UNIT_BATCH:
                yield np.concatenate(pending)
                pending, count = [], 0
        if pending:
            yield np.concatenate(pending)

    def _min_cost(self) -> float:
        best = math.inf
        for rows in self._batches():
            w = sort_desc(self.tsp[rows])
            best = min(best, float(_row_sums(w).min()))
        return best

    def __iter__(self):
        self.size = 0
        for rows in self._batches():
            if self.ceiling < math.inf:
                floor = _row_sums(sort_desc(self.tsp[rows]))
                rows = rows[floor <= self.ceiling * (1 + 1e-12)]
            if rows.shape[0] == 0:
                continue
            if self.mode == TSP_CONSTRAINED:
                yield from self._emit(rows, self.tsp[rows])
            else:
                yield from self._expand(rows)

    def _emit(self, blocks, lengths):
        w = sort_desc(lengths)
        if self.ceiling < math.inf:
            keep = _row_sums(w) <= self.ceiling * (1 + 1e-12)
            w, blocks, lengths = w[keep], blocks[keep], lengths[keep]
        self.size += w.shape[0]
        yield w, blocks, lengths

    def _expand(self, rows):
        counts = self.counts[rows]
        if np.any(counts == 0):
            raise SizeLimitError("a block has no enumerated tour lengths")
        totals = np.prod(counts, axis=1)
        start = 0
        while start < rows.shape[0]:
            cum = np.cumsum(totals[start:])
            stop = start + max(1, int(np.searchsorted(cum, self.chunk_rows, side="right")))
            yield from self._expand_chunk(rows[start:stop], counts[start:stop], totals[start:stop])
            start = stop

    def _expand_chunk(self, rows, counts, totals):
        rep = np.repeat(np.arange(rows.shape[0]), totals)
        first = np.r_[0, np.cumsum(totals)[:-1]]
        r = np.arange(rep.size) - first[rep]
        v = rows.shape[1]
        lengths = np.empty((rep.size, v))
        for b in range(v - 1, -1, -1):
            c = counts[rep, b]
            choice = r % c
            r //= c
            lengths[:, b] = self.flat[self.offsets[rows[rep, b]] + choice]
        yield from self._emit(rows[rep], lengths)


def pareto_enumerate_many(
    inst: Instance,
    cache: SubsetCache,
    measures: Sequence[Measure],
    mode: str,
    max_cost_factor: Optional[float] = None,
    on_batch: Optional[Callable[[np.ndarray], None]] = None,
) -> dict[Measure, ParetoSet]:
    """Exact Pareto sets for several measures from a single pass over the space.

    With ``max_cost_factor`` set, solutions costlier than that multiple of
    the optimal cost are skipped; the result is then the exact Pareto set
    restricted to that cost range.  ``on_batch`` receives every chunk of
    sorted workload vectors as it is scanned.
    """
    measures = [Measure(m) for m in measures]
    scan = SpaceScan(inst, cache, mode, max_cost_factor)
    buffers = {m: _Candidates(m) for m in measures}
    for w, blocks, lengths in scan:
        if on_batch is not None:
            on_batch(w)
        for buf in buffers.values():
            buf.add(w, blocks, lengths)
    if scan.size == 0:
        warnings.warn(f"instance {inst.name!r} has an empty solution space")
    if max_cost_factor is not None:
        log.warning(
            "%s/%s: cost ceiling %.3fx optimum (%.4f); fronts are complete only below it",
            inst.name, mode, max_cost_factor, scan.ceiling,
        )
    return {
        m: ParetoSet(
            m,
            mode,
            buffers[m].solutions(),
            inst.name,
            inst.content_hash(),
            max_cost_factor,
            scan.min_cost,
            scan.size,
        )
        for m in measures
    }


def pareto_enumerate(
    inst: Instance,
    cache: SubsetCache,
    measure: Measure,
    mode: str,
    max_cost_factor: Optional[float] = None,
) -> ParetoSet:
    return pareto_enumerate_many(inst, cache, [measure], mode, max_cost_factor)[Measure(measure)]


def solution_from_blocks(blocks: Sequence[int], cache: SubsetCache, choices: Sequence[int] | None = None) -> Solution:
    """Solution with the given blocks; ``choices`` index each block's length list (default: optimum)."""
    choices = choices or [0] * len(blocks)
    return Solution.build(blocks, [cache.lengths(b)[c] for b, c in zip(blocks, choices)])


def describe_blocks(sol: Solution) -> list[list[int]]:
    return [members(b) for b in sol.blocks]
