"""Feasible customer subsets, exact closed-tour lengths, and the per-subset cache.

Subsets are bitmasks over customer indices (bit ``i`` is customer ``i``,
which is row ``i + 1`` of the distance matrix).
"""

from __future__ import annotations

import itertools
import json
import logging
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import CacheMismatchError, SizeLimitError
from .instance import Instance, distance_matrix

log = logging.getLogger(__name__)

MAX_BITMASK_CUSTOMERS = 32
MAX_TABLE_CUSTOMERS = 24
DEFAULT_MAX_PERM_SIZE = 9
DEFAULT_DEDUP_TOL = 1e-9
CACHE_FORMAT_VERSION = 1

CONVENTIONAL = "conventional"
TSP_CONSTRAINED = "tsp"
MODES = (CONVENTIONAL, TSP_CONSTRAINED)


def members(mask: int) -> list[int]:
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def popcount_table(n: int) -> np.ndarray:
    masks = np.arange(1 << n, dtype=np.int64)
    pc = np.zeros(1 << n, dtype=np.int16)
    for i in range(n):
        pc += ((masks >> i) & 1).astype(np.int16)
    return pc


def demand_table(demands: Iterable[int]) -> np.ndarray:
    demands = list(demands)
    masks = np.arange(1 << len(demands), dtype=np.int64)
    out = np.zeros(1 << len(demands), dtype=np.int64)
    for i, d in enumerate(demands):
        out += ((masks >> i) & 1) * d
    return out


def feasible_subsets(inst: Instance) -> list[int]:
    """Nonempty customer subsets whose demand fits one vehicle, in ascending mask order."""
    n = inst.n_customers
    if n > MAX_BITMASK_CUSTOMERS:
        raise SizeLimitError(
            f"{n} customers exceed the {MAX_BITMASK_CUSTOMERS}-bit subset representation"
        )
    if n <= MAX_TABLE_CUSTOMERS:
        dem = demand_table(inst.demands)
        ok = np.flatnonzero(dem <= inst.capacity)
        return [int(m) for m in ok if m]
    # wide instances: grow subsets by combination size instead of scanning 2^n masks
    found = []
    smallest = sorted(inst.demands)
    kmax = 0
    while kmax < n and sum(smallest[: kmax + 1]) <= inst.capacity:
        kmax += 1
    for k in range(1, kmax + 1):
        for combo in itertools.combinations(range(n), k):
            if sum(inst.demands[i] for i in combo) <= inst.capacity:
                found.append(sum(1 << i for i in combo))
    return sorted(found)


def _held_karp(d: np.ndarray, max_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-tour optima from the depot for every customer subset of size <= max_size.

    ``d`` is a depot-first distance matrix over ``k`` customers.  Returns
    ``(masks, lengths)`` where ``lengths[i]`` is the shortest tour
    depot -> members of ``masks[i]`` -> depot.  States are (visited set, last
    customer) and are filled layer by layer in subset size.
    """
    k = d.shape[0] - 1
    depot_leg = d[0, 1:]
    inner = d[1:, 1:]
    pc = popcount_table(k)
    all_masks = np.arange(1 << k, dtype=np.int64)
    keep = (pc >= 1) & (pc <= max_size)
    rows = np.full(1 << k, -1, dtype=np.int64)
    kept = all_masks[keep]
    rows[kept] = np.arange(kept.size)
    dp = np.full((kept.size, k), np.inf)
    for j in range(k):
        dp[rows[1 << j], j] = depot_leg[j]
    for size in range(2, max_size + 1):
        layer = all_masks[pc == size]
        for j in range(k):
            bit = 1 << j
            sel = layer[(layer & bit) != 0]
            if sel.size == 0:
                continue
            prev = dp[rows[sel ^ bit]]
            dp[rows[sel], j] = np.min(prev + inner[:, j], axis=1)
    lengths = np.min(dp + depot_leg, axis=1)
    return kept, lengths


def _sub_matrix(mask: int, d: np.ndarray) -> np.ndarray:
    idx = [0] + [c + 1 for c in members(mask)]
    return d[np.ix_(idx, idx)]


def tsp_optimal_length(mask: int, d: np.ndarray) -> float:
    """Exact shortest closed tour depot -> subset -> depot (Held-Karp)."""
    if mask <= 0:
        raise ValueError("a subset must be nonempty")
    sub = _sub_matrix(mask, d)
    k = sub.shape[0] - 1
    masks, lengths = _held_karp(sub, k)
    return float(lengths[masks == (1 << k) - 1][0])


def tsp_optimal_lengths(masks: Iterable[int], d: np.ndarray, n: int) -> dict[int, float]:
    """Batched Held-Karp: one layered pass over the whole customer set."""
    masks = [int(m) for m in masks]
    if not masks:
        return {}
    if n > MAX_TABLE_CUSTOMERS:
        return {m: tsp_optimal_length(m, d) for m in masks}
    max_size = max(bin(m).count("1") for m in masks)
    all_masks, lengths = _held_karp(d, max_size)
    table = np.full(1 << n, np.nan)
    table[all_masks] = lengths
    return {m: float(table[m]) for m in masks}


@lru_cache(maxsize=None)
def _orders(k: int) -> np.ndarray:
    """All visiting orders of k items with each tour and its reversal counted once."""
    if k <= 2:
        return np.array([list(range(k))], dtype=np.int16)
    perms = np.array(list(itertools.permutations(range(k))), dtype=np.int16)
    return perms[perms[:, 0] < perms[:, -1]]


def _order_lengths(mask: int, d: np.ndarray) -> np.ndarray:
    idx = np.array([c + 1 for c in members(mask)])
    orders = idx[_orders(idx.size)]
    lengths = d[0, orders[:, 0]] + d[orders[:, -1], 0]
    for t in range(orders.shape[1] - 1):
        lengths = lengths + d[orders[:, t], orders[:, t + 1]]
    return lengths


def dedup_lengths(values: np.ndarray, tol: float) -> np.ndarray:
    """Sorted distinct values; a value within ``tol`` of the last kept one is merged into it."""
    vals = np.sort(np.asarray(values, dtype=float))
    kept = [vals[0]]
    for v in vals[1:]:
        if v - kept[-1] > tol:
            kept.append(v)
    return np.array(kept)


@dataclass(frozen=True)
class TourLengthSet:
    subset: int
    tsp_optimal: float
    all_lengths: Optional[tuple[float, ...]] = None


def all_tour_lengths(
    mask: int,
    d: np.ndarray,
    tol: float = DEFAULT_DEDUP_TOL,
    max_perm_size: int = DEFAULT_MAX_PERM_SIZE,
    tsp_optimal: Optional[float] = None,
) -> TourLengthSet:
    """Every distinct closed-tour length of a subset, by exhaustive enumeration of orders.

    The smallest entry is replaced by the Held-Karp optimum so that both
    routes to the optimum agree bit-for-bit downstream.
    """
    size = bin(mask).count("1")
    if size > max_perm_size:
        raise SizeLimitError(
            f"subset of {size} customers exceeds max_perm_size={max_perm_size}; "
            "use the TSP-constrained mode for larger tours"
        )
    if tsp_optimal is None:
        tsp_optimal = tsp_optimal_length(mask, d)
    raw = _order_lengths(mask, d)
    if abs(raw.min() - tsp_optimal) > 1e-9 * max(1.0, tsp_optimal):
        raise AssertionError(
            f"enumerated optimum {raw.min()!r} disagrees with Held-Karp {tsp_optimal!r}"
        )
    rest = dedup_lengths(raw, tol)[1:]
    distinct = np.concatenate([[tsp_optimal], rest[rest - tsp_optimal > tol]])
    return TourLengthSet(mask, float(tsp_optimal), tuple(float(v) for v in distinct))


def usable_subset(mask: int, inst: Instance) -> bool:
    """Whether a feasible subset can be one tour of a solution with exactly v tours."""
    rest = inst.n_customers - bin(mask).count("1")
    rest_demand = inst.total_demand - sum(inst.demands[i] for i in members(mask))
    v = inst.vehicles
    return rest >= v - 1 and rest_demand <= (v - 1) * inst.capacity


@dataclass
class SubsetCache:
    """Tour data for every feasible subset of one instance.

    In conventional mode ``sets[mask].all_lengths`` holds the distinct tour
    lengths of every subset that can appear in a v-tour solution (others
    keep only the optimum).  In TSP-constrained mode only optima are stored.
    """

    instance_hash: str
    mode: str
    n_customers: int
    max_perm_size: int
    dedup_tol: float
    sets: dict[int, TourLengthSet]

    def __len__(self) -> int:
        return len(self.sets)

    def tsp(self, mask: int) -> float:
        return self.sets[mask].tsp_optimal

    def lengths(self, mask: int) -> tuple[float, ...]:
        entry = self.sets[mask]
        if self.mode == TSP_CONSTRAINED or entry.all_lengths is None:
            return (entry.tsp_optimal,)
        return entry.all_lengths

    def tsp_table(self) -> np.ndarray:
        table = np.full(1 << self.n_customers, np.nan)
        for m, entry in self.sets.items():
            table[m] = entry.tsp_optimal
        return table

    def length_tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flat length storage: (counts[mask], offsets[mask], flat values)."""
        counts = np.zeros(1 << self.n_customers, dtype=np.int64)
        offsets = np.zeros(1 << self.n_customers, dtype=np.int64)
        flat: list[float] = []
        for m in sorted(self.sets):
            vals = self.lengths(m)
            counts[m] = len(vals)
            offsets[m] = len(flat)
            flat.extend(vals)
        return counts, offsets, np.array(flat)

    def to_dict(self) -> dict:
        records = []
        for m in sorted(self.sets):
            e = self.sets[m]
            records.append([m, e.tsp_optimal, list(e.all_lengths) if e.all_lengths else None])
        return {
            "format_version": CACHE_FORMAT_VERSION,
            "instance_hash": self.instance_hash,
            "mode": self.mode,
            "n_customers": self.n_customers,
            "max_perm_size": self.max_perm_size,
            "dedup_tol": self.dedup_tol,
            "records": records,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SubsetCache":
        if data.get("format_version") != CACHE_FORMAT_VERSION:
            raise CacheMismatchError(f"cache format {data.get('format_version')!r} unsupported")
        sets = {}
        for mask, tsp, lengths in data["records"]:
            sets[int(mask)] = TourLengthSet(
                int(mask), float(tsp), tuple(float(v) for v in lengths) if lengths else None
            )
        return cls(
            data["instance_hash"],
            data["mode"],
            int(data["n_customers"]),
            int(data["max_perm_size"]),
            float(data["dedup_tol"]),
            sets,
        )


def build_cache(
    inst: Instance,
    mode: str = CONVENTIONAL,
    max_perm_size: int = DEFAULT_MAX_PERM_SIZE,
    dedup_tol: float = DEFAULT_DEDUP_TOL,
) -> SubsetCache:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    d = distance_matrix(inst)
    subsets = feasible_subsets(inst)
    optima = tsp_optimal_lengths(subsets, d, inst.n_customers)
    sets = {}
    for m in subsets:
        lengths = None
        if mode == CONVENTIONAL and usable_subset(m, inst):
            lengths = all_tour_lengths(m, d, dedup_tol, max_perm_size, optima[m]).all_lengths
        sets[m] = TourLengthSet(m, optima[m], lengths)
    return SubsetCache(inst.content_hash(), mode, inst.n_customers, max_perm_size, dedup_tol, sets)


def cache_dir(default: str | Path) -> Path:
    return Path(os.environ.get("EQUITYFRONT_CACHE_DIR") or default)


def cache_path(directory: str | Path, inst: Instance, mode: str) -> Path:
    return Path(directory) / f"{inst.name}_{inst.content_hash()[:12]}_{mode}.json"


def save_cache(cache: SubsetCache, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(cache.to_dict(), separators=(",", ":")))
    os.replace(tmp, path)


def load_cache(
    path: str | Path,
    inst: Instance,
    mode: str,
    max_perm_size: int = DEFAULT_MAX_PERM_SIZE,
    dedup_tol: float = DEFAULT_DEDUP_TOL,
) -> SubsetCache:
    """Load a persisted cache, rejecting it if it was built for other inputs."""
    cache = SubsetCache.from_dict(json.loads(Path(path).read_text()))
    if cache.instance_hash != inst.content_hash():
        raise CacheMismatchError("cache was built for a different instance")
    if cache.mode != mode:
        raise CacheMismatchError(f"cache mode {cache.mode!r} != {mode!r}")
    if cache.mode == CONVENTIONAL and (
        cache.max_perm_size != max_perm_size or cache.dedup_tol != dedup_tol
    ):
        raise CacheMismatchError("cache built with different enumeration settings")
    return cache


def load_or_build_cache(
    inst: Instance,
    mode: str,
    directory: str | Path | None = None,
    max_perm_size: int = DEFAULT_MAX_PERM_SIZE,
    dedup_tol: float = DEFAULT_DEDUP_TOL,
) -> SubsetCache:
    if directory is not None:
        path = cache_path(directory, inst, mode)
        if path.exists():
            try:
                return load_cache(path, inst, mode, max_perm_size, dedup_tol)
            except (CacheMismatchError, KeyError, ValueError) as exc:
                log.warning("rejecting cache %s (%s); rebuilding", path, exc)
    cache = build_cache(inst, mode, max_perm_size, dedup_tol)
    if directory is not None:
        save_cache(cache, cache_path(directory, inst, mode))
    return cache
