"""Diagnostics over Pareto sets: TSP-optimality, workload inconsistency, agreement,
marginal cost of equity, batch summaries and theorem checks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .frontier import COST_TOL, ParetoSet, Solution, SpaceScan, dominates
from .instance import Instance
from .measures import (
    MONOTONIC_MEASURES,
    NON_MONOTONIC_MEASURES,
    Measure,
    _row_sums,
    evaluate_sorted,
)
from .tours import CONVENTIONAL, TSP_CONSTRAINED, SubsetCache

TSP_TOL = 1e-9
VALUE_SLACK = 1e-12


def _unique_rows(w: np.ndarray) -> np.ndarray:
    if w.shape[0] == 0:
        return w
    order = np.lexsort(w.T[::-1])
    s = w[order]
    keep = np.r_[True, np.any(s[1:] != s[:-1], axis=1)]
    return s[keep]


class SolutionSpaceIndex:
    """Distinct non-increasingly sorted workload vectors of a solution space.

    Rows are stored column by column in ascending order of total cost, so
    that "strictly cheaper" candidates form a prefix and large spaces never
    need two full copies in memory.
    """

    def __init__(self, vectors: np.ndarray):
        w = np.asarray(vectors, dtype=float)
        self._setup([w[:, k].copy() for k in range(w.shape[1])], w.shape[1])

    def _setup(self, columns: list[np.ndarray], width: int) -> None:
        self.width = width
        if not columns or columns[0].size == 0:
            self.columns = [np.zeros(0) for _ in range(width)]
            self.costs = np.zeros(0)
            self._values: dict[Measure, np.ndarray] = {}
            return
        costs = columns[0].copy()
        for col in columns[1:]:
            costs += col
        order = np.argsort(costs, kind="stable")
        costs = costs[order]
        for k in range(width):
            columns[k] = columns[k][order]
        del order
        # equal vectors have bit-identical costs, so duplicates sit in equal-cost runs
        tied = np.flatnonzero(costs[1:] == costs[:-1])
        if tied.size:
            keep = np.ones(costs.size, dtype=bool)
            seen: set = set()
            prev = -2
            for i in tied:
                if i != prev + 1:
                    seen = {tuple(col[i] for col in columns)}
                row = tuple(col[i + 1] for col in columns)
                if row in seen:
                    keep[i + 1] = False
                seen.add(row)
                prev = i
            if not keep.all():
                costs = costs[keep]
                for k in range(width):
                    columns[k] = columns[k][keep]
        self.columns = columns
        self.costs = costs
        self._values = {}

    @classmethod
    def from_columns(cls, columns: list[np.ndarray], width: int) -> "SolutionSpaceIndex":
        idx = cls.__new__(cls)
        idx._setup(columns, width)
        return idx

    @classmethod
    def from_chunks(cls, chunks: Sequence[np.ndarray], width: int) -> "SolutionSpaceIndex":
        collect = IndexCollector(width)
        for w in chunks:
            collect(w)
        return collect.build()

    @classmethod
    def from_scan(cls, scan: SpaceScan) -> "SolutionSpaceIndex":
        collect = IndexCollector(scan.inst.vehicles)
        for w, _, _ in scan:
            collect(w)
        return collect.build()

    @classmethod
    def build(cls, inst: Instance, cache: SubsetCache, mode: str, max_cost_factor=None):
        return cls.from_scan(SpaceScan(inst, cache, mode, max_cost_factor))

    def __len__(self) -> int:
        return self.costs.size

    @property
    def vectors(self) -> np.ndarray:
        """All rows as one (N, v) array (a fresh copy)."""
        return np.column_stack(self.columns) if len(self) else np.zeros((0, self.width))

    def rows(self, positions: np.ndarray) -> np.ndarray:
        return np.column_stack([col[positions] for col in self.columns]).reshape(-1, self.width)

    def values(self, measure: Measure) -> np.ndarray:
        if measure not in self._values:
            self._values[measure] = evaluate_sorted(measure, self.vectors)
        return self._values[measure]

    def cheaper_below(self, workload: Sequence[float]) -> np.ndarray:
        """Rows s' with s'_k <= s_k at every sorted position and total cost strictly lower."""
        s = np.asarray(workload, dtype=float)
        cost = float(_row_sums(s[None, :])[0])
        stop = int(np.searchsorted(self.costs, cost - COST_TOL, side="left"))
        hit = self.columns[0][:stop] <= s[0]
        for k in range(1, self.width):
            hit &= self.columns[k][:stop] <= s[k]
        return np.flatnonzero(hit)

    def find_inconsistency(self, workload: Sequence[float], measure: Measure) -> Optional[np.ndarray]:
        """A witness x' making ``workload`` inconsistent under ``measure``, or None."""
        cand = self.rows(self.cheaper_below(workload))
        return _witness(np.asarray(workload, dtype=float), cand, Measure(measure))

    def is_constant_sum(self) -> bool:
        if len(self) == 0:
            raise ValueError("empty index")
        return bool(self.costs[-1] - self.costs[0] <= COST_TOL)


class IndexCollector:
    """Accumulates scanned workload chunks column by column.

    Use as the ``on_batch`` callback of an enumeration, then call ``build``.
    """

    def __init__(self, width: int):
        self.width = width
        self._parts: list[list[np.ndarray]] = [[] for _ in range(width)]

    def __call__(self, w: np.ndarray) -> None:
        u = _unique_rows(w)
        for k in range(self.width):
            self._parts[k].append(np.ascontiguousarray(u[:, k]))

    def build(self) -> SolutionSpaceIndex:
        columns = []
        for k in range(self.width):
            parts = self._parts[k]
            columns.append(np.concatenate(parts) if parts else np.zeros(0))
            self._parts[k] = []
        return SolutionSpaceIndex.from_columns(columns, self.width)


def _lex_less(a: np.ndarray, b: np.ndarray) -> bool:
    diff = np.flatnonzero(a != b)
    return bool(diff.size and a[diff[0]] < b[diff[0]])


def _witness(s: np.ndarray, cand: np.ndarray, measure: Measure) -> Optional[np.ndarray]:
    """First candidate row that ``measure`` ranks strictly less equitable than ``s``."""
    if cand.shape[0] == 0:
        return None
    if measure is Measure.LEX:
        for row in cand:
            if _lex_less(s, row):
                return row
        return None
    mine = float(evaluate_sorted(measure, s[None, :])[0])
    vals = evaluate_sorted(measure, cand)
    hits = np.flatnonzero(vals > mine + VALUE_SLACK * max(1.0, abs(mine)))
    return cand[hits[0]] if hits.size else None


def is_constant_sum(idx: SolutionSpaceIndex) -> bool:
    return idx.is_constant_sum()


def flag_tsp_optimal(sol: Solution, cache: SubsetCache) -> bool:
    return all(abs(x - cache.tsp(b)) <= TSP_TOL for b, x in zip(sol.blocks, sol.lengths))


def flag_inconsistent(sol: Solution, idx: SolutionSpaceIndex, measure: Measure) -> bool:
    return idx.find_inconsistency(sol.workload, measure) is not None


def annotate(front: ParetoSet, cache: SubsetCache, idx: SolutionSpaceIndex) -> ParetoSet:
    """Fill the per-solution TSP-optimality and consistency flags in place."""
    annotate_all({front.measure: front}, cache, idx)
    return front


def annotate_all(
    fronts: Mapping[Measure, ParetoSet], cache: SubsetCache, idx: SolutionSpaceIndex
) -> None:
    """Flag several fronts of one space, querying the index once per distinct workload."""
    wanted: dict[tuple, set] = {}
    for m, f in fronts.items():
        for sol in f.solutions:
            wanted.setdefault(sol.workload, set()).add(Measure(m))
    verdicts: dict[tuple, bool] = {}
    for w in sorted(wanted):
        s = np.asarray(w, dtype=float)
        cand = idx.rows(idx.cheaper_below(s))
        for m in sorted(wanted[w], key=lambda x: x.value):
            verdicts[(w, m)] = _witness(s, cand, m) is None
    for m, f in fronts.items():
        f.tsp_optimal = [flag_tsp_optimal(sol, cache) for sol in f.solutions]
        f.consistent = [verdicts[(sol.workload, Measure(m))] for sol in f.solutions]


# ---------------------------------------------------------------- agreement


def agreement_matrix(fronts: Mapping[Measure, ParetoSet]) -> dict:
    """Pairwise overlap of fronts (by routing-level solution keys) plus global shares."""
    hashes = {f.instance_hash for f in fronts.values()}
    if len(hashes) > 1:
        raise ValueError("fronts come from different instances")
    modes = {f.mode for f in fronts.values()}
    if len(modes) > 1:
        raise ValueError("fronts come from different modes")
    keysets = {m: set(f.keys()) for m, f in fronts.items()}
    pairs = {}
    for a in keysets:
        for b in keysets:
            ka, kb = keysets[a], keysets[b]
            inter, union = len(ka & kb), len(ka | kb)
            pairs[(a, b)] = {
                "share_of_a": inter / len(ka) if ka else math.nan,
                "share_of_b": inter / len(kb) if kb else math.nan,
                "jaccard": inter / union if union else math.nan,
            }
    everything = set().union(*keysets.values()) if keysets else set()
    found_by = [sum(k in ks for ks in keysets.values()) for k in everything]
    total = len(everything)
    return {
        "pairs": pairs,
        "share_all": sum(c == len(keysets) for c in found_by) / total if total else math.nan,
        "share_unique_one": sum(c == 1 for c in found_by) / total if total else math.nan,
        "share_exactly_two": sum(c == 2 for c in found_by) / total if total else math.nan,
        "solutions": total,
    }


def mean_agreement(matrices: Sequence[dict]) -> dict:
    """Average each pairwise statistic and global share over instances (NaNs skipped)."""
    out: dict = {"pairs": {}}
    if not matrices:
        return out
    for pair in matrices[0]["pairs"]:
        out["pairs"][pair] = {
            stat: float(np.nanmean([mx["pairs"][pair][stat] for mx in matrices]))
            for stat in ("share_of_a", "share_of_b", "jaccard")
        }
    for stat in ("share_all", "share_unique_one", "share_exactly_two"):
        out[stat] = float(np.nanmean([mx[stat] for mx in matrices]))
    return out


# ---------------------------------------------------------------- marginal cost


def _range(workload: Sequence[float]) -> float:
    return max(workload) - min(workload)


def marginal_cost_stats(front: ParetoSet, cache: Optional[SubsetCache] = None) -> dict:
    """Cost of equity along one front.

    ``imbalance_ratio``: longest over shortest tour of the cost-optimal solution.
    ``cost_increase``/``range_reduction``: relative change from the cost optimum
    to the second-cheapest TSP-optimal consistent solution (None when absent).
    ``share_within_10pct``: fraction of the front costing at most 1.1x the optimum.
    """
    if not front.solutions:
        raise ValueError("empty front")
    best = front.solutions[0]
    shortest = min(best.workload)
    stats = {
        "imbalance_ratio": max(best.workload) / shortest if shortest > 0 else math.inf,
        "cost_increase": None,
        "range_reduction": None,
        "share_within_10pct": sum(s.cost <= 1.1 * best.cost for s in front.solutions)
        / len(front.solutions),
    }
    tsp_flags = front.tsp_optimal
    if tsp_flags is None:
        if cache is None:
            raise ValueError("front is not annotated and no cache was given")
        tsp_flags = [flag_tsp_optimal(s, cache) for s in front.solutions]
    consistent = front.consistent if front.consistent is not None else [True] * len(front)
    good = [s for s, t, c in zip(front.solutions, tsp_flags, consistent) if t and c]
    if len(good) >= 2:
        first, second = good[0], good[1]
        stats["cost_increase"] = (second.cost - first.cost) / first.cost
        r1 = _range(first.workload)
        stats["range_reduction"] = (r1 - _range(second.workload)) / r1 if r1 > 0 else None
    return stats


# ---------------------------------------------------------------- summaries


@dataclass
class SummaryRow:
    measure: str
    mode: str
    instances: int
    avg_cardinality: float
    avg_tsp_optimal: float
    share_tsp_optimal: float
    mean_share_tsp_optimal: float
    avg_consistent: float
    share_consistent: float
    mean_share_consistent: float
    avg_new: Optional[float] = None
    share_new: Optional[float] = None
    mean_share_new: Optional[float] = None

    def as_dict(self) -> dict:
        return asdict(self)


def _ratio(num: float, den: float) -> float:
    return num / den if den else math.nan


def summarize(
    fronts: Sequence[Mapping[Measure, ParetoSet]],
    mode: str,
    conventional: Optional[Sequence[Mapping[Measure, ParetoSet]]] = None,
) -> list[SummaryRow]:
    """Per-measure averages over instances.

    ``share_*`` fields are ratios of averages (the headline figures);
    ``mean_share_*`` average the per-instance ratios.  In TSP-constrained
    mode, pass the matching conventional fronts to count "new" solutions:
    those absent from the same measure's conventional front.
    """
    if not fronts:
        raise ValueError("at least one instance is required")
    rows = []
    measures = list(fronts[0].keys())
    for m in measures:
        sizes, tsp, cons, new = [], [], [], []
        for i, per in enumerate(fronts):
            f = per[m]
            if f.tsp_optimal is None or f.consistent is None:
                raise ValueError(f"front {f.instance_name}/{m.value} is not annotated")
            sizes.append(len(f))
            tsp.append(sum(f.tsp_optimal))
            cons.append(sum(f.consistent))
            if mode == TSP_CONSTRAINED and conventional is not None:
                old = set(conventional[i][m].keys())
                new.append(sum(k not in old for k in f.keys()))
        k = len(sizes)
        avg_size = sum(sizes) / k
        row = SummaryRow(
            m.value,
            mode,
            k,
            avg_size,
            sum(tsp) / k,
            _ratio(sum(tsp) / k, avg_size),
            float(np.nanmean([_ratio(a, b) for a, b in zip(tsp, sizes)])),
            sum(cons) / k,
            _ratio(sum(cons) / k, avg_size),
            float(np.nanmean([_ratio(a, b) for a, b in zip(cons, sizes)])),
        )
        if new:
            row.avg_new = sum(new) / k
            row.share_new = _ratio(row.avg_new, avg_size)
            row.mean_share_new = float(np.nanmean([_ratio(a, b) for a, b in zip(new, sizes)]))
        rows.append(row)
    return rows


# ---------------------------------------------------------------- theorems


def check_two_tour_theorem(idx: SolutionSpaceIndex, measures: Iterable[Measure]) -> dict:
    """For two tours: every solution costlier than the lexicographic minimum is
    inconsistent or dominated by it, under each measure.  Exhaustive over ``idx``."""
    if len(idx) == 0:
        return {"checked": 0, "violations": []}
    w = idx.vectors
    if w.shape[1] != 2:
        raise ValueError("the two-tour check applies to 2-vehicle solution spaces only")
    lex_min = int(np.lexsort(w.T[::-1])[0])
    x = w[lex_min]
    x_cost = idx.costs[lex_min]
    costlier = np.flatnonzero(idx.costs > x_cost + COST_TOL)
    violations = []
    for m in measures:
        m = Measure(m)
        if m is Measure.LEX:
            # x is the lexicographic minimum, so it is never worse than any y
            continue
        vals = idx.values(m)
        ix = vals[lex_min]
        y_vals = vals[costlier]
        dominated = y_vals >= ix - VALUE_SLACK * max(1.0, abs(ix))
        open_rows = costlier[~dominated]
        # x itself is the witness whenever it lies componentwise below y
        below = np.all(x <= w[open_rows], axis=1) & (vals[open_rows] < ix)
        for r in open_rows[~below]:
            if idx.find_inconsistency(w[r], m) is None:
                violations.append({"measure": m.value, "y": w[r].tolist(), "x": x.tolist()})
    return {"checked": int(costlier.size), "lex_min": x.tolist(), "violations": violations}


@dataclass
class InstanceAnalysis:
    """All fronts (annotated) and index-dependent checks for one instance."""

    instance: Instance
    fronts: dict[str, dict[Measure, ParetoSet]]
    space_sizes: dict[str, int] = field(default_factory=dict)
    constant_sum: dict[str, bool] = field(default_factory=dict)
    two_tour: dict[str, dict] = field(default_factory=dict)


def analyze_instance(
    inst: Instance,
    caches: Mapping[str, SubsetCache],
    measures: Sequence[Measure],
    modes: Sequence[str] = (CONVENTIONAL, TSP_CONSTRAINED),
    max_cost_factor: Optional[float] = None,
) -> InstanceAnalysis:
    from .frontier import pareto_enumerate_many

    out = InstanceAnalysis(inst, {})
    for mode in modes:
        cache = caches[mode]
        collect = IndexCollector(inst.vehicles)
        fronts = pareto_enumerate_many(inst, cache, measures, mode, max_cost_factor, on_batch=collect)
        idx = collect.build()
        annotate_all(fronts, cache, idx)
        out.fronts[mode] = fronts
        out.space_sizes[mode] = len(idx)
        out.constant_sum[mode] = idx.is_constant_sum() if len(idx) else True
        if inst.vehicles == 2:
            out.two_tour[mode] = check_two_tour_theorem(idx, list(Measure))
    return out


@dataclass
class TheoremReport:
    instances: int = 0
    tsp_optimality_checked: int = 0
    tsp_optimality_violations: list = field(default_factory=list)
    consistency_checked: int = 0
    consistency_violations: list = field(default_factory=list)
    two_tour_spaces: int = 0
    two_tour_checked: int = 0
    two_tour_violations: list = field(default_factory=list)
    subset_violations: list = field(default_factory=list)
    constant_sum_instances: list = field(default_factory=list)
    witnesses: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not (
            self.tsp_optimality_violations
            or self.consistency_violations
            or self.two_tour_violations
            or self.subset_violations
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


OBSERVATIONS = {
    "non_tsp_optimal_in_front": "a non-monotonic front contains a non-TSP-optimal solution",
    "inconsistent_in_front": "a non-monotonic front contains an inconsistent solution",
    "tsp_optimal_but_inconsistent": "a TSP-optimal solution is inconsistent",
    "inconsistent_dominates_tsp_optimal": "a TSP-constrained front solution is dominated "
    "in the conventional space by an inconsistent solution",
    "inconsistent_under_tsp_constraint": "a TSP-constrained non-monotonic front contains "
    "an inconsistent solution",
}


def _sol_record(inst_name, mode, m, sol: Solution) -> dict:
    return {
        "instance": inst_name,
        "mode": mode,
        "measure": m.value,
        "cost": sol.cost,
        "workload": list(sol.workload),
        "blocks": list(sol.blocks),
    }


def verify_theorems(batch: Sequence[InstanceAnalysis]) -> TheoremReport:
    """Universal claims are collected as violations; observations as first witnesses."""
    rep = TheoremReport(instances=len(batch))
    witnesses: dict = {name: None for name in OBSERVATIONS}

    def witness(name, record):
        if witnesses[name] is None:
            witnesses[name] = record

    for res in sorted(batch, key=lambda r: r.instance.name):
        name = res.instance.name
        for mode, fronts in res.fronts.items():
            for m in MONOTONIC_MEASURES:
                if m not in fronts:
                    continue
                f = fronts[m]
                for sol, tsp, cons in zip(f.solutions, f.tsp_optimal, f.consistent):
                    rep.tsp_optimality_checked += 1
                    rep.consistency_checked += 1
                    if not tsp:
                        rep.tsp_optimality_violations.append(_sol_record(name, mode, m, sol))
                    if not cons:
                        rep.consistency_violations.append(_sol_record(name, mode, m, sol))
            if Measure.MINMAX in fronts and Measure.LEX in fronts:
                lex_keys = set(fronts[Measure.LEX].keys())
                missing = [k for k in fronts[Measure.MINMAX].keys() if k not in lex_keys]
                if missing:
                    rep.subset_violations.append({"instance": name, "mode": mode, "count": len(missing)})
            for m in NON_MONOTONIC_MEASURES:
                if m not in fronts:
                    continue
                f = fronts[m]
                for sol, tsp, cons in zip(f.solutions, f.tsp_optimal, f.consistent):
                    rec = _sol_record(name, mode, m, sol)
                    if not tsp:
                        witness("non_tsp_optimal_in_front", rec)
                    if not cons:
                        witness("inconsistent_in_front", rec)
                        if tsp:
                            witness("tsp_optimal_but_inconsistent", rec)
                        if mode == TSP_CONSTRAINED:
                            witness("inconsistent_under_tsp_constraint", rec)
        if CONVENTIONAL in res.fronts and TSP_CONSTRAINED in res.fronts:
            for m in NON_MONOTONIC_MEASURES:
                conv = res.fronts[CONVENTIONAL].get(m)
                cons_front = res.fronts[TSP_CONSTRAINED].get(m)
                if conv is None or cons_front is None:
                    continue
                old = set(conv.keys())
                bad = [s for s, c in zip(conv.solutions, conv.consistent) if not c]
                for sol in cons_front.solutions:
                    if sol.key in old:
                        continue
                    p = sol.point(m)
                    for t in bad:
                        if dominates(t.point(m), p, m):
                            witness(
                                "inconsistent_dominates_tsp_optimal",
                                {
                                    "dominated": _sol_record(name, TSP_CONSTRAINED, m, sol),
                                    "by": _sol_record(name, CONVENTIONAL, m, t),
                                },
                            )
                            break
        for mode, result in res.two_tour.items():
            rep.two_tour_spaces += 1
            rep.two_tour_checked += result["checked"]
            for v in result["violations"]:
                rep.two_tour_violations.append({"instance": name, "mode": mode, **v})
        for mode, const in res.constant_sum.items():
            if const:
                rep.constant_sum_instances.append({"instance": name, "mode": mode})
    rep.witnesses = witnesses
    return rep
