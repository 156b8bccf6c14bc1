"""Persistence of fronts and report tables.

Floats are written with ``repr`` so every value round-trips bit-exactly, and
files are replaced atomically.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .analysis import SummaryRow, TheoremReport
from .frontier import ParetoSet, Solution
from .measures import Measure
from .tours import members

FRONT_DIR = "fronts"
REPORT_DIR = "reports"


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def dump_json(data) -> str:
    return json.dumps(_plain(data), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _plain(obj):
    if isinstance(obj, Measure):
        return obj.value
    if isinstance(obj, dict):
        return {(k.value if isinstance(k, Measure) else k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


# ---------------------------------------------------------------- fronts


def front_path(run_dir: str | Path, instance: str, mode: str, measure: Measure) -> Path:
    return Path(run_dir) / FRONT_DIR / instance / mode / f"{Measure(measure).value}.csv"


def meta_path(run_dir: str | Path, instance: str, mode: str) -> Path:
    return Path(run_dir) / FRONT_DIR / instance / mode / "meta.json"


def lex_ranks_in_front(front: ParetoSet) -> list[int]:
    """Dense rank (1 = lexicographically smallest sorted workload) within the front."""
    distinct = sorted({s.workload for s in front.solutions})
    rank = {w: i + 1 for i, w in enumerate(distinct)}
    return [rank[s.workload] for s in front.solutions]


def front_csv(front: ParetoSet) -> str:
    v = len(front.solutions[0].lengths) if front.solutions else 0
    header = (
        ["nr", "total_cost"]
        + [f"tour_len_{k + 1}" for k in range(v)]
        + ["measure_value", "lex_rank", "tsp_optimal", "consistent", "blocks", "block_lengths"]
    )
    ranks = lex_ranks_in_front(front)
    rows = []
    for i, s in enumerate(front.solutions):
        val = s.value(front.measure)
        shown = "|".join(repr(x) for x in val) if front.measure is Measure.LEX else repr(val)
        rows.append(
            [i + 1, s.cost, *s.workload, shown, ranks[i],
             None if front.tsp_optimal is None else front.tsp_optimal[i],
             None if front.consistent is None else front.consistent[i],
             "|".join(" ".join(str(c + 1) for c in members(b)) for b in s.blocks),
             "|".join(repr(x) for x in s.lengths)]
        )
    return _csv_text(header, rows)


def _flag(text: str) -> Optional[bool]:
    if text == "":
        return None
    if text not in ("true", "false"):
        raise ValueError(f"bad boolean {text!r}")
    return text == "true"


def _mask(text: str) -> int:
    m = 0
    for c in text.split():
        m |= 1 << (int(c) - 1)
    return m


def read_front_csv(path: str | Path, measure: Measure, mode: str, meta: Optional[dict] = None) -> ParetoSet:
    """Rebuild a front from its CSV; costs are recomputed and must match the stored ones."""
    measure = Measure(measure)
    sols, tsp, cons = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            blocks = [_mask(b) for b in row["blocks"].split("|")]
            lengths = [float(x) for x in row["block_lengths"].split("|")]
            sol = Solution.build(blocks, lengths)
            if repr(sol.cost) != row["total_cost"]:
                raise ValueError(f"{path}: row {row['nr']} cost does not match its tours")
            sols.append(sol)
            tsp.append(_flag(row["tsp_optimal"]))
            cons.append(_flag(row["consistent"]))
    meta = meta or {}
    return ParetoSet(
        measure,
        mode,
        sols,
        meta.get("instance", ""),
        meta.get("instance_hash", ""),
        meta.get("max_cost_factor"),
        meta.get("min_cost", math.nan),
        meta.get("space_size", 0),
        None if None in tsp else tsp,
        None if None in cons else cons,
    )


def write_fronts(run_dir, fronts: Mapping[Measure, ParetoSet], meta: dict) -> None:
    for m, f in fronts.items():
        atomic_write(front_path(run_dir, f.instance_name, f.mode, m), front_csv(f))
    first = next(iter(fronts.values()))
    atomic_write(meta_path(run_dir, first.instance_name, first.mode), dump_json(meta))


def read_meta(run_dir, instance: str, mode: str) -> dict:
    return json.loads(meta_path(run_dir, instance, mode).read_text())


# ---------------------------------------------------------------- tables

SUMMARY_FIELDS = list(SummaryRow.__dataclass_fields__)


def summary_csv(rows: Sequence[SummaryRow]) -> str:
    return _csv_text(SUMMARY_FIELDS, [[getattr(r, f) for f in SUMMARY_FIELDS] for r in rows])


def read_summary_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def agreement_csv(by_mode: Mapping[str, dict]) -> str:
    rows = []
    for mode, mx in by_mode.items():
        for (a, b), st in mx["pairs"].items():
            rows.append([mode, Measure(a).value, Measure(b).value,
                         st["share_of_a"], st["share_of_b"], st["jaccard"]])
    return _csv_text(["mode", "measure_a", "measure_b", "share_of_a", "share_of_b", "jaccard"], rows)


def agreement_overall_csv(by_mode: Mapping[str, dict]) -> str:
    rows = [[mode, mx.get("share_all"), mx.get("share_unique_one"), mx.get("share_exactly_two")]
            for mode, mx in by_mode.items()]
    return _csv_text(["mode", "share_all", "share_unique_one", "share_exactly_two"], rows)


MARGINAL_FIELDS = [
    "mode", "measure", "instances", "mean_imbalance_ratio", "instances_with_second",
    "mean_cost_increase", "mean_range_reduction", "mean_share_within_10pct",
]


def marginal_csv(rows: Sequence[Sequence]) -> str:
    return _csv_text(MARGINAL_FIELDS, rows)


def theorem_json(rep: TheoremReport) -> str:
    return dump_json(rep.to_dict())
