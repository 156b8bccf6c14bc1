"""Batch orchestration: run configuration, instance generation, enumeration of
every instance into a run directory, and reports computed from persisted fronts."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

from .analysis import (
    InstanceAnalysis,
    IndexCollector,
    agreement_matrix,
    annotate_all,
    check_two_tour_theorem,
    marginal_cost_stats,
    mean_agreement,
    summarize,
    verify_theorems,
)
from .axioms import check_all
from .errors import ParameterError
from .frontier import ParetoSet, pareto_enumerate_many
from .instance import Instance, generate_family, load_instance, save_instance
from .measures import CORE_MEASURES, Measure
from .reports import (
    REPORT_DIR,
    agreement_csv,
    agreement_overall_csv,
    atomic_write,
    dump_json,
    front_path,
    marginal_csv,
    meta_path,
    read_front_csv,
    read_meta,
    summary_csv,
    theorem_json,
    write_fronts,
)
from .tours import (
    CONVENTIONAL,
    DEFAULT_DEDUP_TOL,
    DEFAULT_MAX_PERM_SIZE,
    MODES,
    TSP_CONSTRAINED,
    cache_dir,
    load_or_build_cache,
)

log = logging.getLogger(__name__)

INSTANCE_DIR = "instances"
CONFIG_FILE = "config.json"
LOG_FILE = "run.log"


@dataclass
class RunConfig:
    """One experiment grid.  Every field is echoed into the run directory."""

    seed: int = 1
    blocks: int = 5
    n: int = 10
    v_list: list[int] = field(default_factory=lambda: [2, 3, 4])
    slack_list: list[int] = field(default_factory=lambda: [0, 1])
    measures: list[str] = field(default_factory=lambda: [m.value for m in CORE_MEASURES])
    modes: list[str] = field(default_factory=lambda: list(MODES))
    max_perm_size: int = DEFAULT_MAX_PERM_SIZE
    max_cost_factor: Optional[float] = 1.5
    exact: bool = False
    dedup_tol: float = DEFAULT_DEDUP_TOL
    axiom_trials: int = 1000
    axiom_seed: int = 42
    out: str = "run"

    def __post_init__(self):
        self.measures = [Measure.parse(m).value if not isinstance(m, Measure) else m.value
                         for m in self.measures]
        for mode in self.modes:
            if mode not in MODES:
                raise ParameterError("modes", f"unknown mode {mode!r}")
        if self.blocks < 1:
            raise ParameterError("blocks", "at least one block is required")
        if self.max_cost_factor is not None and self.max_cost_factor < 1:
            raise ParameterError("max_cost_factor", "the cost ceiling factor must be >= 1")

    @property
    def ceiling(self) -> Optional[float]:
        return None if self.exact else self.max_cost_factor

    @property
    def measure_ids(self) -> list[Measure]:
        return [Measure(m) for m in self.measures]

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(sorted(unknown)[0], "unknown configuration field")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def echo(self) -> dict:
        """Fields written to the run directory; its own location is left out so
        that identical grids give identical trees wherever they are written."""
        data = self.to_dict()
        del data["out"]
        return data

    def instances(self) -> list[Instance]:
        return [
            generate_family(self.seed, b, self.n, v, s)
            for b in range(self.blocks)
            for v in self.v_list
            for s in self.slack_list
        ]


def instance_file(run_dir: str | Path, inst: Instance) -> Path:
    return Path(run_dir) / INSTANCE_DIR / f"{inst.name}.json"


def write_config(cfg: RunConfig, run_dir: str | Path) -> None:
    atomic_write(Path(run_dir) / CONFIG_FILE, dump_json(cfg.echo()))


def read_config(run_dir: str | Path) -> RunConfig:
    path = Path(run_dir) / CONFIG_FILE
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; was the run directory created by 'gen'?")
    cfg = RunConfig.from_file(path)
    cfg.out = str(run_dir)
    return cfg


class OverwriteRefused(Exception):
    pass


def generate(cfg: RunConfig, run_dir: str | Path, force: bool = False) -> list[Path]:
    """Write the config echo and one JSON file per instance.

    Existing files with different content are only replaced when ``force``
    is set; byte-identical files are left alone.
    """
    insts = cfg.instances()
    targets = [(instance_file(run_dir, i), i) for i in insts]
    cfg_path = Path(run_dir) / CONFIG_FILE
    config_text = dump_json(cfg.echo())
    if not force:
        clash = [str(p) for p, _ in targets if p.exists()]
        if cfg_path.exists() and cfg_path.read_text() != config_text:
            clash.append(str(cfg_path))
        if clash:
            raise OverwriteRefused(
                "refusing to overwrite existing files (use --force): " + ", ".join(clash[:5])
                + (" ..." if len(clash) > 5 else "")
            )
    atomic_write(cfg_path, config_text)
    for path, inst in targets:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_instance(inst, path)
    return [p for p, _ in targets]


def list_instances(run_dir: str | Path) -> list[Path]:
    return sorted((Path(run_dir) / INSTANCE_DIR).glob("*.json"))


# ---------------------------------------------------------------- enumeration


def enumerate_instance(
    inst: Instance,
    run_dir: str | Path,
    measures: Sequence[Measure],
    modes: Sequence[str],
    max_perm_size: int = DEFAULT_MAX_PERM_SIZE,
    max_cost_factor: Optional[float] = None,
    dedup_tol: float = DEFAULT_DEDUP_TOL,
) -> InstanceAnalysis:
    """Enumerate, flag and persist the fronts of one instance for each mode."""
    caches = Path(cache_dir(Path(run_dir) / "cache"))
    result = InstanceAnalysis(inst, {})
    for mode in modes:
        cache = load_or_build_cache(inst, mode, caches, max_perm_size, dedup_tol)
        collect = IndexCollector(inst.vehicles)
        fronts = pareto_enumerate_many(inst, cache, measures, mode, max_cost_factor, on_batch=collect)
        idx = collect.build()
        annotate_all(fronts, cache, idx)
        meta = {
            "instance": inst.name,
            "instance_hash": inst.content_hash(),
            "mode": mode,
            "vehicles": inst.vehicles,
            "capacity": inst.capacity,
            "measures": [Measure(m).value for m in measures],
            "max_cost_factor": max_cost_factor,
            "max_perm_size": max_perm_size,
            "dedup_tol": dedup_tol,
            "min_cost": next(iter(fronts.values())).min_cost,
            "space_size": next(iter(fronts.values())).space_size,
            "distinct_workloads": len(idx),
            "constant_sum": idx.is_constant_sum() if len(idx) else True,
            "two_tour_check": check_two_tour_theorem(idx, list(Measure)) if inst.vehicles == 2 else None,
        }
        del idx
        write_fronts(run_dir, fronts, meta)
        result.fronts[mode] = fronts
        result.space_sizes[mode] = meta["distinct_workloads"]
        result.constant_sum[mode] = meta["constant_sum"]
        if meta["two_tour_check"] is not None:
            result.two_tour[mode] = meta["two_tour_check"]
        log.info("%s/%s: %d solutions scanned, fronts %s", inst.name, mode, meta["space_size"],
                 {m.value: len(f) for m, f in fronts.items()})
    return result


def _enumerate_job(args) -> str:
    path, run_dir, measures, modes, max_perm_size, ceiling, dedup_tol = args
    inst = load_instance(path)
    enumerate_instance(inst, run_dir, [Measure(m) for m in measures], modes,
                       max_perm_size, ceiling, dedup_tol)
    return inst.name


def enumerate_run(cfg: RunConfig, run_dir: str | Path, paths: Sequence[Path], jobs: int = 1) -> list[str]:
    """Enumerate every instance file; instances are independent work units."""
    tasks = [
        (str(p), str(run_dir), cfg.measures, cfg.modes, cfg.max_perm_size, cfg.ceiling, cfg.dedup_tol)
        for p in paths
    ]
    if jobs <= 1 or len(tasks) <= 1:
        return [_enumerate_job(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_enumerate_job, tasks))


# ---------------------------------------------------------------- analysis from disk


class MissingFronts(Exception):
    def __init__(self, missing: list[Path]):
        self.missing = missing
        super().__init__("missing front files:\n  " + "\n  ".join(str(p) for p in missing))


def load_run(run_dir: str | Path, cfg: Optional[RunConfig] = None) -> list[InstanceAnalysis]:
    """Rebuild every instance's annotated fronts from the CSV files of a run."""
    cfg = cfg or read_config(run_dir)
    insts = [load_instance(p) for p in list_instances(run_dir)]
    if not insts:
        raise FileNotFoundError(f"no instance files under {Path(run_dir) / INSTANCE_DIR}")
    missing = []
    for inst in insts:
        for mode in cfg.modes:
            if not meta_path(run_dir, inst.name, mode).exists():
                missing.append(meta_path(run_dir, inst.name, mode))
            for m in cfg.measure_ids:
                p = front_path(run_dir, inst.name, mode, m)
                if not p.exists():
                    missing.append(p)
    if missing:
        raise MissingFronts(missing)
    out = []
    for inst in insts:
        res = InstanceAnalysis(inst, {})
        for mode in cfg.modes:
            meta = read_meta(run_dir, inst.name, mode)
            res.fronts[mode] = {
                m: read_front_csv(front_path(run_dir, inst.name, mode, m), m, mode, meta)
                for m in cfg.measure_ids
            }
            res.space_sizes[mode] = meta["distinct_workloads"]
            res.constant_sum[mode] = meta["constant_sum"]
            if meta.get("two_tour_check") is not None:
                res.two_tour[mode] = meta["two_tour_check"]
        out.append(res)
    return out


def _nanmean(values) -> float:
    vals = [v for v in values if v is not None and not math.isnan(v)]
    return sum(vals) / len(vals) if vals else math.nan


def marginal_rows(batch: Sequence[InstanceAnalysis], modes, measures) -> list[list]:
    rows = []
    for mode in modes:
        for m in measures:
            stats = [marginal_cost_stats(r.fronts[mode][m]) for r in batch]
            with_second = [s for s in stats if s["cost_increase"] is not None]
            rows.append([
                mode, m.value, len(stats),
                _nanmean([s["imbalance_ratio"] for s in stats]),
                len(with_second),
                _nanmean([s["cost_increase"] for s in with_second]),
                _nanmean([s["range_reduction"] for s in with_second]),
                _nanmean([s["share_within_10pct"] for s in stats]),
            ])
    return rows


@dataclass
class RunReport:
    summary: dict
    agreement: dict
    theorems: object


def analyze_batch(batch: Sequence[InstanceAnalysis], cfg: RunConfig) -> RunReport:
    measures = cfg.measure_ids
    summary = {}
    for mode in cfg.modes:
        fronts = [r.fronts[mode] for r in batch]
        conv = [r.fronts[CONVENTIONAL] for r in batch] if (
            mode == TSP_CONSTRAINED and CONVENTIONAL in cfg.modes) else None
        summary[mode] = summarize(fronts, mode, conv)
    agreement = {
        mode: mean_agreement([agreement_matrix(r.fronts[mode]) for r in batch]) for mode in cfg.modes
    }
    return RunReport(summary, agreement, verify_theorems(batch))


def write_reports(run_dir: str | Path, batch: Sequence[InstanceAnalysis], cfg: RunConfig) -> RunReport:
    rep = analyze_batch(batch, cfg)
    out = Path(run_dir) / REPORT_DIR
    rows = [row for mode in cfg.modes for row in rep.summary[mode]]
    atomic_write(out / "summary.csv", summary_csv(rows))
    atomic_write(out / "agreement.csv", agreement_csv(rep.agreement))
    atomic_write(out / "agreement_overall.csv", agreement_overall_csv(rep.agreement))
    atomic_write(out / "marginal.csv", marginal_csv(marginal_rows(batch, cfg.modes, cfg.measure_ids)))
    atomic_write(out / "theorems.json", theorem_json(rep.theorems))
    return rep


def write_axiom_report(path: str | Path, trials: int, seed: int, measures: Sequence[Measure]):
    reports = check_all(measures, trials, seed)
    atomic_write(path, dump_json([r.to_dict() for r in reports]))
    return reports
