"""Command-line front end.

Exit codes: 0 success, 1 theorem or axiom violation, 2 size limit exceeded,
64 usage error (bad flags, unknown measure, refused overwrite, missing inputs).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import EquityFrontError, SizeLimitError
from .instance import load_instance
from .measures import CORE_MEASURES, Measure
from .pipeline import (
    CONFIG_FILE,
    LOG_FILE,
    MissingFronts,
    OverwriteRefused,
    RunConfig,
    enumerate_run,
    generate,
    list_instances,
    load_run,
    read_config,
    write_axiom_report,
    write_config,
    write_reports,
)
from .reports import REPORT_DIR, atomic_write, theorem_json
from .tours import MODES

EXIT_OK, EXIT_VIOLATION, EXIT_SIZE, EXIT_USAGE = 0, 1, 2, 64

HEAVY = {"n": 14, "v_list": [2, 3, 4, 5]}

log = logging.getLogger("equityfront")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _measure(text: str) -> str:
    if text == "all":
        return text
    try:
        return Measure.parse(text).value
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"unknown measure {text!r} (choose from {', '.join(m.value for m in Measure)} or all)"
        ) from None


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration; flags override its fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="customers per instance")
    p.add_argument("--blocks", type=int, help="number of disjoint customer blocks")
    p.add_argument("--vehicles", type=int, nargs="+", metavar="V")
    p.add_argument("--slack", type=int, nargs="+", choices=(0, 1), metavar="S")
    p.add_argument("--heavy", action="store_true", help="n=14 grid with v in 2..5")
    p.add_argument("--out", help="run directory")


def _add_enum_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--measure", type=_measure, nargs="+", metavar="M")
    p.add_argument("--mode", choices=(*MODES, "both"))
    p.add_argument("--max-perm-size", type=int)
    p.add_argument("--max-cost-factor", type=float)
    p.add_argument("--exact", action="store_true", default=None, help="disable the cost ceiling")
    p.add_argument("--dedup-tol", type=float)
    p.add_argument("--jobs", type=int, default=1, help="worker processes across instances")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="equityfront", description="Exact cost/equity Pareto analysis of small CVRPs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write the instance files of a grid")
    _add_grid_flags(p)
    p.add_argument("--force", action="store_true", help="overwrite existing files")

    p = sub.add_parser("enumerate", help="compute, flag and store Pareto fronts")
    p.add_argument("instances", nargs="*", help="instance files (default: all in the run directory)")
    _add_grid_flags(p)
    _add_enum_flags(p)

    p = sub.add_parser("analyze", help="summary, agreement and theorem reports of a run")
    p.add_argument("run_dir")

    p = sub.add_parser("verify-theorems", help="theorem checks over the fronts of a run")
    p.add_argument("run_dir")

    p = sub.add_parser("verify-axioms", help="randomized axiom checks of the measures")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--measure", type=_measure, nargs="+", metavar="M")
    p.add_argument("--out", help="write the JSON report here")

    p = sub.add_parser("report", help="gen, enumerate, analyze and verify-axioms in one go")
    _add_grid_flags(p)
    _add_enum_flags(p)
    p.add_argument("--force", action="store_true")
    return parser


def resolve_config(args, base: Optional[dict] = None) -> RunConfig:
    data = RunConfig().to_dict()
    data.update(base or {})
    if getattr(args, "config", None):
        data.update(json.loads(Path(args.config).read_text()))
    if getattr(args, "heavy", False):
        data.update(HEAVY)
    overrides = {
        "seed": getattr(args, "seed", None),
        "n": getattr(args, "n", None),
        "blocks": getattr(args, "blocks", None),
        "v_list": getattr(args, "vehicles", None),
        "slack_list": getattr(args, "slack", None),
        "max_perm_size": getattr(args, "max_perm_size", None),
        "max_cost_factor": getattr(args, "max_cost_factor", None),
        "exact": getattr(args, "exact", None),
        "dedup_tol": getattr(args, "dedup_tol", None),
        "out": getattr(args, "out", None),
    }
    measures = getattr(args, "measure", None)
    if measures:
        overrides["measures"] = (
            [m.value for m in CORE_MEASURES] if "all" in measures else list(dict.fromkeys(measures))
        )
    mode = getattr(args, "mode", None)
    if mode:
        overrides["modes"] = list(MODES) if mode == "both" else [mode]
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig.from_dict(data)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def _setup_logging(run_dir: Optional[Path], verbose: bool) -> None:
    root = logging.getLogger("equityfront")
    root.setLevel(logging.INFO)
    for h in list(root.handlers):
        root.removeHandler(h)
        h.close()
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.INFO if verbose else logging.WARNING)
    console.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    root.addHandler(console)
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        fh = logging.FileHandler(run_dir / LOG_FILE)
        fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        root.addHandler(fh)


def _print_theorems(rep) -> None:
    print(f"instances: {rep.instances}")
    print(f"non-TSP-optimal solutions in monotonic fronts: {len(rep.tsp_optimality_violations)} "
          f"of {rep.tsp_optimality_checked}")
    print(f"inconsistent solutions in monotonic fronts: {len(rep.consistency_violations)} "
          f"of {rep.consistency_checked}")
    print(f"two-tour check: {len(rep.two_tour_violations)} violations over "
          f"{rep.two_tour_checked} solutions in {rep.two_tour_spaces} spaces")
    print(f"min-max fronts outside lexicographic fronts: {len(rep.subset_violations)}")
    print(f"constant-sum spaces: {len(rep.constant_sum_instances)}")
    for name, w in rep.witnesses.items():
        print(f"witness {name}: {'found' if w else 'none'}")


def cmd_gen(args) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.out)
    paths = generate(cfg, out, force=args.force)
    print(f"wrote {len(paths)} instances to {out}")
    return EXIT_OK


def cmd_enumerate(args) -> int:
    # an existing run directory supplies the base grid; flags override it
    out_flag = Path(args.out or RunConfig.out)
    echo = out_flag / CONFIG_FILE
    cfg = resolve_config(args, json.loads(echo.read_text()) if echo.exists() else None)
    out = Path(cfg.out)
    _setup_logging(out, args.verbose)
    if args.instances:
        paths = [Path(p) for p in args.instances]
        for p in paths:
            load_instance(p)
    else:
        paths = list_instances(out)
        if not paths:
            raise UsageError(f"no instance files in {out}; run 'gen' first or name files")
    write_config(cfg, out)
    names = enumerate_run(cfg, out, paths, args.jobs)
    print(f"enumerated {len(names)} instances into {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    run_dir = Path(args.run_dir)
    _setup_logging(run_dir, args.verbose)
    cfg = read_config(run_dir)
    rep = write_reports(run_dir, load_run(run_dir, cfg), cfg)
    _print_theorems(rep.theorems)
    print(f"reports written to {run_dir / REPORT_DIR}")
    return EXIT_OK if rep.theorems.ok else EXIT_VIOLATION


def cmd_verify_theorems(args) -> int:
    from .analysis import verify_theorems

    run_dir = Path(args.run_dir)
    _setup_logging(run_dir, args.verbose)
    rep = verify_theorems(load_run(run_dir))
    atomic_write(run_dir / REPORT_DIR / "theorems.json", theorem_json(rep))
    _print_theorems(rep)
    return EXIT_OK if rep.ok else EXIT_VIOLATION


def cmd_verify_axioms(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    measures = list(Measure) if not args.measure or "all" in args.measure else [
        Measure(m) for m in dict.fromkeys(args.measure)
    ]
    if args.out:
        reports = write_axiom_report(args.out, args.trials, args.seed, measures)
    else:
        from .axioms import check_all

        reports = check_all(measures, args.trials, args.seed)
    status = EXIT_OK
    for r in reports:
        print(f"{r.measure:8s} {'ok' if r.ok else 'MISMATCH'}")
        for v in r.failures():
            status = EXIT_VIOLATION
            print(f"  {v.axiom}: expected {v.expected}, observed {v.verdict}")
            print(f"  witness: {json.dumps(v.witness or v.strictness)}")
    return status


def cmd_report(args) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.out)
    _setup_logging(out, args.verbose)
    paths = generate(cfg, out, force=args.force)
    log.info("generated %d instances", len(paths))
    enumerate_run(cfg, out, paths, args.jobs)
    rep = write_reports(out, load_run(out, cfg), cfg)
    axioms = write_axiom_report(out / REPORT_DIR / "axioms.json", cfg.axiom_trials, cfg.axiom_seed,
                                list(Measure))
    _print_theorems(rep.theorems)
    axioms_ok = all(r.ok for r in axioms)
    print(f"axiom classification: {'reproduced' if axioms_ok else 'MISMATCH'}")
    print(f"reports written to {out / REPORT_DIR}")
    return EXIT_OK if rep.theorems.ok and axioms_ok else EXIT_VIOLATION


COMMANDS = {
    "gen": cmd_gen,
    "enumerate": cmd_enumerate,
    "analyze": cmd_analyze,
    "verify-theorems": cmd_verify_theorems,
    "verify-axioms": cmd_verify_axioms,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except SizeLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIZE
    except MissingFronts as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, OverwriteRefused, FileNotFoundError, EquityFrontError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
