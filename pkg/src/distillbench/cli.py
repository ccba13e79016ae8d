"""``distillbench`` command line.

Exit codes: 0 success, 1 usage error, 2 config error, 3 partial failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ExperimentPlan, load_plan
from .errors import ConfigError, ContractError

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("distillbench")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _plan(args) -> ExperimentPlan:
    if not args.config:
        raise ConfigError("--config is required for this command")
    plan = load_plan(args.config)
    return plan.with_overrides(output_dir=args.out, jobs=args.jobs, seed_offset=args.seed_offset)


def cmd_sweep(args) -> int:
    from .harness import run_sweep
    plan = _plan(args)
    s = run_sweep(plan)
    print(f"sweep: {len(s.trained)} trained, {len(s.skipped)} skipped, {len(s.failed)} failed")
    for name in s.failed:
        print(f"  failed: {name}")
    return EXIT_PARTIAL if s.failed else EXIT_OK


def cmd_distill(args) -> int:
    from .harness import run_distill
    plan = _plan(args)
    s = run_distill(plan)
    print(f"distill: {len(s.ran)} ran, {len(s.skipped)} skipped, {len(s.failed)} failed")
    for key, why in sorted(s.failed.items()):
        print(f"  failed: {key}: {why}")
    return EXIT_PARTIAL if s.failed else EXIT_OK


def _dirs(args) -> tuple[Path, Path]:
    if args.traces:
        traces = Path(args.traces)
        root = Path(args.out) if args.out else traces.parent
    else:
        if args.config:
            root = Path(_plan(args).output_dir)
        elif args.out:
            root = Path(args.out)
        else:
            raise ConfigError("give --traces DIR, --out DIR or --config PATH")
        traces = root / "traces"
    return traces, root / "report"


def cmd_report(args) -> int:
    from .report import build_report
    traces, out = _dirs(args)
    rep = build_report(traces, out, figures=not args.no_figures)
    print(f"report: {len(rep.speedups)} comparisons -> {out}")
    for row in rep.speedups:
        sp = row[args.resource]["speedup"]
        shown = "not reached" if sp is None else f"{sp:.3f}x"
        print(f"  {row['run_id']:<40} final {row['final_quality']:.4f}  {args.resource} speedup {shown}")
    return EXIT_OK


def cmd_pareto(args) -> int:
    from .harness import load_runs
    from .report import pareto_csv, pareto_for_runs
    traces, _ = _dirs(args)
    text = pareto_csv(pareto_for_runs(load_runs(traces), args.resource))
    if args.output:
        from .fsutil import atomic_write_text
        atomic_write_text(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite
    rep = run_suite(args.cases, seed=args.seed_offset)
    print(f"gradcheck: {rep.cases} graphs, max rel err {rep.max_rel_err:.3g}, {rep.seconds:.1f}s")
    for f in rep.failures:
        print(f"  FAIL {f}")
    return EXIT_OK if rep.passed else EXIT_PARTIAL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment plan (YAML)")
    common.add_argument("--out", metavar="DIR", help="override the plan's output directory")
    common.add_argument("--jobs", metavar="N", type=int, help="parallel training jobs")
    common.add_argument("--seed-offset", metavar="K", type=int, default=0, help="added to every plan seed")
    common.add_argument("--resource", choices=("wall", "cost"), default="cost",
                        help="resource axis for printed speedups / Pareto output")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="distillbench", description="Distillation-for-efficiency experiments at desk scale.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("sweep", parents=[common], help="train the teacher grid").set_defaults(fn=cmd_sweep)
    sub.add_parser("distill", parents=[common], help="train every student variant").set_defaults(fn=cmd_distill)
    rp = sub.add_parser("report", parents=[common], help="speedups, Pareto CSVs, tables and figures")
    rp.add_argument("--traces", metavar="DIR", help="traces directory (default: <out>/traces)")
    rp.add_argument("--no-figures", action="store_true", help="skip matplotlib output")
    rp.set_defaults(fn=cmd_report)
    pp = sub.add_parser("pareto", parents=[common], help="Pareto CSV of final (resource, quality) points")
    pp.add_argument("--traces", metavar="DIR", help="traces directory (default: <out>/traces)")
    pp.add_argument("-o", "--output", metavar="FILE", help="write CSV here instead of stdout")
    pp.set_defaults(fn=cmd_pareto)
    gp = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the autodiff ops")
    gp.add_argument("--cases", type=int, default=100)
    gp.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs is not None and args.jobs < 1:
        print("distillbench: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"distillbench: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractError as exc:
        # bad or missing inputs on disk (no baseline, missing traces) count as config errors
        print(f"distillbench: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
