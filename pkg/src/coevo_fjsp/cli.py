"""Command line entry point: ``solve``, ``bench`` and ``validate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import InstanceNotFound, SpecError, builtin_lb_registry, emit_outputs, load_spec, run_experiment
from .engine import ConfigInvalid, EngineConfig, rpd, run
from .instance import InstanceFormatError, load_instance, validate
from .llm_bridge import GenerationExhausted, GenerationFailure, make_endpoint
from .schedule import check_feasible, schedule_to_json

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_EXHAUSTED = 3

GENERATORS = ("spt", "mwr", "random", "remote")


def _load(path: str, factories: int = 1):
    p = Path(path)
    if not p.is_file():
        raise InstanceNotFound(f"no such instance file: {path}")
    return load_instance(p, factory_count=factories, lb_registry=builtin_lb_registry())


def cmd_solve(args: argparse.Namespace) -> int:
    inst = _load(args.instance, args.factories)
    problems = validate(inst)
    if problems:
        for v in problems:
            print(f"invalid: {v}", file=sys.stderr)
        return EXIT_INVALID
    cfg = EngineConfig(
        pop_size=args.pop,
        max_iters=args.iters,
        epsilon=args.epsilon,
        seed=args.seed,
        generator=args.generator,
    )
    cfg.check()
    endpoint = make_endpoint(args.generator, args.seed)

    def progress(it: int, best: int) -> None:
        if args.verbose:
            print(f"iter {it:4d}  best {best}", file=sys.stderr)

    res = run(inst, cfg, endpoint, progress=progress)
    line = f"{inst.name or args.instance}: makespan {res.best_makespan}"
    if inst.known_lb:
        line += f"  LB {inst.known_lb}  RPD {rpd(res.best_makespan, inst.known_lb):.2f}%"
    line += f"  ({len(res.convergence) - 1} iterations, {len(res.operator_log)} operator replacements, {res.wall_time:.1f}s)"
    print(line)
    if args.dump_schedule:
        assert res.best_schedule is not None and check_feasible(res.best_schedule, inst)
        doc = schedule_to_json(res.best_schedule, inst)
        Path(args.dump_schedule).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    if args.workers is not None:
        spec.workers = args.workers

    def progress(rec) -> None:
        print(f"{rec.instance} run {rec.run} seed {rec.seed}: {rec.makespan}", file=sys.stderr)

    report = run_experiment(spec, progress=progress)
    emit_outputs(report, args.out, spec.emit)
    for s in report.summaries:
        extra = "" if s.rpd_bm is None else f"  RPD_BM {s.rpd_bm:.2f}  RPD_AM {s.rpd_am:.2f}"
        print(f"{s.instance}: BM {s.bm}  AM {s.am:.2f}{extra}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    inst = _load(args.instance)
    problems = validate(inst)
    if problems:
        for v in problems:
            print(f"invalid: {v}", file=sys.stderr)
        return EXIT_INVALID
    flex = sum(len(inst.times_at(k)) for k in range(inst.op_count)) / max(inst.op_count, 1)
    print(
        f"{inst.name}: {inst.job_count} jobs, {inst.machine_count} machines, "
        f"{inst.op_count} operations, {flex:.2f} machines per operation"
        + (f", LB {inst.known_lb}" if inst.known_lb else "")
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coevo-fjsp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance")
    p.add_argument("--instance", required=True, help="instance file in the Brandimarte text format")
    p.add_argument("--factories", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--generator", choices=GENERATORS, default="random")
    p.add_argument("--pop", type=int, default=100)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--dump-schedule", metavar="PATH", help="write the best schedule as JSON")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run a multi-run experiment from a key=value spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None, help="override the spec's worker count")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="parse and check an instance file")
    p.add_argument("--instance", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except GenerationExhausted as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_EXHAUSTED
    except (InstanceFormatError, InstanceNotFound, SpecError, ConfigInvalid, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (GenerationFailure, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
