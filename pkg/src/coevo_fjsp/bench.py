"""Multi-run experiments: instance lookup, BM/AM/RPD tables and per-run artefacts."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from statistics import fmean
from typing import Callable

from .engine import EngineConfig, rpd, run
from .instance import load_instance, load_lb_registry, parse_lb_registry
from .llm_bridge import make_endpoint
from .schedule import schedule_to_json

log = logging.getLogger(__name__)

EMIT_FLAGS = frozenset({"table", "curves", "operators", "schedules"})
DEFAULT_EMIT = frozenset({"table", "curves", "operators"})
INSTANCE_SUFFIXES = ("", ".fjs", ".txt", ".FJS", ".TXT")


class SpecError(ValueError):
    pass


class InstanceNotFound(FileNotFoundError):
    pass


def builtin_lb_registry() -> dict[str, int]:
    """Lower bounds shipped with the package (Brandimarte MK and Fattahi MFJS sets)."""
    text = resources.files("coevo_fjsp").joinpath("data/lb.tsv").read_text(encoding="utf-8")
    return parse_lb_registry(text)


def _config_fields() -> dict[str, type]:
    out = {}
    for f in dataclasses.fields(EngineConfig):
        if f.name in ("init_mix", "seed", "generator"):
            continue
        out[f.name] = type(f.default)
    return out


def _coerce(raw: str, typ: type, key: str):
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError:
        raise SpecError(f"bad value for {key}: {raw!r}") from None


@dataclass
class ExperimentSpec:
    instances: list[str]
    runs: int = 10
    seed: int = 0
    generator: str = "random"
    factories: int = 1
    instance_dir: str = "data/instances"
    lb_registry: str | None = None
    overrides: dict = field(default_factory=dict)
    emit: frozenset = DEFAULT_EMIT
    timing: bool = False  # wall_time makes results.csv differ between identical runs
    workers: int = 1
    base_dir: Path = field(default_factory=Path.cwd)

    def check(self) -> None:
        if not self.instances:
            raise SpecError("no instances listed")
        if self.runs < 1:
            raise SpecError("runs must be at least 1")
        if self.factories < 1:
            raise SpecError("factories must be at least 1")
        if self.workers < 1:
            raise SpecError("workers must be at least 1")
        bad = set(self.emit) - EMIT_FLAGS
        if bad:
            raise SpecError(f"unknown emit flags: {sorted(bad)}")
        self.engine_config(0).check()

    def engine_config(self, seed: int) -> EngineConfig:
        return EngineConfig(seed=seed, generator=self.generator, **self.overrides)

    def resolve(self, name: str) -> Path:
        """Locate an instance by path, or by name inside ``instance_dir``."""
        direct = Path(name)
        if not direct.is_absolute():
            direct = self.base_dir / direct
        if direct.is_file():
            return direct
        d = Path(self.instance_dir)
        if not d.is_absolute():
            d = self.base_dir / d
        for suffix in INSTANCE_SUFFIXES:
            p = d / f"{name}{suffix}"
            if p.is_file():
                return p
        if d.is_dir():
            for p in sorted(d.iterdir()):
                if p.is_file() and p.stem.lower() == name.lower():
                    return p
        raise InstanceNotFound(f"instance {name!r} not found (looked in {d})")

    def registry(self) -> dict[str, int]:
        reg = builtin_lb_registry()
        if self.lb_registry:
            p = Path(self.lb_registry)
            if not p.is_absolute():
                p = self.base_dir / p
            reg.update(load_lb_registry(p))
        return reg


def parse_spec(text: str, base_dir: Path | None = None) -> ExperimentSpec:
    """Read ``key = value`` lines. ``#`` starts a comment; lists are comma separated.

    Recognised keys: instances, runs, seed, generator, factories, instance_dir,
    lb_registry, emit, timing, workers, plus any EngineConfig field
    (pop_size, max_iters, epsilon, ...).
    """
    cfg_fields = _config_fields()
    kw: dict = {"overrides": {}}
    if base_dir is not None:
        kw["base_dir"] = Path(base_dir)
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        value = value.strip("\"'")
        if key == "instances":
            kw[key] = [v.strip() for v in value.split(",") if v.strip()]
        elif key == "emit":
            kw[key] = frozenset(v.strip() for v in value.split(",") if v.strip())
        elif key in ("runs", "seed", "factories", "workers"):
            kw[key] = _coerce(value, int, key)
        elif key == "timing":
            kw[key] = _coerce(value, bool, key)
        elif key in ("generator", "instance_dir", "lb_registry"):
            kw[key] = value
        elif key in cfg_fields:
            kw["overrides"][key] = _coerce(value, cfg_fields[key], key)
        else:
            raise SpecError(f"line {n}: unknown key {key!r}")
    if "instances" not in kw:
        raise SpecError("spec must list instances")
    spec = ExperimentSpec(**kw)
    spec.check()
    return spec


def load_spec(path: str | Path) -> ExperimentSpec:
    p = Path(path)
    return parse_spec(p.read_text(encoding="utf-8"), base_dir=p.resolve().parent)


@dataclass
class RunRecord:
    instance: str
    run: int
    seed: int
    makespan: int
    wall_time: float
    convergence: list[int]
    operator_log: list[dict]
    operators: list[dict]
    schedule: dict | None = None


@dataclass
class InstanceSummary:
    instance: str
    lb: int | None
    makespans: list[int]

    @property
    def bm(self) -> int:
        return min(self.makespans)

    @property
    def am(self) -> float:
        return fmean(self.makespans)

    @property
    def rpd_bm(self) -> float | None:
        return None if self.lb is None else rpd(self.bm, self.lb)

    @property
    def rpd_am(self) -> float | None:
        return None if self.lb is None else rpd(self.am, self.lb)


@dataclass
class ExperimentReport:
    summaries: list[InstanceSummary]
    records: list[RunRecord]
    timing: bool = False

    @property
    def rpd_aver(self) -> float | None:
        """Mean of per-instance RPD_AM over instances with a registered bound."""
        vals = [s.rpd_am for s in self.summaries if s.rpd_am is not None]
        return fmean(vals) if vals else None

    @property
    def rpd_bm_aver(self) -> float | None:
        vals = [s.rpd_bm for s in self.summaries if s.rpd_bm is not None]
        return fmean(vals) if vals else None


def summarize(name: str, lb: int | None, makespans: list[int]) -> InstanceSummary:
    if not makespans:
        raise ValueError("at least one run is needed")
    return InstanceSummary(name, lb, list(makespans))


def _one_run(path: str, factories: int, lb: int | None, name: str, run_index: int, cfg: EngineConfig, want_schedule: bool):
    inst = load_instance(path, factory_count=factories).with_lb(lb)
    endpoint = make_endpoint(cfg.generator, cfg.seed)
    res = run(inst, cfg, endpoint)
    sched = schedule_to_json(res.best_schedule, inst) if want_schedule and res.best_schedule else None
    return RunRecord(
        instance=name,
        run=run_index,
        seed=cfg.seed,
        makespan=res.best_makespan,
        wall_time=res.wall_time,
        convergence=list(res.convergence),
        operator_log=[e.to_json() for e in res.operator_log],
        operators=[o.to_json() for o in res.operators],
        schedule=sched,
    )


def run_experiment(spec: ExperimentSpec, progress: Callable[[RunRecord], None] | None = None) -> ExperimentReport:
    spec.check()
    reg = spec.registry()
    jobs = []
    names = []
    lbs: dict[str, int | None] = {}
    for entry in spec.instances:
        path = spec.resolve(entry)
        name = path.stem
        if name in lbs:
            raise SpecError(f"instance {name!r} listed twice")
        names.append(name)
        lbs[name] = reg.get(name, reg.get(name.lower(), reg.get(name.upper())))
        for r in range(spec.runs):
            cfg = spec.engine_config(spec.seed + r)
            jobs.append((str(path), spec.factories, lbs[name], name, r, cfg, "schedules" in spec.emit))

    records: list[RunRecord] = []
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            futures = [pool.submit(_one_run, *j) for j in jobs]
            for fut in futures:
                rec = fut.result()
                records.append(rec)
                if progress is not None:
                    progress(rec)
    else:
        for j in jobs:
            rec = _one_run(*j)
            records.append(rec)
            if progress is not None:
                progress(rec)

    summaries = [summarize(n, lbs[n], [r.makespan for r in records if r.instance == n]) for n in names]
    return ExperimentReport(summaries, records, timing=spec.timing)


def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.2f}"


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def emit_outputs(report: ExperimentReport, out_dir: str | Path, emit: frozenset = DEFAULT_EMIT) -> list[Path]:
    """Write the experiment tree under ``out_dir`` and return the files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def put(rel: str, text: str) -> None:
        p = out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8", newline="")
        written.append(p)

    if "table" in emit:
        rows = [
            [r.instance, r.run, r.seed, r.makespan, f"{r.wall_time:.3f}" if report.timing else ""]
            for r in report.records
        ]
        put("results.csv", _csv_text(["instance", "run", "seed", "makespan", "wall_time"], rows))
        rows = [
            [s.instance, "" if s.lb is None else s.lb, s.bm, _fmt(s.am), _fmt(s.rpd_bm), _fmt(s.rpd_am)]
            for s in report.summaries
        ]
        rows.append(["RPD_aver", "", "", "", _fmt(report.rpd_bm_aver), _fmt(report.rpd_aver)])
        put("summary.csv", _csv_text(["instance", "LB", "BM", "AM", "RPD_BM", "RPD_AM"], rows))
    for r in report.records:
        stem = f"{r.instance}_{r.run}"
        if "curves" in emit:
            put(f"curves/{stem}.csv", _csv_text(["iteration", "best_makespan"], list(enumerate(r.convergence))))
        if "operators" in emit:
            doc = {"operator_log": r.operator_log, "final_operators": r.operators}
            put(f"operators/{stem}.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
        if "schedules" in emit and r.schedule is not None:
            put(f"schedules/{stem}.json", json.dumps(r.schedule, indent=2, sort_keys=True) + "\n")
    return written
