"""The co-evolution loop: a GA on schedules driven by an evolving pool of gene-selection operators."""

from __future__ import annotations

import json
import logging
import random
import time
from dataclasses import dataclass, field
from typing import Callable

from . import genetics as gen
from .features import FeatureTable, compute_features
from .instance import Instance, validate
from .llm_bridge import (
    GeneratorEndpoint,
    build_initial_prompt,
    build_report,
    evolve_operator,
    generate_operator,
)
from .meta_operator import Level, Operator, replace_worst, roulette_index, operator_fitness, select_genes, trigger_check
from .schedule import Chromosome, Schedule, decode

log = logging.getLogger(__name__)


class ConfigInvalid(ValueError):
    pass


class NonPositiveLB(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    pop_size: int = 100
    max_iters: int = 200
    operator_pop_size: int = 3
    p_crossover: float = 0.9
    p_mutation: float = 0.9
    epsilon: float = 0.05
    tournament_k: int = 2
    init_mix: gen.InitMix = field(default_factory=gen.InitMix)
    seed: int = 0
    generator: str = "random"
    max_retries: int = 5
    evolve_operators: bool = True
    use_analysis: bool = True
    local_search: bool = True
    stop_at_lb: bool = True

    def check(self) -> None:
        for name in ("p_crossover", "p_mutation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigInvalid(f"{name} must lie in [0, 1], got {v}")
        for name in ("pop_size", "operator_pop_size", "tournament_k", "max_retries"):
            if getattr(self, name) < 1:
                raise ConfigInvalid(f"{name} must be at least 1")
        if self.max_iters < 0:
            raise ConfigInvalid("max_iters must be non-negative")
        if not self.epsilon > 0:
            raise ConfigInvalid("epsilon must be positive")

    @classmethod
    def ablation(cls, variant: str, **overrides) -> EngineConfig:
        """Presets: ``od`` (one operator, never evolved), ``ev`` (one evolving operator),
        ``npa`` (operator pool without the analysis step), ``full``."""
        presets = {
            "od": dict(operator_pop_size=1, evolve_operators=False),
            "ev": dict(operator_pop_size=1),
            "npa": dict(use_analysis=False),
            "full": {},
        }
        if variant not in presets:
            raise ConfigInvalid(f"unknown ablation variant {variant!r}")
        return cls(**{**presets[variant], **overrides})


@dataclass
class OperatorEvent:
    iteration: int
    replaced_id: int
    new_operator: Operator

    def to_json(self) -> dict:
        return {"iteration": self.iteration, "replaced_id": self.replaced_id, "new_operator": self.new_operator.to_json()}


@dataclass
class RunResult:
    best_chromosome: Chromosome
    best_makespan: int
    convergence: list[int]
    operator_log: list[OperatorEvent]
    rng_seed: int
    wall_time: float
    operators: list[Operator] = field(default_factory=list)
    best_schedule: Schedule | None = None

    def to_json(self, include_time: bool = True) -> dict:
        d = {
            "best_makespan": self.best_makespan,
            "best_chromosome": {
                "osv": list(self.best_chromosome.osv),
                "mav": list(self.best_chromosome.mav),
                "fav": None if self.best_chromosome.fav is None else list(self.best_chromosome.fav),
            },
            "convergence": self.convergence,
            "operator_log": [e.to_json() for e in self.operator_log],
            "operators": [o.to_json() for o in self.operators],
            "rng_seed": self.rng_seed,
        }
        if include_time:
            d["wall_time"] = self.wall_time
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(include_time=False), sort_keys=True)


def rpd(value: float, lb: float) -> float:
    """Relative percentage deviation of ``value`` from the lower bound ``lb``."""
    if not lb > 0:
        raise NonPositiveLB(f"lower bound must be positive, got {lb}")
    return (value - lb) / lb * 100.0


class _Population:
    def __init__(self, inst: Instance, chroms: list[Chromosome], scheds: list[Schedule]):
        self.inst = inst
        self.chroms = chroms
        self.scheds = scheds
        self.makespans = [s.makespan for s in scheds]
        self.fitness = [1.0 / c for c in self.makespans]
        self._features: dict[int, FeatureTable] = {}

    def features(self, k: int) -> FeatureTable:
        ft = self._features.get(k)
        if ft is None:
            ft = self._features[k] = compute_features(self.scheds[k], self.inst)
        return ft

    def best_index(self) -> int:
        return min(range(len(self.makespans)), key=lambda k: (self.makespans[k], k))


def _variation(
    inst: Instance,
    pop: _Population,
    a: int,
    b: int,
    op: Operator,
    cfg: EngineConfig,
    rng: random.Random,
) -> tuple[list[Chromosome], bool]:
    """One pairing event: crossover and mutation gates under a single operator draw."""
    p1, p2 = pop.chroms[a], pop.chroms[b]
    c1, c2 = p1, p2
    crossed = rng.random() < cfg.p_crossover
    if crossed:
        ft = pop.features(a)
        jobs = select_genes(op, ft, Level.JOB, rng)
        ops = select_genes(op, ft, Level.OP, rng)
        c1, c2 = gen.pox_crossover(c1, c2, jobs)
        c1, c2 = gen.mav_crossover(c1, c2, ops)
        if inst.distributed:
            c1, c2 = gen.factory_crossover(c1, c2, ops, inst)
    mutated = rng.random() < cfg.p_mutation
    if mutated:
        out = []
        for child, parent in ((c1, a), (c2, b)):
            ops = select_genes(op, pop.features(parent), Level.OP, rng)
            child = gen.pps_mutation(child, ops, inst, rng)
            if inst.distributed:
                child = gen.factory_mutation(child, ops, inst, rng)
            else:
                child = gen.mav_mutation(child, ops, inst, rng)
            out.append(child)
        c1, c2 = out
    return [c1, c2], crossed


def run(
    inst: Instance,
    cfg: EngineConfig,
    endpoint: GeneratorEndpoint,
    progress: Callable[[int, int], None] | None = None,
) -> RunResult:
    """Solve ``inst``. Deterministic for a fixed config, seed and deterministic endpoint."""
    cfg.check()
    problems = validate(inst)
    if problems:
        raise ConfigInvalid(f"invalid instance: {problems}")
    t0 = time.perf_counter()
    rng = random.Random(cfg.seed)

    init_prompt = build_initial_prompt(inst)
    operators = [
        generate_operator(init_prompt, endpoint, rng, op_id=k, origin="generated", max_retries=cfg.max_retries)
        for k in range(cfg.operator_pop_size)
    ]
    next_id = len(operators)

    chroms = gen.init_population(inst, cfg.pop_size, cfg.init_mix, rng)
    pop = _Population(inst, chroms, [decode(c, inst) for c in chroms])
    b = pop.best_index()
    best_chrom, best_sched = pop.chroms[b], pop.scheds[b]
    convergence = [best_sched.makespan]
    op_log: list[OperatorEvent] = []
    stagnation = 0
    last_state = (min(pop.fitness), sum(pop.fitness) / len(pop.fitness))
    lb = inst.known_lb if cfg.stop_at_lb else None

    for it in range(1, cfg.max_iters + 1):
        if lb is not None and best_sched.makespan <= lb:
            break
        new_chroms: list[Chromosome] = [best_chrom]
        new_scheds: list[Schedule] = [best_sched]
        while len(new_chroms) < cfg.pop_size:
            a = gen.tournament_index(pop.fitness, cfg.tournament_k, rng)
            bb = gen.tournament_index(pop.fitness, cfg.tournament_k, rng)
            op = operators[roulette_index([operator_fitness(o) for o in operators], rng)]
            op.n_v += 1
            children, crossed = _variation(inst, pop, a, bb, op, cfg, rng)
            if crossed:
                baselines = [min(pop.makespans[a], pop.makespans[bb])] * 2
            else:
                baselines = [pop.makespans[a], pop.makespans[bb]]
            improved = False
            for child, baseline in zip(children, baselines):
                if len(new_chroms) >= cfg.pop_size:
                    break
                sched = decode(child, inst)
                if sched.makespan < baseline:
                    improved = True
                if cfg.local_search:
                    if inst.distributed:
                        child, sched = gen.modified_critical_swap_search(child, inst, sched, rng)
                    else:
                        child, sched = gen.critical_swap_search(child, inst, sched, rng)
                new_chroms.append(child)
                new_scheds.append(sched)
            if improved:
                op.n_s += 1

        pop = _Population(inst, new_chroms, new_scheds)
        b = pop.best_index()
        if pop.makespans[b] < best_sched.makespan:
            best_chrom, best_sched = pop.chroms[b], pop.scheds[b]
            stagnation = 0
        else:
            stagnation += 1
        convergence.append(best_sched.makespan)

        if cfg.evolve_operators and trigger_check(stagnation, cfg.epsilon, rng):
            report = build_report(pop.fitness, last_state, operators)
            new_op = evolve_operator(
                operators,
                report,
                endpoint,
                cfg.max_retries,
                init_prompt=init_prompt,
                rng=rng,
                iteration=it,
                op_id=next_id,
                analyze=cfg.use_analysis,
            )
            next_id += 1
            worst = min(operators, key=lambda o: (operator_fitness(o), o.id))
            operators = replace_worst(operators, new_op)
            op_log.append(OperatorEvent(it, worst.id, new_op))
            last_state = (report.min_fitness, report.avg_fitness)
            log.debug("iteration %d: operator %d replaced by %d", it, worst.id, new_op.id)
        if progress is not None:
            progress(it, best_sched.makespan)

    return RunResult(
        best_chromosome=best_chrom,
        best_makespan=best_sched.makespan,
        convergence=convergence,
        operator_log=op_log,
        rng_seed=cfg.seed,
        wall_time=time.perf_counter() - t0,
        operators=operators,
        best_schedule=best_sched,
    )
