"""Gene-selection operators and their bookkeeping.

An operator carries one priority expression per level. Priorities are
pushed through :func:`normalize_cdf` and each gene is kept when its
normalized priority beats an independent uniform draw.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import random
from dataclasses import dataclass
from typing import Sequence

from .expr import Expr, eval_vector, parse_expr, to_sexpr
from .features import JOB_TERMINALS, OP_TERMINALS, FeatureTable, normalize_cdf


class Level(enum.Enum):
    JOB = "job"
    OP = "op"


@dataclass(frozen=True)
class GeneSet:
    """Genes picked for perturbation: job ids (JOB) or canonical operation indices (OP)."""

    kind: Level
    members: frozenset[int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", frozenset(self.members))

    @classmethod
    def jobs(cls, members) -> GeneSet:
        return cls(Level.JOB, frozenset(members))

    @classmethod
    def ops(cls, members) -> GeneSet:
        return cls(Level.OP, frozenset(members))

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(sorted(self.members))


@dataclass
class Operator:
    id: int
    thought: str
    job_expr: Expr
    op_expr: Expr
    n_s: int = 0
    n_v: int = 0
    origin: str = "seeded"
    attempts: int = 1

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "thought": self.thought,
            "job_expr": to_sexpr(self.job_expr),
            "op_expr": to_sexpr(self.op_expr),
            "origin": self.origin,
        }

    @classmethod
    def from_json(cls, d: dict) -> Operator:
        return cls(
            id=int(d["id"]),
            thought=d["thought"],
            job_expr=parse_expr(d["job_expr"], JOB_TERMINALS),
            op_expr=parse_expr(d["op_expr"], OP_TERMINALS),
            origin=d.get("origin", "seeded"),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def priorities(op: Operator, ft: FeatureTable, level: Level) -> list[float]:
    if level is Level.JOB:
        cols = ft.job_columns()
        return eval_vector(op.job_expr, cols, len(ft.op_number)).tolist()
    cols = ft.op_columns()
    return eval_vector(op.op_expr, cols, len(ft.proc_time)).tolist()


def select_from_probabilities(gamma: Sequence[float], rng: random.Random) -> frozenset[int]:
    """Keep gene g iff gamma[g] > u_g; fall back to the arg-max gene when nothing is kept."""
    chosen = frozenset(g for g, p in enumerate(gamma) if p > rng.random())
    if chosen:
        return chosen
    return frozenset((max(range(len(gamma)), key=gamma.__getitem__),))


def select_genes(op: Operator, ft: FeatureTable, level: Level, rng: random.Random) -> GeneSet:
    gamma = normalize_cdf(priorities(op, ft, level))
    return GeneSet(level, select_from_probabilities(gamma, rng))


def operator_fitness(op: Operator) -> float:
    """Success ratio n_s / n_v; an operator that was never drawn scores 1.0."""
    if op.n_v == 0:
        return 1.0
    return op.n_s / op.n_v


def roulette_select(ops: Sequence[Operator], rng: random.Random) -> Operator:
    return ops[roulette_index([operator_fitness(o) for o in ops], rng)]


def roulette_index(weights: Sequence[float], rng: random.Random) -> int:
    total = sum(weights)
    if total <= 0:
        return rng.randrange(len(weights))
    r = rng.random() * total
    acc = 0.0
    for k, w in enumerate(weights):
        acc += w
        if r < acc:
            return k
    # r landed on the rounding sliver above the last partial sum
    return max(k for k, w in enumerate(weights) if w > 0)


def trigger_threshold(dt: int, epsilon: float) -> float:
    if dt <= 0:
        return float("inf")
    return 1.0 / (epsilon * dt)


def trigger_probability(dt: int, epsilon: float) -> float:
    return max(0.0, 1.0 - trigger_threshold(dt, epsilon))


def trigger_check(dt: int, epsilon: float, rng: random.Random) -> bool:
    """Stagnation trigger: fires when a uniform draw exceeds 1 / (epsilon * dt).

    One uniform is consumed per call whatever ``dt`` is, so the random
    stream does not depend on the stagnation counter.
    """
    u = rng.random()
    return u > trigger_threshold(dt, epsilon)


def worst_index(ops: Sequence[Operator]) -> int:
    return min(range(len(ops)), key=lambda k: (operator_fitness(ops[k]), ops[k].id))


def replace_worst(ops: Sequence[Operator], new: Operator) -> list[Operator]:
    """Swap the least fit operator (lowest id on ties) for ``new``; every counter restarts at zero."""
    w = worst_index(ops)
    out = list(ops)
    out[w] = new
    return [dataclasses.replace(o, n_s=0, n_v=0) for o in out]
