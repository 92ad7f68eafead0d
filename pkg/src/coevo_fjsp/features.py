"""Genetic features of a decoded schedule and the normal-CDF priority transform."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .instance import Instance
from .schedule import Schedule

JOB_TERMINALS = ("process_span", "min_process_span", "op_number")
OP_TERMINALS = ("start_time", "earliest_start", "proc_time", "machine_number")

FEATURE_GLOSSARY = {
    "process_span": "time between the start of a job's first operation and the finish of its last operation",
    "min_process_span": "sum over a job's operations of the shortest eligible processing time",
    "op_number": "number of operations of the job",
    "start_time": "start time of the operation in the current schedule",
    "earliest_start": "finish time of the job's preceding operation (0 for a first operation)",
    "proc_time": "processing time of the operation on its assigned machine",
    "machine_number": "number of machines eligible for the operation",
}


@dataclass(frozen=True)
class FeatureTable:
    """Per-job columns are indexed by job id, per-operation columns in canonical order."""

    process_span: tuple[int, ...]
    min_process_span: tuple[int, ...]
    op_number: tuple[int, ...]
    start_time: tuple[int, ...]
    earliest_start: tuple[int, ...]
    proc_time: tuple[int, ...]
    machine_number: tuple[int, ...]

    def job_columns(self) -> dict[str, tuple[int, ...]]:
        return {name: getattr(self, name) for name in JOB_TERMINALS}

    def op_columns(self) -> dict[str, tuple[int, ...]]:
        return {name: getattr(self, name) for name in OP_TERMINALS}

    def job_bindings(self, i: int) -> dict[str, int]:
        return {name: getattr(self, name)[i] for name in JOB_TERMINALS}

    def op_bindings(self, k: int) -> dict[str, int]:
        return {name: getattr(self, name)[k] for name in OP_TERMINALS}


def compute_features(sched: Schedule, inst: Instance) -> FeatureTable:
    span, min_span, n_ops = [], [], []
    for i, job in enumerate(inst.operations):
        first = inst.job_offset(i)
        last = first + len(job) - 1
        span.append(sched.finish[last] - sched.start[first])
        min_span.append(sum(min(op.values()) for op in job))
        n_ops.append(len(job))
    earliest = []
    proc = []
    n_machines = []
    for k, (i, j) in enumerate(inst.all_ops()):
        earliest.append(sched.finish[k - 1] if j > 0 else 0)
        proc.append(sched.finish[k] - sched.start[k])
        n_machines.append(len(inst.times_at(k)))
    return FeatureTable(
        tuple(span),
        tuple(min_span),
        tuple(n_ops),
        tuple(sched.start),
        tuple(earliest),
        tuple(proc),
        tuple(n_machines),
    )


def std_normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def normalize_cdf(values: Sequence[float]) -> list[float]:
    """Map values to ``Phi((v - mean) / std)`` with the population std; all 0.5 when std is 0."""
    v = np.asarray(values, dtype=float)
    n = len(v)
    if v.max() == v.min():
        return [0.5] * n
    mu = math.fsum(v.tolist()) / n
    z = v - mu
    sigma = math.sqrt(math.fsum((z * z).tolist()) / n)
    if sigma == 0.0 or not math.isfinite(sigma):
        return [0.5] * n
    return ndtr(z / sigma).tolist()
