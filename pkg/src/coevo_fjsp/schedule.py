"""Chromosome decoding, feasibility checks and critical paths."""

from __future__ import annotations

from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

from .instance import Instance


class InfeasibleChromosome(ValueError):
    pass


@dataclass(frozen=True)
class Chromosome:
    """OSV / MAV / optional FAV.

    ``osv`` lists job ids; the k-th occurrence of job ``i`` stands for
    operation ``O_{i,k}``. ``mav`` is indexed in canonical (job-major)
    operation order, ``fav`` by job.
    """

    osv: tuple[int, ...]
    mav: tuple[int, ...]
    fav: tuple[int, ...] | None = None

    @classmethod
    def of(cls, osv: Sequence[int], mav: Sequence[int], fav: Sequence[int] | None = None) -> Chromosome:
        return cls(tuple(osv), tuple(mav), None if fav is None else tuple(fav))


def chromosome_problems(chrom: Chromosome, inst: Instance) -> list[str]:
    """Human-readable list of broken chromosome invariants (empty when valid)."""
    out = []
    counts = Counter(chrom.osv)
    for i, n in enumerate(inst.ops_per_job):
        if counts.get(i, 0) != n:
            out.append(f"job {i} occurs {counts.get(i, 0)} times in osv, expected {n}")
    extra = set(counts) - set(range(inst.job_count))
    if extra:
        out.append(f"unknown job ids in osv: {sorted(extra)}")
    if len(chrom.mav) != inst.op_count:
        out.append(f"mav has length {len(chrom.mav)}, expected {inst.op_count}")
    else:
        for k, m in enumerate(chrom.mav):
            if m not in inst.times_at(k):
                out.append(f"operation {inst.op_at(k)} assigned to ineligible machine {m}")
    if inst.distributed:
        if chrom.fav is None or len(chrom.fav) != inst.job_count:
            out.append("fav missing or of wrong length")
        elif any(not 0 <= f < inst.factory_count for f in chrom.fav):
            out.append("fav entry out of range")
    elif chrom.fav is not None and any(f != 0 for f in chrom.fav):
        out.append("fav present on a single-factory instance")
    return out


@dataclass(frozen=True)
class Schedule:
    """Decoded timetable; every per-operation field is in canonical order."""

    start: tuple[int, ...]
    finish: tuple[int, ...]
    machine: tuple[int, ...]
    factory: tuple[int, ...]
    makespan: int
    pred: tuple[int, ...] | None = field(default=None, repr=False, compare=False)

    @cached_property
    def machine_pred(self) -> tuple[int, ...]:
        """Index of the operation processed just before each one on its machine, -1 if first."""
        if self.pred is not None:
            return self.pred
        pred = [-1] * len(self.start)
        by_res: dict[tuple[int, int], list[int]] = {}
        for k in range(len(self.start)):
            by_res.setdefault((self.factory[k], self.machine[k]), []).append(k)
        for ks in by_res.values():
            ks.sort(key=lambda k: (self.start[k], self.finish[k]))
            for a, b in zip(ks, ks[1:]):
                pred[b] = a
        return tuple(pred)

    def machine_sequences(self) -> dict[tuple[int, int], list[int]]:
        by_res: dict[tuple[int, int], list[int]] = {}
        for k in sorted(range(len(self.start)), key=lambda k: (self.start[k], k)):
            by_res.setdefault((self.factory[k], self.machine[k]), []).append(k)
        return by_res


def decode(chrom: Chromosome, inst: Instance) -> Schedule:
    """Active decoding with gap insertion.

    Operations are taken in OSV order; each one starts at the earliest time
    not before its job predecessor's finish at which its assigned machine
    has an idle interval long enough, otherwise it is appended.
    """
    n = inst.op_count
    times = inst._times
    offsets = inst._offsets
    ops_per_job = inst.ops_per_job
    mav = chrom.mav
    fav = chrom.fav
    n_machines = inst.machine_count
    if len(mav) != n:
        raise InfeasibleChromosome(f"mav has length {len(mav)}, expected {n}")

    start = [0] * n
    finish = [0] * n
    factory = [0] * n
    next_op = [0] * inst.job_count
    job_ready = [0] * inst.job_count
    res_starts: dict[int, list[int]] = {}
    res_ends: dict[int, list[int]] = {}
    res_ops: dict[int, list[int]] = {}

    for i in chrom.osv:
        j = next_op[i]
        if j >= ops_per_job[i]:
            raise InfeasibleChromosome(f"job {i} occurs too often in osv")
        next_op[i] = j + 1
        k = offsets[i] + j
        m = mav[k]
        try:
            p = times[k][m]
        except KeyError:
            raise InfeasibleChromosome(f"operation {(i, j)} cannot run on machine {m}") from None
        f = fav[i] if fav is not None else 0
        r = f * n_machines + m
        starts = res_starts.get(r)
        if starts is None:
            starts = res_starts[r] = []
            ends = res_ends[r] = []
            seq = res_ops[r] = []
        else:
            ends = res_ends[r]
            seq = res_ops[r]
        ready = job_ready[i]
        pos = bisect_right(ends, ready)
        s = ready
        count = len(starts)
        while pos < count:
            if s + p <= starts[pos]:
                break
            s = ends[pos]
            pos += 1
        starts.insert(pos, s)
        ends.insert(pos, s + p)
        seq.insert(pos, k)
        start[k] = s
        finish[k] = job_ready[i] = s + p
        factory[k] = f

    if next_op != list(ops_per_job):
        raise InfeasibleChromosome("osv does not contain every operation")
    pred = [-1] * n
    for seq in res_ops.values():
        for a, b in zip(seq, seq[1:]):
            pred[b] = a
    return Schedule(
        tuple(start), tuple(finish), tuple(mav), tuple(factory), max(finish) if finish else 0, tuple(pred)
    )


def critical_path_flat(sched: Schedule, inst: Instance) -> list[int]:
    """Critical path as canonical operation indices, earliest first."""
    if not sched.finish:
        return []
    start, finish = sched.start, sched.finish
    pred = sched.machine_pred
    k = finish.index(sched.makespan)
    path = [k]
    while start[k] > 0:
        s = start[k]
        mp = pred[k]
        if mp >= 0 and finish[mp] == s:
            k = mp
        elif inst.op_at(k)[1] > 0 and finish[k - 1] == s:
            k = k - 1
        else:
            break  # idle gap: not a decoder-produced schedule
        path.append(k)
    path.reverse()
    return path


def critical_path(sched: Schedule, inst: Instance) -> list[tuple[int, int]]:
    return [inst.op_at(k) for k in critical_path_flat(sched, inst)]


def check_feasible(sched: Schedule, inst: Instance) -> bool:
    n = inst.op_count
    fields = (sched.start, sched.finish, sched.machine, sched.factory)
    if any(len(f) != n for f in fields):
        return False
    job_factory: dict[int, int] = {}
    for k in range(n):
        i, j = inst.op_at(k)
        m = sched.machine[k]
        times = inst.times_at(k)
        if m not in times or sched.start[k] < 0:
            return False
        if sched.finish[k] != sched.start[k] + times[m]:
            return False
        if j > 0 and sched.start[k] < sched.finish[k - 1]:
            return False
        f = sched.factory[k]
        if not 0 <= f < inst.factory_count or job_factory.setdefault(i, f) != f:
            return False
    by_res: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for k in range(n):
        by_res.setdefault((sched.factory[k], sched.machine[k]), []).append((sched.start[k], sched.finish[k]))
    for intervals in by_res.values():
        intervals.sort()
        for (_, f1), (s2, _) in zip(intervals, intervals[1:]):
            if s2 < f1:
                return False
    return sched.makespan == (max(sched.finish) if n else 0)


def schedule_to_json(sched: Schedule, inst: Instance) -> dict:
    ops = []
    for k, (i, j) in enumerate(inst.all_ops()):
        ops.append(
            {
                "job": i,
                "op": j,
                "machine": sched.machine[k],
                "factory": sched.factory[k],
                "start": sched.start[k],
                "finish": sched.finish[k],
            }
        )
    return {"makespan": sched.makespan, "ops": ops}
