"""Reference implementations used as independent oracles by the test-suite.

Nothing here imports the package's decoder, parser or normalizer; each
function recomputes its answer from first principles.
"""

from __future__ import annotations

import itertools
import math
import os
import random
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def instance_dir() -> Path:
    return Path(os.environ.get("FJSP_INSTANCE_DIR", REPO / "data" / "instances"))


def find_instance(name: str) -> Path | None:
    d = instance_dir()
    if not d.is_dir():
        return None
    for p in sorted(d.iterdir()):
        if p.is_file() and p.stem.lower() == name.lower():
            return p
    return None


# -- parsing ---------------------------------------------------------------------------


def reference_parse(text: str) -> tuple[int, int, list[list[dict[int, int]]]]:
    """Straightforward token walk over the .fjs layout; machines returned 0-based."""
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    n_jobs, n_machines = int(lines[0][0]), int(lines[0][1])
    jobs = []
    for toks in lines[1 : 1 + n_jobs]:
        vals = [int(t) for t in toks]
        n_ops, pos, ops = vals[0], 1, []
        for _ in range(n_ops):
            k = vals[pos]
            pos += 1
            op = {}
            for _ in range(k):
                op[vals[pos] - 1] = vals[pos + 1]
                pos += 2
            ops.append(op)
        jobs.append(ops)
    return n_jobs, n_machines, jobs


# -- scheduling --------------------------------------------------------------------------


def semi_active_makespan(jobs, seq, assign) -> int:
    """Append-only timetable: each operation starts when both its job and machine are free."""
    job_ready = [0] * len(jobs)
    machine_ready: dict[int, int] = {}
    nxt = [0] * len(jobs)
    for i in seq:
        j = nxt[i]
        nxt[i] += 1
        m = assign[i][j]
        s = max(job_ready[i], machine_ready.get(m, 0))
        job_ready[i] = machine_ready[m] = s + jobs[i][j][m]
    return max(job_ready)


def brute_force_optimum(jobs) -> int:
    """Exact optimum by enumerating every machine assignment and every operation interleaving.

    Some optimal schedule is semi-active, and every semi-active schedule is
    produced by appending operations in start-time order, so the minimum over
    this enumeration is the true optimum.
    """
    choices = [sorted(op) for job in jobs for op in job]
    base = [i for i, job in enumerate(jobs) for _ in job]
    sequences = set(itertools.permutations(base))
    best = math.inf
    for flat in itertools.product(*choices):
        assign, pos = [], 0
        for job in jobs:
            assign.append(flat[pos : pos + len(job)])
            pos += len(job)
        for seq in sequences:
            best = min(best, semi_active_makespan(jobs, seq, assign))
    return int(best)


def random_jobs(rng: random.Random, n_jobs: int, max_ops: int, n_machines: int, max_time: int = 9):
    jobs = []
    for _ in range(n_jobs):
        ops = []
        for _ in range(rng.randint(1, max_ops)):
            k = rng.randint(1, n_machines)
            ms = rng.sample(range(n_machines), k)
            ops.append({m: rng.randint(1, max_time) for m in ms})
        jobs.append(ops)
    return jobs


def random_chromosome_parts(inst, rng: random.Random):
    osv = [i for i in range(inst.job_count) for _ in range(inst.ops_per_job[i])]
    rng.shuffle(osv)
    mav = [rng.choice(sorted(inst.times_at(k))) for k in range(inst.op_count)]
    fav = [rng.randrange(inst.factory_count) for _ in range(inst.job_count)] if inst.distributed else None
    return osv, mav, fav


def schedule_ok(sched, inst) -> list[str]:
    """Independent check of the timetable constraints; returns the broken ones."""
    bad = []
    n = inst.op_count
    for k in range(n):
        i, j = inst.op_at(k)
        t = inst.operations[i][j].get(sched.machine[k])
        if t is None:
            bad.append(f"{k}: ineligible machine")
            continue
        if sched.finish[k] - sched.start[k] != t or sched.start[k] < 0:
            bad.append(f"{k}: wrong duration")
        if j > 0 and sched.start[k] < sched.finish[k - 1]:
            bad.append(f"{k}: precedence")
    for a in range(n):
        for b in range(a + 1, n):
            if (sched.factory[a], sched.machine[a]) != (sched.factory[b], sched.machine[b]):
                continue
            if sched.start[a] < sched.finish[b] and sched.start[b] < sched.finish[a]:
                bad.append(f"{a},{b}: overlap")
    if n and sched.makespan != max(sched.finish):
        bad.append("makespan")
    return bad


# -- statistics ------------------------------------------------------------------------------


def phi(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def cdf_normalize(values) -> list[float]:
    n = len(values)
    mu = sum(values) / n
    sd = math.sqrt(sum((v - mu) ** 2 for v in values) / n)
    if sd == 0:
        return [0.5] * n
    return [phi((v - mu) / sd) for v in values]
