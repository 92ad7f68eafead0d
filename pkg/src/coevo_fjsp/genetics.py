"""Population initialization and the neighborhood moves.

All moves are pure: they take an explicit ``random.Random`` and return new
chromosomes. Operation-level gene sets hold canonical operation indices
(see :meth:`Instance.flat_index`).
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass
from typing import Sequence

from .instance import Instance
from .meta_operator import GeneSet, Level
from .schedule import Chromosome, Schedule, critical_path_flat, decode


class EmptyGeneSet(ValueError):
    pass


class NotDistributed(ValueError):
    pass


class WrongGeneLevel(ValueError):
    pass


def _need(delta: GeneSet, kind: Level) -> None:
    if delta.kind is not kind:
        raise WrongGeneLevel(f"expected a {kind.value}-level gene set, got {delta.kind.value}")
    if not delta.members:
        raise EmptyGeneSet("gene set is empty")


# -- initialization --------------------------------------------------------------


@dataclass(frozen=True)
class InitMix:
    """Fractions of the population per machine-assignment and dispatching rule."""

    global_min: float = 0.1
    permuted_min: float = 0.9
    random: float = 0.2
    mwr: float = 0.4
    mor: float = 0.4

    def __post_init__(self) -> None:
        for group in ((self.global_min, self.permuted_min), (self.random, self.mwr, self.mor)):
            if any(f < 0 for f in group) or abs(sum(group) - 1.0) > 1e-9:
                raise ValueError(f"rule fractions must be non-negative and sum to 1: {group}")


def apportion(fractions: Sequence[float], total: int) -> list[int]:
    """Largest-remainder split of ``total`` items by ``fractions``; ties go to the earlier rule."""
    raw = [f * total for f in fractions]
    counts = [int(r) for r in raw]
    rest = total - sum(counts)
    order = sorted(range(len(raw)), key=lambda k: (-(raw[k] - counts[k]), k))
    for k in order[:rest]:
        counts[k] += 1
    return counts


def assign_by_localization(inst: Instance, rng: random.Random | None = None) -> list[int]:
    """Global-minimum machine assignment with machine-load accumulation.

    Repeatedly fixes the (operation, machine) pair with the smallest
    ``time + accumulated machine load``; ties go to the earlier row/column of
    the processing-time table. With ``rng`` the job and machine order of the
    table is shuffled first, which only changes how ties fall.
    """
    n_jobs, n_machines = inst.job_count, inst.machine_count
    job_order = list(range(n_jobs))
    machine_order = list(range(n_machines))
    if rng is not None:
        rng.shuffle(job_order)
        rng.shuffle(machine_order)
    op_rank = {}
    for i in job_order:
        for j in range(inst.ops_per_job[i]):
            op_rank[inst.flat_index(i, j)] = len(op_rank)
    m_rank = {m: r for r, m in enumerate(machine_order)}

    heaps: dict[int, list[tuple[int, int, int]]] = {m: [] for m in range(n_machines)}
    for k in range(inst.op_count):
        for m, t in inst.times_at(k).items():
            heaps[m].append((t, op_rank[k], k))
    for h in heaps.values():
        heapq.heapify(h)

    load = [0] * n_machines
    mav = [-1] * inst.op_count
    for _ in range(inst.op_count):
        best = None
        for m, h in heaps.items():
            while h and mav[h[0][2]] != -1:
                heapq.heappop(h)
            if h:
                t, rank, k = h[0]
                key = (t + load[m], rank, m_rank[m])
                if best is None or key < best[0]:
                    best = (key, m, k, t)
        _, m, k, t = best
        mav[k] = m
        load[m] += t
    return mav


def dispatch_sequence(inst: Instance, mav: Sequence[int], rule: str, rng: random.Random) -> list[int]:
    """Build an OSV by repeatedly dispatching a job under ``rule`` (random, mwr, mor)."""
    remaining_ops = list(inst.ops_per_job)
    remaining_work = [
        sum(inst.times_at(inst.flat_index(i, j))[mav[inst.flat_index(i, j)]] for j in range(n))
        for i, n in enumerate(inst.ops_per_job)
    ]
    next_op = [0] * inst.job_count
    osv = []
    for _ in range(inst.op_count):
        open_jobs = [i for i in range(inst.job_count) if remaining_ops[i] > 0]
        if rule == "random":
            i = rng.choice(open_jobs)
        else:
            score = remaining_work if rule == "mwr" else remaining_ops
            top = max(score[i] for i in open_jobs)
            i = rng.choice([i for i in open_jobs if score[i] == top])
        k = inst.flat_index(i, next_op[i])
        remaining_work[i] -= inst.times_at(k)[mav[k]]
        remaining_ops[i] -= 1
        next_op[i] += 1
        osv.append(i)
    return osv


def assign_factories(inst: Instance, mav: Sequence[int], rng: random.Random) -> list[int]:
    """Greedy factory assignment: jobs in random order go to the least loaded factory."""
    load = [0] * inst.factory_count
    fav = [0] * inst.job_count
    order = list(range(inst.job_count))
    rng.shuffle(order)
    for i in order:
        work = sum(inst.times_at(k)[mav[k]] for k in range(inst.job_offset(i), inst.job_offset(i) + inst.ops_per_job[i]))
        f = min(range(inst.factory_count), key=lambda f: (load[f], f))
        fav[i] = f
        load[f] += work
    return fav


def init_population(inst: Instance, size: int, mix: InitMix, rng: random.Random) -> list[Chromosome]:
    if size < 1:
        raise ValueError("population size must be at least 1")
    n_global, n_perm = apportion((mix.global_min, mix.permuted_min), size)
    n_rand, n_mwr, n_mor = apportion((mix.random, mix.mwr, mix.mor), size)
    assign_rules = ["global"] * n_global + ["permuted"] * n_perm
    dispatch_rules = ["random"] * n_rand + ["mwr"] * n_mwr + ["mor"] * n_mor
    rng.shuffle(dispatch_rules)
    base = assign_by_localization(inst)
    pop = []
    for a_rule, d_rule in zip(assign_rules, dispatch_rules):
        mav = list(base) if a_rule == "global" else assign_by_localization(inst, rng)
        osv = dispatch_sequence(inst, mav, d_rule, rng)
        fav = assign_factories(inst, mav, rng) if inst.distributed else None
        pop.append(Chromosome.of(osv, mav, fav))
    return pop


def init_rules(size: int, mix: InitMix = InitMix()) -> tuple[list[int], list[int]]:
    """Rule counts ``init_population`` uses: ([global, permuted], [random, mwr, mor])."""
    return (
        apportion((mix.global_min, mix.permuted_min), size),
        apportion((mix.random, mix.mwr, mix.mor), size),
    )


# -- crossover ------------------------------------------------------------------------


def pox_crossover(p1: Chromosome, p2: Chromosome, delta: GeneSet) -> tuple[Chromosome, Chromosome]:
    """Precedence preserving order-based crossover on the OSV; MAV/FAV travel with the OSV donor."""
    _need(delta, Level.JOB)
    keep = delta.members

    def child(a: Sequence[int], b: Sequence[int]) -> tuple[int, ...]:
        fill = iter([g for g in b if g not in keep])
        return tuple(g if g in keep else next(fill) for g in a)

    return (
        Chromosome(child(p1.osv, p2.osv), p1.mav, p1.fav),
        Chromosome(child(p2.osv, p1.osv), p2.mav, p2.fav),
    )


def mav_crossover(p1: Chromosome, p2: Chromosome, delta: GeneSet) -> tuple[Chromosome, Chromosome]:
    _need(delta, Level.OP)
    m1, m2 = list(p1.mav), list(p2.mav)
    for k in delta.members:
        m1[k], m2[k] = m2[k], m1[k]
    return Chromosome(p1.osv, tuple(m1), p1.fav), Chromosome(p2.osv, tuple(m2), p2.fav)


def factory_crossover(
    p1: Chromosome, p2: Chromosome, delta: GeneSet, inst: Instance
) -> tuple[Chromosome, Chromosome]:
    """Swap the factory of every job owning a selected operation."""
    if not inst.distributed or p1.fav is None or p2.fav is None:
        raise NotDistributed("factory crossover needs a multi-factory instance")
    _need(delta, Level.OP)
    f1, f2 = list(p1.fav), list(p2.fav)
    for i in sorted({inst.op_at(k)[0] for k in delta.members}):
        f1[i], f2[i] = f2[i], f1[i]
    return Chromosome(p1.osv, p1.mav, tuple(f1)), Chromosome(p2.osv, p2.mav, tuple(f2))


# -- mutation ----------------------------------------------------------------------------


def pps_mutation(p: Chromosome, delta: GeneSet, inst: Instance, rng: random.Random) -> Chromosome:
    """Move one selected operation to a random slot between its job neighbours in the OSV."""
    _need(delta, Level.OP)
    k = rng.choice(sorted(delta.members))
    i, j = inst.op_at(k)
    osv = list(p.osv)
    seen = -1
    left, here, right = -1, -1, len(osv)
    for pos, g in enumerate(osv):
        if g != i:
            continue
        seen += 1
        if seen == j - 1:
            left = pos
        elif seen == j:
            here = pos
        elif seen == j + 1:
            right = pos
            break
    del osv[here]
    # after removal the slots strictly between the neighbours are left+1 .. right-1
    osv.insert(rng.randint(left + 1, right - 1), i)
    return Chromosome(tuple(osv), p.mav, p.fav)


def mav_mutation(p: Chromosome, delta: GeneSet, inst: Instance, rng: random.Random) -> Chromosome:
    """Reassign each selected operation to a different eligible machine, when one exists."""
    _need(delta, Level.OP)
    mav = list(p.mav)
    for k in sorted(delta.members):
        alternatives = [m for m in sorted(inst.times_at(k)) if m != mav[k]]
        if alternatives:
            mav[k] = rng.choice(alternatives)
    return Chromosome(p.osv, tuple(mav), p.fav)


def factory_mutation(p: Chromosome, delta: GeneSet, inst: Instance, rng: random.Random) -> Chromosome:
    """Reassign selected operations to other machines of the job's current factory."""
    if not inst.distributed or p.fav is None:
        raise NotDistributed("factory mutation needs a multi-factory instance")
    # factories are identical, so the eligible set is the same in every factory
    return mav_mutation(p, delta, inst, rng)


# -- critical-path local search -----------------------------------------------------------------


def _occurrence_positions(osv: Sequence[int], inst: Instance) -> list[int]:
    """OSV position of every operation, indexed canonically."""
    pos = [0] * inst.op_count
    seen = [0] * inst.job_count
    offsets = inst._offsets
    for p, i in enumerate(osv):
        pos[offsets[i] + seen[i]] = p
        seen[i] += 1
    return pos


def _swapped(chrom: Chromosome, inst: Instance, a: int, b: int) -> Chromosome:
    pos = _occurrence_positions(chrom.osv, inst)
    osv = list(chrom.osv)
    pa, pb = pos[a], pos[b]
    osv[pa], osv[pb] = osv[pb], osv[pa]
    return Chromosome(tuple(osv), chrom.mav, chrom.fav)


def critical_swap_search(
    chrom: Chromosome, inst: Instance, sched: Schedule, rng: random.Random
) -> tuple[Chromosome, Schedule]:
    """Swap two random critical operations of different jobs while that strictly improves."""
    while True:
        path = critical_path_flat(sched, inst)
        jobs = [inst.op_at(k)[0] for k in path]
        if len(set(jobs)) < 2:
            return chrom, sched
        while True:
            a, b = rng.sample(range(len(path)), 2)
            if jobs[a] != jobs[b]:
                break
        cand = _swapped(chrom, inst, path[a], path[b])
        cand_sched = decode(cand, inst)
        if cand_sched.makespan >= sched.makespan:
            return chrom, sched
        chrom, sched = cand, cand_sched


def critical_swap(chrom: Chromosome, inst: Instance, sched: Schedule, rng: random.Random) -> Chromosome:
    return critical_swap_search(chrom, inst, sched, rng)[0]


def modified_critical_swap_search(
    chrom: Chromosome, inst: Instance, sched: Schedule, rng: random.Random
) -> tuple[Chromosome, Schedule]:
    """Pick one critical operation and try it against every other one on the path.

    The first strictly improving swap is kept and the search restarts on the
    new critical path; it stops once no partner improves the chosen pivot.
    """
    while True:
        path = critical_path_flat(sched, inst)
        jobs = [inst.op_at(k)[0] for k in path]
        if len(set(jobs)) < 2:
            return chrom, sched
        pivot = rng.randrange(len(path))
        for other in range(len(path)):
            if jobs[other] == jobs[pivot]:
                continue
            cand = _swapped(chrom, inst, path[pivot], path[other])
            cand_sched = decode(cand, inst)
            if cand_sched.makespan < sched.makespan:
                chrom, sched = cand, cand_sched
                break
        else:
            return chrom, sched


def modified_critical_swap(chrom: Chromosome, inst: Instance, sched: Schedule, rng: random.Random) -> Chromosome:
    return modified_critical_swap_search(chrom, inst, sched, rng)[0]


# -- selection ------------------------------------------------------------------------------


def tournament_index(fitness: Sequence[float], k: int, rng: random.Random) -> int:
    """Index of the fittest of ``k`` draws with replacement; the first drawn wins ties."""
    if k < 1:
        raise ValueError("tournament size must be at least 1")
    n = len(fitness)
    best = rng.randrange(n)
    for _ in range(k - 1):
        c = rng.randrange(n)
        if fitness[c] > fitness[best]:
            best = c
    return best


def tournament_select(pop: Sequence[tuple[Chromosome, float]], k: int, rng: random.Random) -> Chromosome:
    return pop[tournament_index([f for _, f in pop], k, rng)][0]
