"""Problem instances: the `.fjs` text format, validation and the lower-bound registry.

Machine ids are 0-indexed everywhere inside the package and 1-indexed in
files; the conversion happens only in :func:`parse_fjs` and
:func:`serialize_fjs`.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence


class InstanceFormatError(ValueError):
    """Raised when `.fjs` text cannot be parsed. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class MalformedHeaderError(InstanceFormatError):
    pass


class TruncatedJobLineError(InstanceFormatError):
    pass


class MachineIdOutOfRangeError(InstanceFormatError):
    pass


class NonPositiveTimeError(InstanceFormatError):
    pass


# -- validation results -------------------------------------------------------


@dataclass(frozen=True)
class EmptyMachineSet:
    job: int
    op: int


@dataclass(frozen=True)
class NonPositiveTime:
    job: int
    op: int
    machine: int


@dataclass(frozen=True)
class MachineIdOutOfRange:
    job: int
    op: int
    machine: int


@dataclass(frozen=True)
class NonPositiveLowerBound:
    value: float


@dataclass(frozen=True)
class BadFactoryCount:
    value: int


Violation = EmptyMachineSet | NonPositiveTime | MachineIdOutOfRange | NonPositiveLowerBound | BadFactoryCount


# -- instance -----------------------------------------------------------------


@dataclass(frozen=True, eq=True)
class Instance:
    """A static FJSP/DFJSP problem.

    ``operations[i][j]`` maps each eligible machine of operation ``O_ij`` to
    its processing time. Construction does not validate; use
    :func:`validate` or build instances through :func:`parse_fjs`.
    """

    operations: tuple[tuple[Mapping[int, int], ...], ...]
    machine_count: int
    factory_count: int = 1
    known_lb: int | None = None
    name: str = ""
    _offsets: tuple[int, ...] = field(init=False, repr=False, compare=False)
    _flat: tuple[tuple[int, int], ...] = field(init=False, repr=False, compare=False)
    _times: tuple[dict[int, int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        ops = tuple(tuple(MappingProxyType(dict(o)) for o in job) for job in self.operations)
        object.__setattr__(self, "operations", ops)
        offsets = []
        flat = []
        for i, job in enumerate(ops):
            offsets.append(len(flat))
            flat.extend((i, j) for j in range(len(job)))
        object.__setattr__(self, "_offsets", tuple(offsets))
        object.__setattr__(self, "_flat", tuple(flat))
        # plain dicts in canonical order; the decoder's hot path reads these
        object.__setattr__(self, "_times", tuple(dict(o) for job in ops for o in job))

    @property
    def job_count(self) -> int:
        return len(self.operations)

    @property
    def ops_per_job(self) -> tuple[int, ...]:
        return tuple(len(job) for job in self.operations)

    @property
    def op_count(self) -> int:
        return len(self._flat)

    @property
    def distributed(self) -> bool:
        return self.factory_count > 1

    def eligible(self, i: int, j: int) -> tuple[int, ...]:
        return tuple(sorted(self.operations[i][j]))

    def proc_time(self, i: int, j: int, m: int) -> int:
        return self.operations[i][j][m]

    def flat_index(self, i: int, j: int) -> int:
        """Position of ``O_ij`` in canonical (job-major) order."""
        return self._offsets[i] + j

    def op_at(self, k: int) -> tuple[int, int]:
        return self._flat[k]

    def job_offset(self, i: int) -> int:
        return self._offsets[i]

    def all_ops(self) -> tuple[tuple[int, int], ...]:
        return self._flat

    def times_at(self, k: int) -> dict[int, int]:
        return self._times[k]

    def min_time(self, i: int, j: int) -> int:
        return min(self.operations[i][j].values())

    def with_factories(self, factory_count: int) -> Instance:
        return dataclasses.replace(self, factory_count=factory_count)

    def with_lb(self, known_lb: int | None) -> Instance:
        return dataclasses.replace(self, known_lb=known_lb)


def make_instance(
    jobs: Sequence[Sequence[Mapping[int, int]]],
    machine_count: int | None = None,
    **kwargs,
) -> Instance:
    """Convenience constructor; infers ``machine_count`` from the data when omitted."""
    if machine_count is None:
        machine_count = 1 + max((m for job in jobs for op in job for m in op), default=0)
    return Instance(tuple(tuple(dict(op) for op in job) for job in jobs), machine_count, **kwargs)


def validate(inst: Instance) -> list[Violation]:
    out: list[Violation] = []
    for i, job in enumerate(inst.operations):
        for j, op in enumerate(job):
            if not op:
                out.append(EmptyMachineSet(i, j))
            for m in sorted(op):
                if not 0 <= m < inst.machine_count:
                    out.append(MachineIdOutOfRange(i, j, m))
                if not op[m] > 0:
                    out.append(NonPositiveTime(i, j, m))
    if inst.known_lb is not None and not inst.known_lb > 0:
        out.append(NonPositiveLowerBound(inst.known_lb))
    if inst.factory_count < 1:
        out.append(BadFactoryCount(inst.factory_count))
    return out


# -- text format --------------------------------------------------------------


def _int_token(tok: str, line: int, what: str, exc=TruncatedJobLineError) -> int:
    try:
        return int(tok)
    except ValueError:
        raise exc(f"expected integer {what}, got {tok!r}", line) from None


def parse_fjs(text: str, name: str = "") -> Instance:
    """Parse Brandimarte-style `.fjs` text into a validated :class:`Instance`."""
    lines = [(n, ln.split()) for n, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    if not lines:
        raise MalformedHeaderError("empty input", 1)
    hline, header = lines[0]
    if len(header) < 2 or len(header) > 3:
        raise MalformedHeaderError("header must be 'jobs machines [avg]'", hline)
    n_jobs = _int_token(header[0], hline, "job count", MalformedHeaderError)
    n_machines = _int_token(header[1], hline, "machine count", MalformedHeaderError)
    if len(header) == 3:
        try:
            float(header[2])
        except ValueError:
            raise MalformedHeaderError(f"bad average token {header[2]!r}", hline) from None
    if n_jobs < 1 or n_machines < 1:
        raise MalformedHeaderError("job and machine counts must be positive", hline)

    body = lines[1:]
    if len(body) < n_jobs:
        last = body[-1][0] + 1 if body else hline + 1
        raise TruncatedJobLineError(f"expected {n_jobs} job lines, found {len(body)}", last)
    if len(body) > n_jobs:
        raise InstanceFormatError("unexpected content after the last job line", body[n_jobs][0])

    jobs = []
    for lineno, toks in body:
        pos = 0

        def take(what: str) -> int:
            nonlocal pos
            if pos >= len(toks):
                raise TruncatedJobLineError(f"line ended while reading {what}", lineno)
            v = _int_token(toks[pos], lineno, what)
            pos += 1
            return v

        n_ops = take("operation count")
        if n_ops < 1:
            raise InstanceFormatError("a job needs at least one operation", lineno)
        job = []
        for j in range(n_ops):
            k = take(f"machine count of operation {j + 1}")
            if k < 1:
                raise InstanceFormatError(f"operation {j + 1} has no eligible machine", lineno)
            op: dict[int, int] = {}
            for _ in range(k):
                m = take("machine id")
                t = take("processing time")
                if not 1 <= m <= n_machines:
                    raise MachineIdOutOfRangeError(f"machine {m} not in 1..{n_machines}", lineno)
                if t <= 0:
                    raise NonPositiveTimeError(f"processing time {t} on machine {m}", lineno)
                if m - 1 in op:
                    raise InstanceFormatError(f"machine {m} listed twice for one operation", lineno)
                op[m - 1] = t
            job.append(op)
        if pos != len(toks):
            raise InstanceFormatError("trailing tokens on job line", lineno)
        jobs.append(tuple(job))

    inst = Instance(tuple(jobs), n_machines, name=name)
    problems = validate(inst)
    if problems:  # unreachable for parsed text, kept as a guard
        raise InstanceFormatError(f"invalid instance: {problems}")
    return inst


def serialize_fjs(inst: Instance) -> str:
    ops = inst.op_count
    avg = sum(len(op) for job in inst.operations for op in job) / ops if ops else 0
    out = [f"{inst.job_count} {inst.machine_count} {avg:g}"]
    for job in inst.operations:
        toks = [str(len(job))]
        for op in job:
            toks.append(str(len(op)))
            for m in sorted(op):
                toks += [str(m + 1), str(op[m])]
        out.append(" ".join(toks))
    return "\n".join(out) + "\n"


def load_instance(path: str | Path, factory_count: int = 1, lb_registry: Mapping[str, int] | None = None) -> Instance:
    p = Path(path)
    name = p.stem
    inst = parse_fjs(p.read_text(encoding="utf-8"), name=name)
    lb = None
    if lb_registry is not None:
        lb = lb_registry.get(name, lb_registry.get(name.lower(), lb_registry.get(name.upper())))
    return dataclasses.replace(inst, factory_count=factory_count, known_lb=lb)


def parse_lb_registry(text: str) -> dict[str, int]:
    """Parse ``name<TAB>lb`` lines. Blank lines and ``#`` comments are skipped."""
    reg: dict[str, int] = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise InstanceFormatError("registry lines are 'name<TAB>lb'", n)
        lb = _int_token(parts[1].strip(), n, "lower bound", InstanceFormatError)
        if lb <= 0:
            raise InstanceFormatError(f"lower bound must be positive, got {lb}", n)
        reg[parts[0].strip()] = lb
    return reg


def load_lb_registry(path: str | Path) -> dict[str, int]:
    return parse_lb_registry(Path(path).read_text(encoding="utf-8"))
