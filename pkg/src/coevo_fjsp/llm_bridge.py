"""Prompt assembly, candidate parsing and heuristic generator endpoints.

A generator answers a prompt with free text. Accepted text has the shape::

    {one-sentence summary of the idea}
    JOB: <priority expression over job features>
    OP: <priority expression over operation features>

Candidates are checked by parsing, bounds checks and a probe evaluation
before they are turned into :class:`Operator` objects.
"""

from __future__ import annotations

import json
import logging
import math
import os
import random
import re
import urllib.error
import urllib.request
from dataclasses import asdict, dataclass, field
from typing import Protocol, Sequence

from .expr import MAX_DEPTH, MAX_NODES, BoundsExceeded, Expr, GrammarError, eval_vector, parse_expr, random_expr, to_sexpr
from .features import FEATURE_GLOSSARY, JOB_TERMINALS, OP_TERMINALS, FeatureTable
from .instance import Instance
from .meta_operator import Operator, operator_fitness

log = logging.getLogger(__name__)

DISTINCTNESS = "develop a completely new algorithm distinct from the previous ones"


class CandidateError(ValueError):
    pass


class MissingThought(CandidateError):
    pass


class CandidateGrammarError(CandidateError):
    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} (position {position})")


class CandidateBoundsExceeded(CandidateError):
    pass


class NonFiniteProbe(CandidateError):
    pass


class GenerationFailure(RuntimeError):
    """A single generation attempt failed in transport; the retry loop counts it as an attempt."""


class GenerationExhausted(RuntimeError):
    def __init__(self, attempts: int):
        self.attempts = attempts
        super().__init__(f"no valid operator after {attempts} attempts")


# -- prompts ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OperatorSummary:
    thought: str
    fitness: float


@dataclass(frozen=True)
class EvolutionReport:
    """State of both populations handed to the generator before an operator is replaced."""

    min_fitness: float
    avg_fitness: float
    min_rate: float
    avg_rate: float
    operators: tuple[OperatorSummary, ...]
    analysis: str | None = None

    def population_text(self) -> str:
        return (
            "Solution population (fitness = 1 / makespan):\n"
            f"- minimum fitness: {self.min_fitness!r} (change since last operator update: {self.min_rate!r})\n"
            f"- average fitness: {self.avg_fitness!r} (change since last operator update: {self.avg_rate!r})"
        )

    def operators_text(self) -> str:
        lines = ["Current operators (success rate in brackets):"]
        lines += [f"- [{o.fitness!r}] {o.thought}" for o in self.operators]
        return "\n".join(lines)

    def to_text(self) -> str:
        return self.population_text() + "\n\n" + self.operators_text()

    def with_analysis(self, analysis: str | None) -> EvolutionReport:
        return EvolutionReport(
            self.min_fitness, self.avg_fitness, self.min_rate, self.avg_rate, self.operators, analysis
        )


def rate_of_change(current: float, previous: float) -> float:
    if previous <= 0:
        return 0.0
    return (current - previous) / previous


def build_report(
    fitnesses: Sequence[float],
    previous: tuple[float, float] | None,
    ops: Sequence[Operator],
) -> EvolutionReport:
    """Summarize a solution population and the operator pool. ``previous`` is (min, avg) at the last update."""
    mn = min(fitnesses)
    avg = math.fsum(fitnesses) / len(fitnesses)
    if previous is None:
        previous = (mn, avg)
    return EvolutionReport(
        mn,
        avg,
        rate_of_change(mn, previous[0]),
        rate_of_change(avg, previous[1]),
        tuple(OperatorSummary(o.thought, operator_fitness(o)) for o in ops),
    )


TASK_DESCRIPTION = (
    "We solve the flexible job shop scheduling problem with the objective of minimizing the makespan. "
    "A genetic algorithm perturbs solutions with neighborhood moves; your heuristic decides which genes "
    "the moves touch. Produce priority values for jobs whose operation order should change and for "
    "operations whose machine should be reassigned. Higher priority means more likely to be perturbed."
)

PRIOR_KNOWLEDGE_HEAD = (
    "Classical dispatching heuristics are good starting points, for example the Shortest Processing "
    "Time (SPT) rule, Most Work Remaining (MWR) and Most Operations Remaining (MOR). "
    "Available features:"
)

EXPECTED_OUTPUT = (
    "First write the idea of your heuristic as one sentence inside curly braces {like this}. "
    "Then give exactly two lines: 'JOB: <expression>' computing a priority for every job, and "
    "'OP: <expression>' computing a priority for every operation. Both priority lists are required. "
    "Do not write any other code."
)


def _template_text() -> str:
    return "\n".join(
        [
            "Expressions are S-expressions: a number, a feature name, or (operator arg ...).",
            "Operators: (add a b ...), (sub a b), (mul a b ...), (div a b) with division by zero returning a,",
            "(min a b ...), (max a b ...), (neg a), (sqrt a) = sqrt(|a|), (log a) = ln(1 + |a|).",
            f"Depth at most {MAX_DEPTH}, at most {MAX_NODES} nodes.",
            "JOB terminals: " + ", ".join(JOB_TERMINALS),
            "OP terminals: " + ", ".join(OP_TERMINALS),
            "Output: a list of job priorities (JOB expression evaluated per job) and a list of operation "
            "priorities (OP expression evaluated per operation).",
        ]
    )


@dataclass(frozen=True)
class PromptBundle:
    task_description: str
    prior_knowledge: str
    expected_output: str
    template: str
    context: EvolutionReport | None = None
    instructions: tuple[str, ...] = field(default=())

    def render(self) -> str:
        parts = [
            "# Task\n" + self.task_description,
            "# Prior knowledge\n" + self.prior_knowledge,
            "# Expression template\n" + self.template,
        ]
        if self.context is not None:
            parts.append("# Population state\n" + self.context.population_text())
            parts.append("# Operator performance\n" + self.context.operators_text())
            if self.context.analysis:
                parts.append("# Analysis and suggestions\n" + self.context.analysis)
        if self.instructions:
            parts.append("# Instructions\n" + "\n".join(self.instructions))
        parts.append("# Expected output\n" + self.expected_output)
        return "\n\n".join(parts) + "\n"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> PromptBundle:
        d = json.loads(text)
        ctx = d.pop("context")
        if ctx is not None:
            ctx["operators"] = tuple(OperatorSummary(**o) for o in ctx["operators"])
            ctx = EvolutionReport(**ctx)
        d["instructions"] = tuple(d["instructions"])
        return cls(context=ctx, **d)


def build_initial_prompt(inst: Instance | None = None) -> PromptBundle:
    glossary = "\n".join(f"- {name}: {FEATURE_GLOSSARY[name]}" for name in JOB_TERMINALS + OP_TERMINALS)
    task = TASK_DESCRIPTION
    if inst is not None:
        task += (
            f" The instance has {inst.job_count} jobs, {inst.op_count} operations, "
            f"{inst.machine_count} machines and {inst.factory_count} factories."
        )
    return PromptBundle(
        task_description=task,
        prior_knowledge=PRIOR_KNOWLEDGE_HEAD + "\n" + glossary,
        expected_output=EXPECTED_OUTPUT,
        template=_template_text(),
    )


def build_improve_prompt(init: PromptBundle, report: EvolutionReport) -> PromptBundle:
    return PromptBundle(
        task_description=init.task_description,
        prior_knowledge=init.prior_knowledge,
        expected_output=init.expected_output,
        template=init.template,
        context=report,
        instructions=(
            f"Using the information above, {DISTINCTNESS}.",
            "You may rephrase the task description before answering to explore a different idea.",
        ),
    )


# -- candidates -------------------------------------------------------------------------------

_THOUGHT = re.compile(r"\{([^{}]*)\}")
_BLOCK = re.compile(r"\b(JOB|OP)\s*:", re.IGNORECASE)


def _expression_span(text: str, start: int) -> tuple[str, int]:
    """The S-expression (or atom) starting at ``start``; returns (source, offset)."""
    i = start
    while i < len(text) and text[i].isspace():
        i += 1
    if i >= len(text):
        raise CandidateGrammarError("missing expression", i)
    if text[i] != "(":
        m = re.compile(r"[^\s()]+").match(text, i)
        return m.group(0), i
    level = 0
    for j in range(i, len(text)):
        if text[j] == "(":
            level += 1
        elif text[j] == ")":
            level -= 1
            if level == 0:
                return text[i : j + 1], i
    raise CandidateGrammarError("unbalanced parentheses", len(text))


def _probe_table() -> FeatureTable:
    # small synthetic table with zeros, ties and large values
    return FeatureTable(
        process_span=(0, 17, 250, 5),
        min_process_span=(1, 12, 90, 5),
        op_number=(1, 3, 15, 2),
        start_time=(0, 0, 14, 300, 7, 99),
        earliest_start=(0, 0, 10, 280, 7, 50),
        proc_time=(1, 5, 4, 20, 2, 99),
        machine_number=(1, 2, 6, 1, 3, 15),
    )


def parse_candidate(text: str) -> tuple[str, Expr, Expr]:
    m = _THOUGHT.search(text)
    if m is None or not m.group(1).strip():
        raise MissingThought("no {thought} sentence found")
    thought = " ".join(m.group(1).split())
    exprs: dict[str, Expr] = {}
    for b in _BLOCK.finditer(text):
        level = b.group(1).upper()
        if level in exprs:
            continue
        src, at = _expression_span(text, b.end())
        allowed = JOB_TERMINALS if level == "JOB" else OP_TERMINALS
        try:
            exprs[level] = parse_expr(src, allowed)
        except GrammarError as e:
            raise CandidateGrammarError(str(e), at + e.position) from None
        except BoundsExceeded as e:
            raise CandidateBoundsExceeded(str(e)) from None
    for level in ("JOB", "OP"):
        if level not in exprs:
            raise CandidateGrammarError(f"missing '{level}:' expression", len(text))
    ft = _probe_table()
    for level, cols, n in (("JOB", ft.job_columns(), 4), ("OP", ft.op_columns(), 6)):
        values = eval_vector(exprs[level], cols, n)
        if not all(math.isfinite(v) for v in values.tolist()):
            raise NonFiniteProbe(f"{level} expression produced non-finite values on the probe table")
    return thought, exprs["JOB"], exprs["OP"]


def format_candidate(thought: str, job_expr: Expr, op_expr: Expr) -> str:
    return f"{{{thought}}}\nJOB: {to_sexpr(job_expr)}\nOP: {to_sexpr(op_expr)}\n"


# -- endpoints ----------------------------------------------------------------------------------


class GeneratorEndpoint(Protocol):
    name: str

    def generate(self, prompt: PromptBundle, rng: random.Random) -> str: ...

    def analyze(self, report_text: str) -> str: ...


CANNED_ANALYSIS = "Offline generator: no analysis available; keep operators diverse."


class FixedStub:
    """Always answers with the same candidate."""

    def __init__(self, name: str, text: str):
        self.name = name
        self.text = text

    def generate(self, prompt: PromptBundle, rng: random.Random) -> str:
        return self.text

    def analyze(self, report_text: str) -> str:
        return CANNED_ANALYSIS


def spt_stub() -> FixedStub:
    return FixedStub(
        "spt",
        "{Perturb jobs with short minimal spans and operations with short processing times first.}\n"
        "JOB: (neg min_process_span)\nOP: (neg proc_time)\n",
    )


def mwr_stub() -> FixedStub:
    return FixedStub(
        "mwr",
        "{Perturb jobs with long process spans and operations that could start early.}\n"
        "JOB: process_span\nOP: (neg earliest_start)\n",
    )


class RandomExprStub:
    """Seeded sampler of random valid expressions; ignores the prompt."""

    name = "random"

    def __init__(self, seed: int = 0, max_depth: int = 4):
        self.seed = seed
        self.max_depth = max_depth
        self._rng = random.Random(seed)
        self._count = 0

    def generate(self, prompt: PromptBundle, rng: random.Random) -> str:
        self._count += 1
        job = random_expr(self._rng, JOB_TERMINALS, self.max_depth)
        op = random_expr(self._rng, OP_TERMINALS, self.max_depth)
        return format_candidate(f"Random priority expression number {self._count}.", job, op)

    def analyze(self, report_text: str) -> str:
        return CANNED_ANALYSIS


class RemoteEndpoint:
    """HTTP generator: POST JSON ``{prompt, seed, mode}``, expects ``{text}`` back."""

    name = "remote"

    def __init__(self, url: str, token: str | None = None, timeout: float = 120.0):
        self.url = url
        self.token = token
        self.timeout = timeout

    @classmethod
    def from_env(cls) -> RemoteEndpoint:
        url = os.environ.get("GENERATOR_URL")
        if not url:
            raise ValueError("GENERATOR_URL is not set")
        return cls(url, os.environ.get("GENERATOR_TOKEN"))

    def _post(self, payload: dict) -> str:
        data = json.dumps(payload).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        req = urllib.request.Request(self.url, data=data, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                if resp.status != 200:
                    raise GenerationFailure(f"generator returned HTTP {resp.status}")
                body = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, TimeoutError, OSError, ValueError) as e:
            raise GenerationFailure(str(e)) from e
        text = body.get("text") if isinstance(body, dict) else None
        if not isinstance(text, str):
            raise GenerationFailure("response has no 'text' field")
        return text

    def generate(self, prompt: PromptBundle, rng: random.Random) -> str:
        return self._post({"prompt": prompt.render(), "seed": rng.randrange(2**31), "mode": "generate"})

    def analyze(self, report_text: str) -> str:
        prompt = (
            "Given the state of a genetic algorithm below, identify what limits its progress, "
            "point out weaknesses of each gene-selection heuristic and suggest improvements.\n\n" + report_text
        )
        return self._post({"prompt": prompt, "mode": "analyze"})


def stub_generators(seed: int = 0) -> list[GeneratorEndpoint]:
    return [spt_stub(), mwr_stub(), RandomExprStub(seed)]


def make_endpoint(name: str, seed: int = 0) -> GeneratorEndpoint:
    if name == "spt":
        return spt_stub()
    if name == "mwr":
        return mwr_stub()
    if name == "random":
        return RandomExprStub(seed)
    if name == "remote":
        return RemoteEndpoint.from_env()
    raise ValueError(f"unknown generator {name!r}")


# -- generation loop ---------------------------------------------------------------------------


def generate_operator(
    prompt: PromptBundle,
    endpoint: GeneratorEndpoint,
    rng: random.Random,
    *,
    op_id: int,
    origin: str,
    max_retries: int = 5,
) -> Operator:
    """Ask ``endpoint`` until a candidate parses, at most ``max_retries`` times."""
    for attempt in range(1, max_retries + 1):
        try:
            text = endpoint.generate(prompt, rng)
            thought, job_expr, op_expr = parse_candidate(text)
        except (CandidateError, GenerationFailure) as e:
            log.info("candidate %d from %s rejected: %s", attempt, endpoint.name, e)
            continue
        return Operator(op_id, thought, job_expr, op_expr, origin=origin, attempts=attempt)
    raise GenerationExhausted(max_retries)


def evolve_operator(
    ops: Sequence[Operator],
    report: EvolutionReport,
    endpoint: GeneratorEndpoint,
    max_retries: int = 5,
    *,
    init_prompt: PromptBundle,
    rng: random.Random,
    iteration: int,
    op_id: int | None = None,
    analyze: bool = True,
) -> Operator:
    """Analyze the report, build the improvement prompt and generate a replacement operator.

    Replacing the worst operator in ``ops`` is left to the caller.
    """
    if op_id is None:
        op_id = max((o.id for o in ops), default=-1) + 1
    if analyze:
        try:
            report = report.with_analysis(endpoint.analyze(report.to_text()))
        except GenerationFailure as e:
            # the analysis only enriches the prompt; carry on without it
            log.warning("analysis request failed: %s", e)
    prompt = build_improve_prompt(init_prompt, report)
    return generate_operator(
        prompt, endpoint, rng, op_id=op_id, origin=f"evolved@{iteration}", max_retries=max_retries
    )
