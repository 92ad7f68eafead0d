"""Flexible job shop scheduling with a GA whose gene-selection operators co-evolve."""

from .engine import EngineConfig, RunResult, rpd, run
from .instance import Instance, load_instance, make_instance, parse_fjs
from .llm_bridge import make_endpoint
from .schedule import Chromosome, Schedule, check_feasible, decode

__all__ = [
    "Chromosome",
    "EngineConfig",
    "Instance",
    "RunResult",
    "Schedule",
    "check_feasible",
    "decode",
    "load_instance",
    "make_endpoint",
    "make_instance",
    "parse_fjs",
    "rpd",
    "run",
]

__version__ = "0.1.0"
