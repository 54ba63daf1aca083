"""Dynamic weighted set cover with amortized and worst-case update-time engines."""

from .amortized import AmortizedEngine
from .core import DynCoverError, Instance, Update, validate_instance
from .static_hierarchy import build_static
from .verifier import (
    check_amortized_invariants,
    check_feasibility,
    check_primal_dual,
    check_worstcase_invariants,
    exact_min_cover,
)
from .workload import GenParams, gen_instance, gen_stream
from .worstcase import WorstCaseEngine

__all__ = [
    "AmortizedEngine",
    "DynCoverError",
    "GenParams",
    "Instance",
    "Update",
    "WorstCaseEngine",
    "build_static",
    "check_amortized_invariants",
    "check_feasibility",
    "check_primal_dual",
    "check_worstcase_invariants",
    "exact_min_cover",
    "gen_instance",
    "gen_stream",
    "validate_instance",
]
