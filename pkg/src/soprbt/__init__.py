"""Positive-real balanced truncation for symmetric second-order systems.

The pipeline lifts ``M q'' + D q' + K q = B u`` to a first-order system with
a signature symmetry, balances it with the minimal solution of the
positive-real KYP inequality, truncates, and rebuilds a reduced model
``q'' + D~ q' + K~ q = B~ u`` with ``K~ > 0``.
"""
from .errors import ReductionError
from .fo_realization import StructuredFirstOrder, lift
from .kyp import SolverOptions, factorize, solve_min_kyp
from .pipeline import PipelineOptions, run_pipeline
from .prbt import plan_truncation, reduce, signed_eigendecomposition
from .recovery import recover
from .so_model import SecondOrderSystem, generate_triple_chain, read_system, validate, write_system

__version__ = "0.1.0"

__all__ = [
    "ReductionError", "StructuredFirstOrder", "lift", "SolverOptions", "factorize", "solve_min_kyp",
    "PipelineOptions", "run_pipeline", "plan_truncation", "reduce", "signed_eigendecomposition",
    "recover", "SecondOrderSystem", "generate_triple_chain", "read_system", "validate", "write_system",
]
