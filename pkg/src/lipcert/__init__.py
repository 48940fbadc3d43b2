"""Certified local Lipschitz bounds for one-hidden-layer ReLU networks.

The bound gamma = L_{w0,eps} is the maximum of |G(w) - G(w0)| over the
Euclidean eps-ball around w0, certified from above by a semidefinite
relaxation.  A rank-1 dual solution proves the bound tight and yields the
worst-case input itself.
"""

from .backend import SolveSettings, Solution, solve, verify_residuals
from .certify import (
    Certificate,
    ExactnessReport,
    SolveFailure,
    exactness_check,
    lower_bound_pgd,
    robustness_certificate,
    upper_bound,
    verify_worst_case,
)
from .model import (
    FnnModel,
    TargetSpec,
    classify,
    forward,
    gen_random,
    load_input,
    load_model,
    margin,
    save_model,
)
from .multipliers import MultiplierClass
from .reduction import IndexPartition, ReducedModel, reduce, reduced_forward, trivial_partition

__version__ = "0.1.0"

__all__ = [
    "Certificate",
    "ExactnessReport",
    "FnnModel",
    "IndexPartition",
    "MultiplierClass",
    "ReducedModel",
    "Solution",
    "SolveFailure",
    "SolveSettings",
    "TargetSpec",
    "classify",
    "exactness_check",
    "forward",
    "gen_random",
    "load_input",
    "load_model",
    "lower_bound_pgd",
    "margin",
    "reduce",
    "reduced_forward",
    "robustness_certificate",
    "save_model",
    "solve",
    "trivial_partition",
    "upper_bound",
    "verify_residuals",
    "verify_worst_case",
    "__version__",
]
