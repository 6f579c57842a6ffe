"""Group-invariant kernels, the SVM dual, and invariant MMIF features on top of them."""
__version__ = "0.1.0"

from .errors import (ChecksumError, ConfigError, ConvergenceError, FormatError, GroupError, InvkernError,
                     InvkernRuntimeError, ValidationError)
from .group import FiniteUnitaryGroup, GroupSpec, group_average, make_group, psi_matrix, trivial_group
from .kernels import BaseKernel, GramMatrix, InvariantKernel, gram, kernel_eval, unitarity_check
from .svm import DualProblem, SvmModel, decision, kkt_report, solve_dual

__all__ = [
    "__version__", "InvkernError", "ConfigError", "ValidationError", "GroupError", "InvkernRuntimeError",
    "ConvergenceError", "FormatError", "ChecksumError", "FiniteUnitaryGroup", "GroupSpec", "make_group",
    "trivial_group", "group_average", "psi_matrix", "BaseKernel", "InvariantKernel", "GramMatrix", "gram",
    "kernel_eval", "unitarity_check", "DualProblem", "SvmModel", "solve_dual", "decision", "kkt_report",
]
