"""Forward integrals, Wick decompositions and Itô formulas for fBm and the Rosenblatt process.

Both processes are represented through a discretized white noise on a
(possibly graded) grid of cells, and every quantity in the decompositions is
evaluated pathwise on that grid.
"""

from ._backend import BACKEND
from .errors import BudgetError, ConfigError, ContractError, DomainError, FwdWickError, OracleLimitError, ShapeError
from .frac_ops import constants
from .functions import parse_function
from .ito_engine import ExperimentConfig, forward_sum, ito_formula_check, trace_limit_checks
from .kernels import K1, K2, kappa3
from .noise_grid import make_graded_grid, make_grid, required_left_cut, sample_noise, sample_noise_batch
from .processes import make_rep, path

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BudgetError",
    "ConfigError",
    "ContractError",
    "DomainError",
    "ExperimentConfig",
    "FwdWickError",
    "K1",
    "K2",
    "OracleLimitError",
    "ShapeError",
    "constants",
    "forward_sum",
    "ito_formula_check",
    "kappa3",
    "make_graded_grid",
    "make_grid",
    "make_rep",
    "parse_function",
    "path",
    "required_left_cut",
    "sample_noise",
    "sample_noise_batch",
    "trace_limit_checks",
]
