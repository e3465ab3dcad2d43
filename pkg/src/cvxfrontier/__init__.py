"""Shape-constrained nonparametric frontier estimation.

Convex (and monotone-only) regression under production-theory shape
constraints, quantile/expectile variants, directional-distance models for
multiple outputs, row generation for large samples, and residual
decomposition into inefficiency and noise with firm-level efficiency
scores. See the README for the CLI front end.
"""

from .cnls import CnlsSpec, FrontierEstimate, c2nls_adjust, fit_cnls
from .congen import GenConfig, GenState, find_violations, fit_generated
from .cqer import CqerSpec, fit_cer, fit_cqr
from .data import Dataset, DgpConfig, ValidationError, generate_dgp, load_csv, validate, write_csv
from .ddf import DdfSpec, fit_cnls_ddf, fit_cqer_ddf
from .isotonic import DominanceMatrix, dominance_matrix, fit_icer, fit_icnls, fit_icqr
from .solver import (
    AffineProblem,
    KktResiduals,
    SmoothProblem,
    Solution,
    SolverError,
    ToleranceConfig,
    solve_affine,
    solve_smooth,
)
from .stoned import (
    DecompositionError,
    DecompositionResult,
    EfficiencyResult,
    WrongSkewError,
    decompose_kde,
    decompose_mom,
    decompose_qle,
    jlms_conditional,
    technical_efficiency,
    unconditional_expected_inefficiency,
)

__version__ = "0.1.0"

__all__ = [
    "AffineProblem",
    "CnlsSpec",
    "CqerSpec",
    "Dataset",
    "DdfSpec",
    "DecompositionError",
    "DecompositionResult",
    "DgpConfig",
    "DominanceMatrix",
    "EfficiencyResult",
    "FrontierEstimate",
    "GenConfig",
    "GenState",
    "KktResiduals",
    "SmoothProblem",
    "Solution",
    "SolverError",
    "ToleranceConfig",
    "ValidationError",
    "WrongSkewError",
    "c2nls_adjust",
    "decompose_kde",
    "decompose_mom",
    "decompose_qle",
    "dominance_matrix",
    "find_violations",
    "fit_cer",
    "fit_cnls",
    "fit_cnls_ddf",
    "fit_cqer_ddf",
    "fit_cqr",
    "fit_generated",
    "fit_icer",
    "fit_icnls",
    "fit_icqr",
    "generate_dgp",
    "jlms_conditional",
    "load_csv",
    "solve_affine",
    "solve_smooth",
    "technical_efficiency",
    "unconditional_expected_inefficiency",
    "validate",
    "write_csv",
]
