"""Kernel-based re-scaled L2-boosting with truncation (KReBooT) and comparators."""

from kreboot.baselines import (
    KRRConfig,
    LassoConfig,
    LassoResult,
    krr_fit,
    lasso_fit,
    least_squares_fit,
    project_l1_ball,
)
from kreboot.boosting import (
    BoostingState,
    ConstantAlpha,
    ConstantEll,
    EpsilonBoosting,
    HarmonicAlpha,
    History,
    KReBooT,
    LogarithmicEll,
    Rboosting,
    RTboosting,
    Schedules,
    UnboundedEll,
    boost_step,
    compute_step,
    empirical_risk,
    fit,
    load_model,
    predict,
    save_model,
    select_atom,
)
from kreboot.datagen import DataGenConfig, Dataset, derive_seed, generate, target_g
from kreboot.errors import (
    DegenerateAtomError,
    InputDomainError,
    KrebootError,
    SingularSystemError,
)
from kreboot.kernels import RadialKernel, cross_gram, eval_radial, gram

__version__ = "0.1.0"

__all__ = [
    "BoostingState",
    "ConstantAlpha",
    "ConstantEll",
    "DataGenConfig",
    "Dataset",
    "DegenerateAtomError",
    "EpsilonBoosting",
    "HarmonicAlpha",
    "History",
    "InputDomainError",
    "KRRConfig",
    "KReBooT",
    "KrebootError",
    "LassoConfig",
    "LassoResult",
    "LogarithmicEll",
    "RTboosting",
    "RadialKernel",
    "Rboosting",
    "Schedules",
    "SingularSystemError",
    "UnboundedEll",
    "boost_step",
    "compute_step",
    "cross_gram",
    "derive_seed",
    "empirical_risk",
    "eval_radial",
    "fit",
    "generate",
    "gram",
    "krr_fit",
    "lasso_fit",
    "least_squares_fit",
    "load_model",
    "predict",
    "project_l1_ball",
    "save_model",
    "select_atom",
    "target_g",
]
