"""Signal and explainable variance under correlated noise."""

from ._shufflevar import (
    Design,
    ShufflevarError,
    alpha,
    cov_exp_nugget,
    estimate,
    is_trivial,
    ms_between,
    ms_within,
    noise_level,
    permutation,
    reml,
    run_sweep,
)

__all__ = [
    "Design",
    "ShufflevarError",
    "alpha",
    "cov_exp_nugget",
    "estimate",
    "is_trivial",
    "ms_between",
    "ms_within",
    "noise_level",
    "permutation",
    "reml",
    "run_sweep",
]
