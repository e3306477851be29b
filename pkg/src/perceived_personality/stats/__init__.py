from .agreement import IccResult, TostResult, icc2k, tost_equivalence, two_way_mean_squares
from .permanova import PermanovaResult, PseudoF, permanova, permutation_histogram, pseudo_f
from .repeated import (
    AnovaResult,
    SphericityResult,
    TTestResult,
    contrast_covariance,
    gg_epsilon,
    holm_adjust,
    mauchly_gg,
    orthonormal_contrasts,
    paired_t,
    rm_anova,
    welch_t,
)

__all__ = [
    "AnovaResult",
    "IccResult",
    "PermanovaResult",
    "PseudoF",
    "SphericityResult",
    "TTestResult",
    "TostResult",
    "contrast_covariance",
    "gg_epsilon",
    "holm_adjust",
    "icc2k",
    "mauchly_gg",
    "orthonormal_contrasts",
    "paired_t",
    "permanova",
    "permutation_histogram",
    "pseudo_f",
    "rm_anova",
    "tost_equivalence",
    "two_way_mean_squares",
    "welch_t",
]
