from .elastic_net import cv_elastic_net, elastic_net
from .glrr import GlrrState, estimate_glrr, glrr_weights, iterated_adaptive_ridge
from .grrrr import (
    FactorStructure,
    estimate_grrrr,
    extract_factors,
    grrrr_rank1_oracle,
)
from .mvgrrrr import estimate_mv_grrrr
from .twostep import credible_bands, estimate_2srr

__all__ = [
    "FactorStructure",
    "GlrrState",
    "credible_bands",
    "cv_elastic_net",
    "elastic_net",
    "estimate_2srr",
    "estimate_glrr",
    "estimate_grrrr",
    "estimate_mv_grrrr",
    "extract_factors",
    "glrr_weights",
    "grrrr_rank1_oracle",
    "iterated_adaptive_ridge",
]
