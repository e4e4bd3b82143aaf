"""User-user similarity and distance measures."""

from .bcf import AGREEMENT, HUSM, BCFRows, KernelContext, RatingKernel, bcf_family_sim
from .catalog import NAMES, PLOTTED, Measure, lookup, measure_catalog
from .classic import (
    DISTANCE,
    SIMILARITY,
    MeasureResult,
    UserStats,
    classic_rows,
    cos_sim,
    jaccard_sim,
    jmsd_sim,
    msd_dist,
    nhsm_sim,
    pcc_sim,
    pss,
    urp_sim,
)
from .pmd import PMDScorer, pmd, pmd_solution

__all__ = [
    "AGREEMENT", "BCFRows", "DISTANCE", "HUSM", "KernelContext", "Measure", "MeasureResult",
    "NAMES", "PLOTTED", "PMDScorer", "RatingKernel", "SIMILARITY", "UserStats",
    "bcf_family_sim", "classic_rows", "cos_sim", "jaccard_sim", "jmsd_sim", "lookup",
    "measure_catalog", "msd_dist", "nhsm_sim", "pcc_sim", "pmd", "pmd_solution", "pss",
    "urp_sim",
]
