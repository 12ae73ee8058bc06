"""
Nonparametric statistics for the sweep report.
"""
from .nonparametric import (
    NEMENYI_Q_005,
    NemenyiResult,
    PairwiseComparison,
    TestResult,
    adjust_pairs,
    bh_fdr,
    cliffs_delta,
    cliffs_magnitude,
    dunn_posthoc,
    friedman,
    kruskal_wallis,
    nemenyi,
)

__all__ = [
    "NEMENYI_Q_005",
    "NemenyiResult",
    "PairwiseComparison",
    "TestResult",
    "adjust_pairs",
    "bh_fdr",
    "cliffs_delta",
    "cliffs_magnitude",
    "dunn_posthoc",
    "friedman",
    "kruskal_wallis",
    "nemenyi",
]
