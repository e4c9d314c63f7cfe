"""Kruskal-Wallis rank sum test."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
from scipy.stats import chi2, rankdata


def kruskal_wallis(groups):
    """Return (H, p) with mid-ranks for ties and the usual tie correction.

    If every observation is identical, H is 0 and p is 1.
    """
    groups = [np.asarray(g, dtype=float).ravel() for g in groups]
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    if any(g.size == 0 for g in groups):
        raise ValueError("groups must be nonempty")
    allv = np.concatenate(groups)
    N = allv.size
    ranks = rankdata(allv)
    _, counts = np.unique(allv, return_counts=True)
    tie = 1.0 - np.sum(counts ** 3 - counts) / (N ** 3 - N) if N > 1 else 0.0
    if tie <= 0:
        return 0.0, 1.0
    # Mid-ranks are multiples of 1/2, so the sum of squares is exact in rationals.
    ssq = Fraction(0)
    start = 0
    for g in groups:
        ssq += Fraction(float(ranks[start:start + g.size].sum())) ** 2 / g.size
        start += g.size
    H = float((12 * ssq - 3 * N * (N + 1) ** 2) / (N * (N + 1)))
    H /= tie
    H = max(H, 0.0)
    return float(H), float(chi2.sf(H, len(groups) - 1))
