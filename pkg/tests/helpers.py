import numpy as np
from scipy import stats


def chi_square_two_sample(a, b, min_count=10):
    """p-value of a two-sample chi-square test on integer samples; outer
    cells are merged until every column holds at least ``min_count``."""
    lo = min(a.min(), b.min())
    k = max(a.max(), b.max()) - lo + 1
    tab = np.array([np.bincount(a - lo, minlength=k), np.bincount(b - lo, minlength=k)])
    cols = [tab[:, i].copy() for i in range(k)]
    while len(cols) > 1 and cols[0].sum() < min_count:
        cols[1] += cols.pop(0)
    while len(cols) > 1 and cols[-1].sum() < min_count:
        cols[-2] += cols.pop()
    merged = np.array(cols).T
    return float(stats.chi2_contingency(merged)[1])


def binomial_z(hits, n, p):
    return (hits / n - p) / np.sqrt(p * (1 - p) / n)
