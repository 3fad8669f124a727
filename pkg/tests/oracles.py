"""Independent reference computations used as test oracles."""

import math
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq


def quantize_exact(x, q, lo=-1, hi=1):
    x = min(max(Fraction(x), Fraction(lo)), Fraction(hi))
    return math.floor((x - lo) / (Fraction(hi) - lo) * (q - 1))


def sed_loop(a, b):
    total = 0.0
    for i in range(len(a)):
        d = float(a[i]) - float(b[i])
        total += d * d
    return total


def sum_fractions_loop(v, k):
    d = len(v)
    step = d // k
    return [sum(v[i * step + j] for i in range(k)) for j in range(step)]


def eer_scan(mated, non):
    """EER from brute-force error counting at every candidate threshold.

    The rates are joined piecewise linearly between consecutive thresholds
    and the crossing of FMR - FNMR is located with a bracketing root finder.
    """
    thr = [-math.inf] + sorted(set(list(mated) + list(non))) + [math.inf]
    fmr = [sum(1 for s in non if s <= t) / len(non) for t in thr]
    fnmr = [sum(1 for s in mated if s > t) / len(mated) for t in thr]
    u = np.arange(len(thr), dtype=float)

    def diff(x):
        return np.interp(x, u, fmr) - np.interp(x, u, fnmr)

    for j, t in enumerate(thr):
        if fmr[j] == fnmr[j]:
            return fmr[j]
        if fmr[j] > fnmr[j]:
            root = brentq(diff, j - 1, j, xtol=1e-14, rtol=1e-14)
            return float(np.interp(root, u, fmr))
    raise AssertionError("no crossing")
