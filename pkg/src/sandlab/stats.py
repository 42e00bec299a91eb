"""Small statistical helpers: two-sample Kolmogorov-Smirnov test and the
scaled centered-sum statistic for the density-one CLT signature.

The KS p-value uses the asymptotic Kolmogorov series with effective
sample size na*nb/(na+nb); it is a regression guard, not inference, so
samples are required to be reasonably large where it matters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import Window
from .measures import sample

__all__ = ["KSResult", "ks_two_sample", "clt_statistic"]


@dataclass
class KSResult:
    statistic: float
    n_a: int
    n_b: int
    p_value: float
    level: float
    reject: bool


def _kolmogorov_sf(lam):
    """P(K > lam) for the Kolmogorov distribution, by its series."""
    if lam <= 0:
        return 1.0
    total = 0.0
    for k in range(1, 101):
        term = 2.0 * (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
        total += term
        if abs(term) < 1e-16:
            break
    return min(1.0, max(0.0, total))


def ks_two_sample(a, b, level=0.01):
    """Two-sample KS: D = sup |F_a - F_b| over the pooled points."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    pooled.sort(kind="mergesort")
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.abs(fa - fb).max())
    n_eff = a.size * b.size / (a.size + b.size)
    p = _kolmogorov_sf(math.sqrt(n_eff) * d)
    return KSResult(
        statistic=d,
        n_a=int(a.size),
        n_b=int(b.size),
        p_value=p,
        level=level,
        reject=p < level,
    )


def clt_statistic(spec, n, seed):
    """S_n = n^{-1/2} * sum_{x=-n}^{n} (eta(x) - 1) for one sample."""
    cfg = sample(spec, Window((-int(n),), (int(n),)), seed)
    return float((cfg.heights.sum() - cfg.heights.size) / math.sqrt(n))
