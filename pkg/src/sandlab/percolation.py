"""Cluster decomposition of toppled / nonempty site sets and the
empirical tail of the origin-cluster size distribution.

The two inequalities checked here (internal-bond grain bound and the
region grain bound) are theorems for every stabilized outcome, so a
single violation anywhere means a bug, not bad luck.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .lattice import SandpileError
from .measures import rng_for

__all__ = [
    "SiteSet",
    "ClusterDecomposition",
    "TailEstimate",
    "FitResult",
    "NotStabilizedError",
    "InsufficientSupportError",
    "extract_sets",
    "decompose",
    "origin_cluster_size",
    "bond_bound_check",
    "region_grain_check",
    "survival_tail",
    "fit_exponential",
]


class NotStabilizedError(SandpileError):
    pass


class InsufficientSupportError(SandpileError):
    pass


@dataclass
class SiteSet:
    window: object  # lattice.Window
    membership: np.ndarray

    def __post_init__(self):
        self.membership = np.ascontiguousarray(self.membership, dtype=bool)
        if self.membership.shape != self.window.shape:
            raise ValueError("membership shape must match the window")

    def sites(self):
        return [self.window.site_at(tuple(i)) for i in np.argwhere(self.membership)]

    def size(self):
        return int(np.count_nonzero(self.membership))

    def union(self, other):
        if other.window != self.window:
            raise ValueError("site sets live on different windows")
        return SiteSet(self.window, self.membership | other.membership)


def extract_sets(outcome):
    """(T, V, W): toppled sites, nonempty sites, and their union."""
    if not outcome.stabilized:
        raise NotStabilizedError("sets are defined for stabilized outcomes only")
    window = outcome.final.window
    t = SiteSet(window, outcome.topples.counts > 0)
    v = SiteSet(window, outcome.final.heights > 0)
    return t, v, t.union(v)


@dataclass
class ClusterDecomposition:
    labels: np.ndarray  # 0 = not in the set
    sizes: dict  # label -> site count
    origin_cluster: Optional[int]


def _structure(d):
    return ndimage.generate_binary_structure(d, 1)


def decompose(site_set):
    """Nearest-neighbor connected components, labeled 1.. in order of
    each cluster's lexicographically smallest member."""
    member = site_set.membership
    d = member.ndim
    raw, n = ndimage.label(member, structure=_structure(d))
    if n == 0:
        return ClusterDecomposition(raw.astype(np.int64), {}, None)
    flat = raw.ravel()
    nz = np.flatnonzero(flat)
    # first occurrence of each label in raster (lexicographic) order
    first = {}
    for i in nz:
        lab = int(flat[i])
        if lab not in first:
            first[lab] = int(i)
            if len(first) == n:
                break
    order = sorted(first, key=first.get)
    remap = np.zeros(n + 1, dtype=np.int64)
    for new, old in enumerate(order, start=1):
        remap[old] = new
    labels = remap[raw]
    counts = np.bincount(labels.ravel(), minlength=n + 1)
    sizes = {lab: int(counts[lab]) for lab in range(1, n + 1)}
    origin = None
    w = site_set.window
    if w.contains((0,) * d):
        lab = int(labels[w.index((0,) * d)])
        origin = lab if lab > 0 else None
    return ClusterDecomposition(labels, sizes, origin)


def origin_cluster_size(membership, origin_index):
    """Size of the connected component containing the origin; 0 when the
    origin is not in the set.  BFS, cheap for small clusters."""
    if not membership[origin_index]:
        return 0
    shape = membership.shape
    d = membership.ndim
    seen = {origin_index}
    queue = deque([origin_index])
    while queue:
        idx = queue.popleft()
        for ax in range(d):
            for step in (-1, 1):
                c = idx[ax] + step
                if not 0 <= c < shape[ax]:
                    continue
                nb = idx[:ax] + (c,) + idx[ax + 1 :]
                if nb not in seen and membership[nb]:
                    seen.add(nb)
                    queue.append(nb)
    return len(seen)


def _internal_bonds(mask):
    """Number of lattice edges with both endpoints in the mask."""
    d = mask.ndim
    bonds = 0
    for ax in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        bonds += int(np.count_nonzero(mask[tuple(lo)] & mask[tuple(hi)]))
    return bonds


def _random_connected_subset(member_indices, member_set, size, rng):
    """Seeded BFS growth of a connected subset of the given size."""
    start = member_indices[int(rng.integers(len(member_indices)))]
    chosen = {start}
    frontier = [start]
    d = len(start)
    while frontier and len(chosen) < size:
        idx = frontier[int(rng.integers(len(frontier)))]
        added = False
        for ax in range(d):
            for step in (-1, 1):
                nb = idx[:ax] + (idx[ax] + step,) + idx[ax + 1 :]
                if nb in member_set and nb not in chosen:
                    chosen.add(nb)
                    frontier.append(nb)
                    added = True
                    if len(chosen) >= size:
                        break
            if len(chosen) >= size:
                break
        if not added:
            frontier.remove(idx)
    return chosen


def bond_bound_check(final, toppled, subset_samples=16, seed=None):
    """Grains in any subset of the toppled set dominate its internal
    bond count: checked on every maximal cluster plus random connected
    subsets of each."""
    decomposition = decompose(SiteSet(final.window, np.asarray(toppled, dtype=bool)))
    heights = final.heights
    rng = rng_for(seed) if seed is not None else np.random.default_rng(0)
    for lab, size in decomposition.sizes.items():
        mask = decomposition.labels == lab
        if int(heights[mask].sum()) < _internal_bonds(mask):
            return False
        if subset_samples <= 0 or size <= 1:
            continue
        member_indices = [tuple(int(c) for c in i) for i in np.argwhere(mask)]
        member_set = set(member_indices)
        for _ in range(subset_samples):
            want = int(rng.integers(1, size + 1))
            chosen = _random_connected_subset(member_indices, member_set, want, rng)
            sub = np.zeros(mask.shape, dtype=bool)
            for idx in chosen:
                sub[idx] = True
            if int(heights[sub].sum()) < _internal_bonds(sub):
                return False
    return True


def region_grain_check(final, toppled):
    """Each toppled cluster of m_t sites with m_b outer-boundary sites
    holds at least m_t - 1 + m_b grains on cluster plus boundary.

    Clusters touching the window edge are skipped (their boundary is
    truncated); returns (all_ok, checked, skipped).
    """
    decomposition = decompose(SiteSet(final.window, np.asarray(toppled, dtype=bool)))
    heights = final.heights
    d = heights.ndim
    structure = _structure(d)
    checked = 0
    skipped = 0
    ok = True
    for lab in decomposition.sizes:
        mask = decomposition.labels == lab
        touches_edge = False
        for ax in range(d):
            sl = [slice(None)] * d
            sl[ax] = 0
            if np.any(mask[tuple(sl)]):
                touches_edge = True
                break
            sl[ax] = mask.shape[ax] - 1
            if np.any(mask[tuple(sl)]):
                touches_edge = True
                break
        if touches_edge:
            skipped += 1
            continue
        boundary = ndimage.binary_dilation(mask, structure=structure) & ~mask
        m_t = int(np.count_nonzero(mask))
        m_b = int(np.count_nonzero(boundary))
        grains = int(heights[mask].sum()) + int(heights[boundary].sum())
        checked += 1
        if grains < m_t - 1 + m_b:
            ok = False
    return ok, checked, skipped


@dataclass
class TailEstimate:
    thresholds: np.ndarray
    survival: np.ndarray
    counts: np.ndarray  # replicates at or above each threshold
    replicates: int


@dataclass
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    fit_range: tuple
    degenerate: bool = False


def survival_tail(cluster_sizes, thresholds):
    """Empirical P(origin cluster size >= n) over replicates."""
    sizes = np.asarray(sorted(cluster_sizes), dtype=np.int64)
    if sizes.size < 1:
        raise ValueError("need at least one replicate")
    thresholds = np.asarray(sorted(int(n) for n in thresholds), dtype=np.int64)
    counts = sizes.size - np.searchsorted(sizes, thresholds, side="left")
    return TailEstimate(
        thresholds=thresholds,
        survival=counts / sizes.size,
        counts=counts.astype(np.int64),
        replicates=int(sizes.size),
    )


def fit_exponential(tail, min_count=50):
    """Unweighted least squares of log survival against the threshold,
    over thresholds with at least min_count supporting replicates."""
    keep = tail.counts >= min_count
    n = tail.thresholds[keep].astype(float)
    s = tail.survival[keep]
    if n.size < 3:
        raise InsufficientSupportError(
            f"{n.size} supported thresholds (need >= 3 with count >= {min_count})"
        )
    y = np.log(s)
    nbar = n.mean()
    ybar = y.mean()
    sxx = float(((n - nbar) ** 2).sum())
    sxy = float(((n - nbar) * (y - ybar)).sum())
    syy = float(((y - ybar) ** 2).sum())
    if sxx == 0:
        raise InsufficientSupportError("degenerate threshold range")
    slope = sxy / sxx
    intercept = ybar - slope * nbar
    if syy == 0:
        return FitResult(0.0, intercept, float("nan"), (int(n[0]), int(n[-1])), True)
    r2 = (sxy * sxy) / (sxx * syy)
    return FitResult(slope, intercept, r2, (int(n[0]), int(n[-1])), False)
