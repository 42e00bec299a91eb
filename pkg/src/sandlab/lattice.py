"""Integer lattice arithmetic: windows, height configurations, topplings.

Everything here is exact 64-bit integer arithmetic on dense arrays over
hyperrectangular windows of Z^d.  Grains that leave the window through a
boundary toppling are accounted in an export ledger keyed by the exterior
site that received them, so total grain count is conserved exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Window",
    "HeightConfig",
    "ToppleField",
    "SandpileError",
    "SiteOutsideWindowError",
    "IllegalTopplingError",
    "WindowMismatchError",
    "is_stable",
    "topple",
    "toppling_matrix_entry",
    "verify_evolution",
    "unstable_sites",
    "neighbors",
]


class SandpileError(Exception):
    pass


class SiteOutsideWindowError(SandpileError):
    pass


class IllegalTopplingError(SandpileError):
    pass


class WindowMismatchError(SandpileError):
    pass


@dataclass(frozen=True)
class Window:
    """Inclusive hyperrectangle [lower, upper] in Z^d."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(int(c) for c in self.lower)
        hi = tuple(int(c) for c in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi) or len(lo) == 0:
            raise ValueError("lower and upper must have the same positive dimension")
        if any(l > u for l, u in zip(lo, hi)):
            raise ValueError("window bounds must satisfy lower <= upper componentwise")
        if self.size >= 2**63:
            raise ValueError("window site count does not fit 64 bits")

    @classmethod
    def centered(cls, radius, d):
        """Box [-radius, radius]^d."""
        if radius < 0:
            raise ValueError("radius must be >= 0")
        return cls((-radius,) * d, (radius,) * d)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def shape(self):
        return tuple(u - l + 1 for l, u in zip(self.lower, self.upper))

    @property
    def size(self):
        n = 1
        for l, u in zip(self.lower, self.upper):
            n *= u - l + 1
        return n

    def contains(self, site):
        return all(l <= c <= u for l, c, u in zip(self.lower, site, self.upper))

    def index(self, site):
        """Array index tuple for a window site."""
        if not self.contains(site):
            raise SiteOutsideWindowError(f"site {tuple(site)} outside window {self}")
        return tuple(c - l for c, l in zip(site, self.lower))

    def site_at(self, index):
        return tuple(i + l for i, l in zip(index, self.lower))

    def sites(self):
        """All window sites in lexicographic coordinate order."""
        return itertools.product(*(range(l, u + 1) for l, u in zip(self.lower, self.upper)))

    def is_boundary_index(self, index):
        return any(i == 0 or i == s - 1 for i, s in zip(index, self.shape))


def neighbors(site):
    """The 2d nearest neighbors of a site, lexicographically ordered."""
    site = tuple(site)
    out = []
    for ax in range(len(site)):
        for step in (-1, 1):
            out.append(site[:ax] + (site[ax] + step,) + site[ax + 1 :])
    out.sort()
    return out


def _exterior_adjacent(window, site):
    """True iff site is outside the window at lattice distance exactly 1."""
    if window.contains(site):
        return False
    dist = 0
    for l, c, u in zip(window.lower, site, window.upper):
        if c < l:
            dist += l - c
        elif c > u:
            dist += c - u
    return dist == 1


@dataclass
class HeightConfig:
    """Heights on a window plus the export ledger of dissipated grains.

    Ledger keys are exterior sites at lattice distance 1 from the window;
    values are the (positive) grain counts they received from boundary
    topplings.  Zero entries are never stored, so two configs compare
    equal iff their ledgers compare equal.
    """

    window: Window
    heights: np.ndarray
    ledger: dict = field(default_factory=dict)

    def __post_init__(self):
        self.heights = np.ascontiguousarray(self.heights, dtype=np.int64)
        if self.heights.shape != self.window.shape:
            raise ValueError(
                f"heights shape {self.heights.shape} != window shape {self.window.shape}"
            )
        if np.any(self.heights < 0):
            raise ValueError("heights must be nonnegative")
        clean = {}
        for site, count in self.ledger.items():
            site = tuple(int(c) for c in site)
            count = int(count)
            if count < 0:
                raise ValueError("ledger counts must be nonnegative")
            if not _exterior_adjacent(self.window, site):
                raise ValueError(f"ledger key {site} is not adjacent to the window")
            if count:
                clean[site] = count
        self.ledger = clean

    @classmethod
    def from_values(cls, lower, values, ledger=None):
        values = np.asarray(values, dtype=np.int64)
        lower = tuple(lower) if not np.isscalar(lower) else (int(lower),)
        upper = tuple(l + s - 1 for l, s in zip(lower, values.shape))
        return cls(Window(lower, upper), values, dict(ledger or {}))

    def copy(self):
        return HeightConfig(self.window, self.heights.copy(), dict(self.ledger))

    def height_at(self, site):
        return int(self.heights[self.window.index(site)])

    def total_grains(self):
        return int(self.heights.sum()) + sum(self.ledger.values())

    def __eq__(self, other):
        if not isinstance(other, HeightConfig):
            return NotImplemented
        return (
            self.window == other.window
            and bool(np.array_equal(self.heights, other.heights))
            and self.ledger == other.ledger
        )


@dataclass
class ToppleField:
    """Per-site topple counts T(x) over a window."""

    window: Window
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if self.counts.shape != self.window.shape:
            raise ValueError(
                f"counts shape {self.counts.shape} != window shape {self.window.shape}"
            )
        if np.any(self.counts < 0):
            raise ValueError("topple counts must be nonnegative")

    @classmethod
    def zeros(cls, window):
        return cls(window, np.zeros(window.shape, dtype=np.int64))

    def count_at(self, site):
        return int(self.counts[self.window.index(site)])

    def total(self):
        return int(self.counts.sum())

    def __eq__(self, other):
        if not isinstance(other, ToppleField):
            return NotImplemented
        return self.window == other.window and bool(np.array_equal(self.counts, other.counts))


def is_stable(config):
    """True iff every window height is <= 2d - 1."""
    return bool(np.all(config.heights <= 2 * config.window.dim - 1))


def topple(config, site, mode="legal"):
    """Topple one site: it loses 2d grains, each neighbor gains one.

    Neighbors outside the window accumulate in the ledger.  In "legal"
    mode the site must be unstable (height >= 2d); "forced" mode allows
    any site but still refuses to drive a height negative.
    """
    if mode not in ("legal", "forced"):
        raise ValueError(f"unknown topple mode {mode!r}")
    site = tuple(int(c) for c in site)
    d = config.window.dim
    idx = config.window.index(site)  # raises SiteOutsideWindowError
    h = int(config.heights[idx])
    if mode == "legal" and h < 2 * d:
        raise IllegalTopplingError(f"site {site} has height {h} < {2 * d}")
    if h < 2 * d:
        raise IllegalTopplingError(f"forced toppling at {site} would make height negative")
    out = config.copy()
    out.heights[idx] -= 2 * d
    for nb in neighbors(site):
        if out.window.contains(nb):
            out.heights[out.window.index(nb)] += 1
        else:
            out.ledger[nb] = out.ledger.get(nb, 0) + 1
    return out


def toppling_matrix_entry(d, x, y):
    """Entry of the lattice Laplacian-like toppling matrix: 2d on the
    diagonal, -1 between nearest neighbors, 0 otherwise."""
    x = tuple(x)
    y = tuple(y)
    if len(x) != d or len(y) != d:
        raise ValueError("site dimension must match d")
    if x == y:
        return 2 * d
    dist = sum(abs(a - b) for a, b in zip(x, y))
    return -1 if dist == 1 else 0


def unstable_sites(config):
    """Window sites with height >= 2d, in lexicographic order."""
    d = config.window.dim
    idx = np.argwhere(config.heights >= 2 * d)
    return [config.window.site_at(tuple(i)) for i in idx]


def _laplacian_apply(counts):
    """(Delta T) restricted to the window: 2d*T(x) - sum of in-window
    neighbor counts, plus the per-axis face flows into the exterior."""
    d = counts.ndim
    out = 2 * d * counts.copy()
    for ax in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        out[tuple(lo)] -= counts[tuple(hi)]
        out[tuple(hi)] -= counts[tuple(lo)]
    return out


def expected_ledger_delta(T):
    """Grains each adjacent exterior site receives given topple field T."""
    window = T.window
    d = window.dim
    delta = {}
    for ax in range(d):
        for side, face_index in ((-1, 0), (1, window.shape[ax] - 1)):
            face = [slice(None)] * d
            face[ax] = face_index
            face_counts = T.counts[tuple(face)]
            for rel in np.argwhere(face_counts > 0):
                rel = tuple(int(r) for r in rel)
                idx = rel[:ax] + (face_index,) + rel[ax:]
                site = window.site_at(idx)
                ext = site[:ax] + (site[ax] + side,) + site[ax + 1 :]
                delta[ext] = delta.get(ext, 0) + int(face_counts[rel])
    return delta


def verify_evolution(initial, T, final):
    """Exact check of final = initial - Delta.T, ledger included."""
    if not (initial.window == T.window == final.window):
        raise WindowMismatchError("initial, topple field and final windows must coincide")
    expected = initial.heights - _laplacian_apply(T.counts)
    if not np.array_equal(expected, final.heights):
        return False
    want = expected_ledger_delta(T)
    keys = set(want) | set(initial.ledger) | set(final.ledger)
    for z in keys:
        got = final.ledger.get(z, 0) - initial.ledger.get(z, 0)
        if got != want.get(z, 0):
            return False
    return True
