"""Product initial measures, deterministic sampling, and the scalar
large-deviation machinery (moment generating function, its inverse, and
the Chernov rate) used to reason about small-density grain sums.

Sampling is bit-reproducible: a (master, stream) pair keys a Philox
counter-based generator, heights are drawn in lexicographic site order,
and the Poisson variant uses CDF-table inversion of uniforms rather than
a rejection sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import HeightConfig, Window

__all__ = [
    "Seed",
    "MeasureSpec",
    "Poisson",
    "TwoPoint",
    "Constant",
    "SingleDefect",
    "InvalidSpecError",
    "rng_for",
    "sample",
    "mgf",
    "mgf_inverse",
    "t_rho",
    "chernov_rate",
    "parse_measure",
]

BISECT_TOL = 1e-9
_T_MAX = 1e6  # beyond this the MGF is treated as never reaching the target


class InvalidSpecError(ValueError):
    pass


@dataclass(frozen=True)
class Seed:
    """(master, stream): stream is the replicate index."""

    master: int
    stream: int = 0

    def replicate(self, index):
        return Seed(self.master, index)


def rng_for(seed):
    """Philox generator keyed by (master, stream); documented, counter
    based, so distinct streams are independent and runs reproduce."""
    key = np.array([seed.master, seed.stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class MeasureSpec:
    """One-site marginal of a translation-invariant product measure."""

    @property
    def density(self):
        raise NotImplementedError

    def sample_array(self, shape, rng):
        raise NotImplementedError

    def mgf(self, t):
        raise InvalidSpecError(f"{self} has no closed-form MGF")

    def text(self):
        raise NotImplementedError

    @property
    def is_product(self):
        return True


@dataclass(frozen=True)
class Poisson(MeasureSpec):
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise InvalidSpecError("poisson density must be positive")

    @property
    def density(self):
        return self.rho

    def _cdf_table(self):
        # cumulative P(eta <= k) until the tail is below double resolution
        terms = []
        pk = math.exp(-self.rho)
        cdf = pk
        k = 0
        while cdf < 1.0 - 1e-17 and k < self.rho + 60 * math.sqrt(self.rho) + 60:
            terms.append(cdf)
            k += 1
            pk *= self.rho / k
            cdf += pk
        terms.append(1.0)
        return np.array(terms)

    def sample_array(self, shape, rng):
        u = rng.random(int(np.prod(shape)))
        table = self._cdf_table()
        k = np.searchsorted(table, u, side="right")
        return k.astype(np.int64).reshape(shape)

    def mgf(self, t):
        with np.errstate(over="ignore"):
            return float(np.exp(self.rho * np.expm1(t)))

    def text(self):
        return f"poisson:{self.rho!r}"


@dataclass(frozen=True)
class TwoPoint(MeasureSpec):
    """P(eta = value) = prob, P(eta = 0) = 1 - prob."""

    value: int
    prob: float

    def __post_init__(self):
        if self.value <= 0:
            raise InvalidSpecError("twopoint value must be a positive integer")
        if not 0 < self.prob <= 1:
            raise InvalidSpecError("twopoint prob must be in (0, 1]")

    @property
    def density(self):
        return self.prob * self.value

    def sample_array(self, shape, rng):
        u = rng.random(int(np.prod(shape)))
        return (u < self.prob).astype(np.int64).reshape(shape) * self.value

    def mgf(self, t):
        with np.errstate(over="ignore"):
            return float((1.0 - self.prob) + self.prob * np.exp(t * self.value))

    def text(self):
        return f"twopoint:{self.value},{self.prob!r}"


@dataclass(frozen=True)
class Constant(MeasureSpec):
    height: int

    def __post_init__(self):
        if self.height < 0:
            raise InvalidSpecError("constant height must be nonnegative")

    @property
    def density(self):
        return float(self.height)

    def sample_array(self, shape, rng):
        return np.full(shape, self.height, dtype=np.int64)

    def mgf(self, t):
        with np.errstate(over="ignore"):
            return float(np.exp(t * self.height))

    def text(self):
        return f"constant:{self.height}"


@dataclass(frozen=True)
class SingleDefect(MeasureSpec):
    """Deterministic: constant background except one site."""

    background: int
    site: tuple
    height: int

    def __post_init__(self):
        object.__setattr__(self, "site", tuple(int(c) for c in self.site))
        if self.background < 0 or self.height < 0:
            raise InvalidSpecError("defect heights must be nonnegative")

    @property
    def density(self):
        return float(self.background)

    @property
    def is_product(self):
        return False

    def sample_array(self, shape, rng):
        return np.full(shape, self.background, dtype=np.int64)

    def text(self):
        coords = ",".join(str(c) for c in self.site)
        return f"defect:{self.background},{coords},{self.height}"


def sample(spec, window, seed):
    """Draw a HeightConfig: i.i.d. heights in lexicographic site order
    from the seeded stream (ledger empty)."""
    if not isinstance(spec, MeasureSpec):
        raise InvalidSpecError(f"not a measure spec: {spec!r}")
    rng = rng_for(seed)
    arr = spec.sample_array(window.shape, rng)
    if isinstance(spec, SingleDefect):
        if window.contains(spec.site):
            arr[window.index(spec.site)] = spec.height
    return HeightConfig(window, arr)


def mgf(spec, t):
    """E exp(t * eta) in closed form; overflow reported as +inf."""
    return spec.mgf(float(t))


def mgf_inverse(spec, a):
    """sup{t : G(t) <= a}, by bisection to 1e-9; +inf when G never
    exceeds a."""
    a = float(a)
    if a < 1.0:
        raise ValueError("mgf_inverse requires a >= 1 (G(0) = 1)")
    hi = 1.0
    while mgf(spec, hi) <= a:
        hi *= 2.0
        if hi > _T_MAX:
            return math.inf
    lo = 0.0
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if mgf(spec, mid) <= a:
            lo = mid
        else:
            hi = mid
    return lo


def t_rho(spec):
    """Half the MGF inverse at rho^{-1/2}; the exponent witness that makes
    log G(t) <= 1 for small densities."""
    rho = spec.density
    if not 0 < rho < 1:
        raise ValueError("t_rho requires density in (0, 1)")
    return 0.5 * mgf_inverse(spec, rho**-0.5)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def chernov_rate(spec, a):
    """sup_{t >= 0} (t*a - log G(t)): the exponential rate of the event
    that n i.i.d. heights sum to at least a*n.  Zero at or below the
    mean, where the supremum sits at t = 0."""
    a = float(a)
    rho = spec.density
    if a <= rho:
        return 0.0

    def f(t):
        g = mgf(spec, t)
        if not math.isfinite(g):
            return -math.inf
        return t * a - math.log(g)

    hi = 1.0
    while f(2.0 * hi) > f(hi):
        hi *= 2.0
        if hi > _T_MAX:
            # a at or beyond the essential supremum of the marginal
            return math.inf
    lo = 0.0
    hi = 2.0 * hi
    # golden-section search on the concave objective
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > BISECT_TOL:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = f(d)
    return f(0.5 * (lo + hi))


def parse_measure(text, d=1):
    """Parse the CLI measure syntax: poisson:RHO, twopoint:V,P,
    constant:H, defect:BG,COORDS...,H."""
    try:
        kind, _, rest = text.partition(":")
        kind = kind.strip().lower()
        if kind == "poisson":
            return Poisson(float(rest))
        if kind == "twopoint":
            v, p = rest.split(",")
            return TwoPoint(int(v), float(p))
        if kind == "constant":
            return Constant(int(rest))
        if kind == "defect":
            parts = rest.split(",")
            if len(parts) != d + 2:
                raise InvalidSpecError(
                    f"defect:BG,SITE,H needs {d} site coordinates for d={d}"
                )
            bg = int(parts[0])
            site = tuple(int(c) for c in parts[1:-1])
            return SingleDefect(bg, site, int(parts[-1]))
    except InvalidSpecError:
        raise
    except (ValueError, TypeError) as exc:
        raise InvalidSpecError(f"bad measure spec {text!r}: {exc}") from exc
    raise InvalidSpecError(f"unknown measure kind in {text!r}")
