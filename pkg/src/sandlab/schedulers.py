"""The four toppling procedures as interchangeable schedulers.

All schedulers stabilize the window with an absorbing exterior: grains
toppled across the boundary land in the export ledger and never return.
By the abelian property every scheduler (and the fast work-queue kernel)
must produce the identical final configuration and topple field, which
`abelian_check` verifies exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import backend
from .lattice import (
    HeightConfig,
    SandpileError,
    ToppleField,
    Window,
    verify_evolution,
)
from .measures import Seed, rng_for, sample

__all__ = [
    "Parallel",
    "RandomSequential",
    "NestedVolumes",
    "Waves",
    "StabilizeOutcome",
    "NestedRecord",
    "BudgetExceededError",
    "WavesPreconditionError",
    "DEFAULT_BUDGET",
    "stabilize",
    "fast_stabilize",
    "abelian_check",
    "run_nested",
    "parse_scheduler",
]

DEFAULT_BUDGET = 10**9

STABILIZED = "stabilized"
BUDGET_EXCEEDED = "budget-exceeded"


class BudgetExceededError(SandpileError):
    pass


class WavesPreconditionError(SandpileError):
    pass


@dataclass(frozen=True)
class Parallel:
    """Synchronous sweeps: every site unstable before the sweep topples
    exactly once per sweep."""


@dataclass(frozen=True)
class RandomSequential:
    """Uniform random choice among currently unstable sites, one
    toppling at a time.  Outcome-equivalent to Poisson-clock dynamics."""

    seed: Seed = Seed(0)


@dataclass(frozen=True)
class NestedVolumes:
    """Stabilize a growing sequence of sub-windows, ending at the full
    window.  subwindows=None builds boxes growing from the center."""

    subwindows: Optional[tuple] = None


@dataclass(frozen=True)
class Waves:
    """Single-unstable-site procedure: the distinguished site topples
    once per wave, then every other site that becomes unstable topples
    at most once before the next wave starts."""


@dataclass
class StabilizeOutcome:
    final: HeightConfig
    topples: ToppleField
    status: str
    steps: int
    wave_count: Optional[int] = None

    @property
    def stabilized(self):
        return self.status == STABILIZED


def _pad(config):
    d = config.window.dim
    padded = np.zeros(tuple(s + 2 for s in config.window.shape), dtype=np.int64)
    core = tuple(slice(1, -1) for _ in range(d))
    padded[core] = config.heights
    for site, count in config.ledger.items():
        idx = tuple(c - l + 1 for c, l in zip(site, config.window.lower))
        padded[idx] = count
    return padded


def _unpad(window, padded, tpadded):
    d = window.dim
    core = tuple(slice(1, -1) for _ in range(d))
    heights = padded[core].copy()
    halo = padded.copy()
    halo[core] = 0
    ledger = {}
    for idx in np.argwhere(halo > 0):
        site = tuple(int(i) - 1 + l for i, l in zip(idx, window.lower))
        ledger[site] = int(halo[tuple(idx)])
    final = HeightConfig(window, heights, ledger)
    topples = ToppleField(window, tpadded[core].copy())
    return final, topples


def _interior_mask_flat(shape):
    d = len(shape)
    interior = np.ones(shape, dtype=bool)
    for ax in range(d):
        sl = [slice(None)] * d
        sl[ax] = 0
        interior[tuple(sl)] = False
        sl[ax] = shape[ax] - 1
        interior[tuple(sl)] = False
    return interior.ravel()


def _flat_strides(shape):
    strides = []
    s = 1
    for ax in range(len(shape) - 1, -1, -1):
        strides.insert(0, s)
        s *= shape[ax]
    return strides


def _apply_counts(h, t, counts, core_slices):
    """Apply a field of simultaneous legal topplings given on a core
    region of the padded arrays."""
    d = h.ndim
    h[core_slices] -= 2 * d * counts
    t[core_slices] += counts
    for ax in range(d):
        for step in (-1, 1):
            sl = list(core_slices)
            s = core_slices[ax]
            sl[ax] = slice(s.start + step, s.stop + step)
            h[tuple(sl)] += counts


def _sweep_region(h, t, core_slices, budget, steps):
    """Parallel sweeps restricted to a region until it has no unstable
    sites.  Returns (steps, status)."""
    twod = 2 * h.ndim
    while True:
        mask = h[core_slices] >= twod
        nnz = int(np.count_nonzero(mask))
        if nnz == 0:
            return steps, 0
        if steps + nnz > budget:
            # partial sweep: topple the lexicographic prefix only
            rem = budget - steps
            counts = np.zeros(mask.shape, dtype=np.int64)
            counts.ravel()[np.flatnonzero(mask.ravel())[:rem]] = 1
            _apply_counts(h, t, counts, core_slices)
            return budget, 1
        _apply_counts(h, t, mask.astype(np.int64), core_slices)
        steps += nnz


def _run_parallel(h, t, budget):
    core = tuple(slice(1, s - 1) for s in h.shape)
    return _sweep_region(h, t, core, budget, 0)


def _default_subwindows(window):
    center = tuple((l + u) // 2 for l, u in zip(window.lower, window.upper))
    subs = []
    r = 0
    while True:
        lo = tuple(max(l, c - r) for l, c in zip(window.lower, center))
        hi = tuple(min(u, c + r) for u, c in zip(window.upper, center))
        subs.append(Window(lo, hi))
        if lo == window.lower and hi == window.upper:
            return tuple(subs)
        r += 1


def _run_nested_volumes(h, t, window, subwindows, budget):
    if subwindows is None:
        subwindows = _default_subwindows(window)
    prev = None
    for sub in subwindows:
        if not all(
            wl <= sl and su <= wu
            for wl, sl, su, wu in zip(window.lower, sub.lower, sub.upper, window.upper)
        ):
            raise ValueError(f"subwindow {sub} not contained in {window}")
        if prev is not None and not all(
            sl <= pl and pu <= su
            for pl, sl, pu, su in zip(prev.lower, sub.lower, prev.upper, sub.upper)
        ):
            raise ValueError("nested subwindows must be increasing")
        prev = sub
    if prev != window:
        raise ValueError("nested subwindow sequence must end at the full window")
    steps = 0
    for sub in subwindows:
        core = tuple(
            slice(sl - wl + 1, su - wl + 2)
            for sl, su, wl in zip(sub.lower, sub.upper, window.lower)
        )
        steps, status = _sweep_region(h, t, core, budget, steps)
        if status:
            return steps, 1
    return steps, 0


def _run_random_sequential(h, t, budget, seed):
    d = h.ndim
    twod = 2 * d
    hf = h.ravel()
    tf = t.ravel()
    strides = _flat_strides(h.shape)
    interior = _interior_mask_flat(h.shape)
    rng = rng_for(seed)
    active = [int(i) for i in np.flatnonzero(interior & (hf >= twod))]
    pos = {i: p for p, i in enumerate(active)}
    steps = 0

    def drop(i):
        p = pos.pop(i)
        last = active.pop()
        if last != i:
            active[p] = last
            pos[last] = p

    while active:
        if steps >= budget:
            return steps, 1
        i = active[int(rng.integers(len(active)))]
        hf[i] -= twod
        tf[i] += 1
        steps += 1
        for st in strides:
            for j in (i - st, i + st):
                hf[j] += 1
                if interior[j] and hf[j] >= twod and j not in pos:
                    pos[j] = len(active)
                    active.append(j)
        if hf[i] < twod:
            drop(i)
    return steps, 0


def _run_waves(h, t, window, budget):
    d = h.ndim
    twod = 2 * d
    hf = h.ravel()
    tf = t.ravel()
    strides = _flat_strides(h.shape)
    interior = _interior_mask_flat(h.shape)

    start = np.flatnonzero(interior & (hf >= twod))
    if len(start) != 1:
        raise WavesPreconditionError(
            f"waves need exactly one unstable site, found {len(start)}"
        )
    x_star = int(start[0])
    steps = 0
    waves = 0

    def topple(i):
        nonlocal steps
        hf[i] -= twod
        tf[i] += 1
        steps += 1
        out = []
        for st in strides:
            for j in (i - st, i + st):
                hf[j] += 1
                if interior[j] and hf[j] >= twod:
                    out.append(int(j))
        return out

    while True:
        if not np.any(interior & (hf >= twod)):
            return steps, waves, 0
        waves += 1
        toppled = set()
        if hf[x_star] >= twod:
            if steps >= budget:
                return steps, waves - 1, 1
            frontier = topple(x_star)
            toppled.add(x_star)
        else:
            frontier = [int(i) for i in np.flatnonzero(interior & (hf >= twod))]
        while True:
            ready = sorted(
                j for j in set(frontier) if j != x_star and j not in toppled and hf[j] >= twod
            )
            if not ready:
                rest = sorted(
                    int(j)
                    for j in np.flatnonzero(interior & (hf >= twod))
                    if j != x_star and int(j) not in toppled
                )
                if not rest:
                    break
                ready = rest
            frontier = []
            for j in ready:
                if hf[j] < twod or j in toppled:
                    continue
                if steps >= budget:
                    return steps, waves, 1
                frontier.extend(topple(j))
                toppled.add(j)


def stabilize(config, sched, budget=DEFAULT_BUDGET):
    """Run one toppling procedure until the window is stable or the
    budget of elementary topplings is spent."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    window = config.window
    h = _pad(config)
    t = np.zeros(h.shape, dtype=np.int64)
    wave_count = None

    if isinstance(sched, Parallel):
        steps, status = _run_parallel(h, t, budget)
    elif isinstance(sched, NestedVolumes):
        steps, status = _run_nested_volumes(h, t, window, sched.subwindows, budget)
    elif isinstance(sched, RandomSequential):
        steps, status = _run_random_sequential(h, t, budget, sched.seed)
    elif isinstance(sched, Waves):
        steps, wave_count, status = _run_waves(h, t, window, budget)
    else:
        raise TypeError(f"unknown scheduler {sched!r}")

    final, topples = _unpad(window, h, t)
    outcome = StabilizeOutcome(
        final=final,
        topples=topples,
        status=BUDGET_EXCEEDED if status else STABILIZED,
        steps=int(steps),
        wave_count=wave_count,
    )
    if not verify_evolution(config, topples, final):
        raise SandpileError("internal error: evolution identity violated")
    return outcome


def fast_stabilize(config, budget=DEFAULT_BUDGET, verify=True):
    """Work-queue stabilization via the kernel backend (abelian, so the
    outcome matches every scheduler)."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    window = config.window
    h = _pad(config)
    t = np.zeros(h.shape, dtype=np.int64)
    steps, status = backend.stabilize_padded(h, t, budget)
    final, topples = _unpad(window, h, t)
    outcome = StabilizeOutcome(
        final=final,
        topples=topples,
        status=BUDGET_EXCEEDED if status else STABILIZED,
        steps=int(steps),
    )
    if verify and not verify_evolution(config, topples, final):
        raise SandpileError("internal error: evolution identity violated")
    return outcome


def abelian_check(config, scheds, budget=DEFAULT_BUDGET):
    """True iff all schedulers yield identical (final, topples); exact.

    Raises BudgetExceededError if any run fails to stabilize, since the
    comparison is undefined then.
    """
    outcomes = []
    for sched in scheds:
        out = stabilize(config.copy(), sched, budget)
        if not out.stabilized:
            raise BudgetExceededError(f"{sched!r} exceeded budget {budget}")
        outcomes.append(out)
    ref = outcomes[0]
    return all(
        out.final == ref.final and out.topples == ref.topples for out in outcomes[1:]
    )


@dataclass
class NestedRecord:
    radius: int
    outcome: StabilizeOutcome
    origin_topples: int
    never_toppled_fraction: float


def run_nested(spec, radii, seed, budget=DEFAULT_BUDGET, d=1):
    """Stabilize one sample in nested centered boxes of the given radii.

    The sample is drawn once on the largest box; each radius restarts
    from the original sample restricted to that box, with the exterior
    absorbing.  Radii after a budget-exceeded run are skipped.
    """
    radii = [int(k) for k in radii]
    if any(b >= a for a, b in zip(radii[1:], radii)):
        raise ValueError("radii must be strictly increasing")
    k_max = radii[-1]
    big = sample(spec, Window.centered(k_max, d), seed)
    records = []
    for k in radii:
        sl = tuple(slice(k_max - k, k_max + k + 1) for _ in range(d))
        sub = HeightConfig(Window.centered(k, d), big.heights[sl].copy())
        out = fast_stabilize(sub, budget)
        origin = out.topples.count_at((0,) * d)
        frac = float(np.count_nonzero(out.topples.counts == 0) / out.topples.counts.size)
        records.append(NestedRecord(k, out, origin, frac))
        if not out.stabilized:
            break
    return records


def parse_scheduler(text, seed=None):
    text = text.strip().lower()
    if text == "parallel":
        return Parallel()
    if text == "randomseq":
        return RandomSequential(seed or Seed(0))
    if text == "nested":
        return NestedVolumes()
    if text == "waves":
        return Waves()
    raise ValueError(f"unknown scheduler {text!r} (nested|parallel|randomseq|waves)")
