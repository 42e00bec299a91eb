"""One-sided stabilization of [0, n] in d = 1 and its zero dynamics.

Each time step appends site n and stabilizes it through waves: site n
topples once, then every site of [0, n-1] that becomes unstable topples,
except site n again.  Each wave produces exactly one event for the
empty sites ("zeros"): a zero disappears, moves one step right, or a new
zero is created at the origin or at the right boundary.  The event log
reconstructs the zero count Z(n) exactly, which the replay validator
checks step by step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import backend
from ._kernels_py import onesided_step
from .lattice import HeightConfig, SandpileError, Window
from .measures import sample

__all__ = [
    "DISAPPEAR",
    "CREATE_ORIGIN",
    "CREATE_RB",
    "MOVE",
    "ZeroEvent",
    "OneSidedState",
    "OneSidedTrace",
    "IntervalTracker",
    "TwoSidedResult",
    "BookkeepingError",
    "advance",
    "run_one_sided",
    "interval_stats",
    "two_sided",
    "raster_export",
    "validate_trace",
]

DISAPPEAR = "disappear"
CREATE_ORIGIN = "create_origin"
CREATE_RB = "create_right_boundary"
MOVE = "move"

_KIND_NAMES = {
    backend.KIND_DISAPPEAR: DISAPPEAR,
    backend.KIND_CREATE_ORIGIN: CREATE_ORIGIN,
    backend.KIND_CREATE_RB: CREATE_RB,
    backend.KIND_MOVE: MOVE,
}


class BookkeepingError(SandpileError):
    pass


@dataclass(frozen=True)
class ZeroEvent:
    step: int
    wave: int
    kind: str
    frm: Optional[int] = None
    to: Optional[int] = None


@dataclass
class OneSidedState:
    """Completed state after stabilizing [0, n]; n = -1 before step 0."""

    n: int = -1
    heights: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    left_ledger: int = 0
    right_exterior: int = 0
    zeros: list = field(default_factory=list)
    origin_topples: int = 0

    def copy(self):
        return OneSidedState(
            self.n,
            self.heights.copy(),
            self.left_ledger,
            self.right_exterior,
            list(self.zeros),
            self.origin_topples,
        )


def advance(state, next_height):
    """Append site n+1 with the sampled height (plus grains previously
    exported onto it) and stabilize through waves.

    Returns (new_state, events) without mutating the input state.
    """
    if next_height < 0:
        raise ValueError("heights are nonnegative")
    new = state.copy()
    new.n += 1
    n = new.n
    hh = np.zeros(n + 1, dtype=np.int64)
    hh[: len(state.heights)] = state.heights
    arrival = int(next_height) + new.right_exterior
    raw, a_left, pending, origin_waves = onesided_step(hh, n, arrival, new.zeros)
    new.heights = hh
    new.left_ledger += a_left
    new.right_exterior = pending
    new.origin_topples += origin_waves
    events = [
        ZeroEvent(
            step=n,
            wave=wave,
            kind=_KIND_NAMES[kind],
            frm=None if frm < 0 else int(frm),
            to=None if to < 0 else int(to),
        )
        for wave, kind, frm, to in raw
    ]
    return new, events


@dataclass
class OneSidedTrace:
    n_max: int
    samples: np.ndarray
    heights: np.ndarray
    z: np.ndarray
    origin_topples: np.ndarray  # cumulative, per step
    ev_step: np.ndarray
    ev_wave: np.ndarray
    ev_kind: np.ndarray  # integer codes, see backend.KIND_*
    ev_from: np.ndarray
    ev_to: np.ndarray
    topples: np.ndarray
    left_ledger: int
    right_exterior: int

    def events(self):
        out = []
        for s, w, k, f, t in zip(self.ev_step, self.ev_wave, self.ev_kind, self.ev_from, self.ev_to):
            out.append(
                ZeroEvent(
                    int(s),
                    int(w),
                    _KIND_NAMES[int(k)],
                    None if f < 0 else int(f),
                    None if t < 0 else int(t),
                )
            )
        return out

    def total_grains(self):
        return int(self.heights.sum()) + self.left_ledger + self.right_exterior


def run_one_sided(spec, n_max, seed, want_topples=True):
    """Run the one-sided procedure for steps 0..n_max on an i.i.d.
    sample from the measure."""
    window = Window((0,), (int(n_max),))
    samples = sample(spec, window, seed).heights
    (hh, z, origin, ev_s, ev_w, ev_k, ev_f, ev_t, topples, a_left, pending) = backend.onesided_run(
        samples, want_topples
    )
    return OneSidedTrace(
        n_max=int(n_max),
        samples=samples,
        heights=hh,
        z=z,
        origin_topples=origin,
        ev_step=ev_s,
        ev_wave=ev_w,
        ev_kind=ev_k,
        ev_from=ev_f,
        ev_to=ev_t,
        topples=topples,
        left_ledger=int(a_left),
        right_exterior=int(pending),
    )


def _replay_rows(trace):
    """Replay the event log, validating the bookkeeping invariants and
    yielding (step, zeros) after each step."""
    zeros = []
    e = 0
    n_events = len(trace.ev_step)
    prev_z = 0
    for n in range(trace.n_max + 1):
        created = 0
        gone = 0
        while e < n_events and trace.ev_step[e] == n:
            kind = int(trace.ev_kind[e])
            wave = int(trace.ev_wave[e])
            frm = int(trace.ev_from[e])
            to = int(trace.ev_to[e])
            if kind == backend.KIND_CREATE_RB:
                if wave != 0:
                    raise BookkeepingError(f"step {n}: boundary creation with wave {wave}")
                zeros.append(n)
                created += 1
            elif kind == backend.KIND_CREATE_ORIGIN:
                if zeros:
                    raise BookkeepingError(
                        f"step {n}: origin creation while zeros {zeros} present"
                    )
                zeros.append(0)
                created += 1
            elif kind == backend.KIND_DISAPPEAR:
                if not zeros or zeros[-1] != frm or frm != n - 1:
                    raise BookkeepingError(
                        f"step {n}: disappearance from {frm}, zeros {zeros[-3:]}"
                    )
                zeros.pop()
                gone += 1
            elif kind == backend.KIND_MOVE:
                if not zeros or zeros[-1] != frm:
                    raise BookkeepingError(
                        f"step {n}: move of non-rightmost zero {frm}, zeros {zeros[-3:]}"
                    )
                if to != frm + 1:
                    raise BookkeepingError(f"step {n}: move {frm} -> {to}")
                zeros[-1] = to
            else:
                raise BookkeepingError(f"unknown event kind {kind}")
            e += 1
        if len(zeros) != int(trace.z[n]):
            raise BookkeepingError(
                f"step {n}: replayed zero count {len(zeros)} != Z(n) {trace.z[n]}"
            )
        if len(zeros) - prev_z != created - gone:
            raise BookkeepingError(f"step {n}: zero-count delta mismatch")
        prev_z = len(zeros)
        yield n, zeros
    if e != n_events:
        raise BookkeepingError("event log has trailing events")


def validate_trace(trace):
    """Full bookkeeping validation; also checks the final zero set
    against the recorded heights.  Raises BookkeepingError on failure."""
    zeros = []
    for _, zeros in _replay_rows(trace):
        pass
    actual = np.flatnonzero(trace.heights == 0)
    if not np.array_equal(np.array(zeros, dtype=np.int64), actual):
        raise BookkeepingError("final zero set does not match heights")
    return True


@dataclass
class IntervalTracker:
    z: int
    n_list: list
    m_list: list
    deltas: np.ndarray
    open_interval: bool


def interval_stats(trace, z):
    """Excursion lengths of Z above level z: from each entry of Z to
    exactly z+1 until the first return to <= z.  The trailing incomplete
    excursion is discarded but flagged."""
    z = int(z)
    if z < 1:
        raise ValueError("z must be >= 1")
    zn = np.asarray(getattr(trace, "z", trace))
    n_list, m_list, deltas = [], [], []
    last_m = 0  # N_0 = 0 convention: the first M closes at the first n > 0 with Z <= z
    # locate M_0 first
    idx = np.flatnonzero(zn[1:] <= z)
    if len(idx) == 0:
        return IntervalTracker(z, [], [], np.array([], dtype=np.int64), bool(np.any(zn == z + 1)))
    last_m = int(idx[0]) + 1
    n = last_m + 1
    open_interval = False
    while True:
        hit = np.flatnonzero(zn[n:] == z + 1)
        if len(hit) == 0:
            break
        ni = n + int(hit[0])
        ret = np.flatnonzero(zn[ni + 1 :] <= z)
        if len(ret) == 0:
            open_interval = True
            break
        mi = ni + 1 + int(ret[0])
        n_list.append(ni)
        m_list.append(mi)
        deltas.append(mi - ni)
        n = mi + 1
    return IntervalTracker(z, n_list, m_list, np.array(deltas, dtype=np.int64), open_interval)


@dataclass
class TwoSidedResult:
    a_plus: int
    a_minus: int
    z_plus: int
    z_minus: int
    outcome: object  # schedulers.StabilizeOutcome
    sampled: HeightConfig


def two_sided(spec, m, seed, budget=None):
    """Stabilize [-m, m] by composing one-sided passes.

    Right pass stabilizes [0, m], the mirrored left pass stabilizes
    [-m, -2]; both deposit grains on site -1 (A+ and A-).  The final pass
    stabilizes the whole window with absorbing exterior.
    """
    from . import schedulers  # local import to avoid a cycle

    m = int(m)
    if m < 1:
        raise ValueError("m must be >= 1")
    window = Window((-m,), (m,))
    cfg = sample(spec, window, seed)
    arr = cfg.heights

    right = backend.onesided_run(arr[m:], True)
    r_heights, r_a_left, r_pending = right[0], right[9], right[10]
    z_plus = int(right[1][-1])

    if m >= 2:
        left_samples = arr[: m - 1][::-1].copy()
        left = backend.onesided_run(left_samples, True)
        l_heights, l_a_left, l_pending = left[0], left[9], left[10]
        z_minus = int(left[1][-1])
    else:
        l_heights = np.zeros(0, dtype=np.int64)
        l_a_left, l_pending, z_minus = 0, 0, 0

    heights = np.empty(2 * m + 1, dtype=np.int64)
    heights[m:] = r_heights
    if m >= 2:
        heights[: m - 1] = l_heights[::-1]
    heights[m - 1] = arr[m - 1] + r_a_left + l_a_left
    ledger = {}
    if r_pending:
        ledger[(m + 1,)] = int(r_pending)
    if l_pending:
        ledger[(-m - 1,)] = int(l_pending)
    combined = HeightConfig(window, heights, ledger)
    kwargs = {} if budget is None else {"budget": budget}
    outcome = schedulers.fast_stabilize(combined, **kwargs)
    return TwoSidedResult(
        a_plus=int(r_a_left),
        a_minus=int(l_a_left),
        z_plus=z_plus,
        z_minus=z_minus,
        outcome=outcome,
        sampled=cfg,
    )


_WHITE = b"255 "
_BLACK = b"0   "


def raster_export(trace, path, csv_path=None):
    """Write the zero-trajectory raster as a text PGM plus the event CSV.

    Row n is black at the zero positions of step n and at every column
    right of the stabilized interval; width is n_max + 2 so the boundary
    wedge is always visible.
    """
    path = str(path)
    if csv_path is None:
        csv_path = path[: -len(".pgm")] + "_events.csv" if path.endswith(".pgm") else path + ".csv"
    width = trace.n_max + 2
    height = trace.n_max + 1
    with open(path, "wb") as fh:
        fh.write(b"P2\n%d %d\n255\n" % (width, height))
        for n, zeros in _replay_rows(trace):
            row = bytearray(_WHITE * (n + 1)) + bytearray(_BLACK * (width - n - 1))
            for zpos in zeros:
                off = 4 * zpos
                row[off : off + 4] = _BLACK
            row[-1:] = b"\n"
            fh.write(row)
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("step,event_kind,wave,position_from,position_to\n")
        for s, w, k, f, t in zip(
            trace.ev_step, trace.ev_wave, trace.ev_kind, trace.ev_from, trace.ev_to
        ):
            frm = "" if f < 0 else str(int(f))
            to = "" if t < 0 else str(int(t))
            fh.write(f"{int(s)},{_KIND_NAMES[int(k)]},{int(w)},{frm},{to}\n")
    return path, csv_path
