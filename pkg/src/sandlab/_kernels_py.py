"""Pure-Python kernels: reference implementations of the hot loops.

Same call surface as the compiled extension module.  All functions work
on padded arrays: a one-cell halo of exterior sites surrounds the window
and absorbs exported grains without ever toppling.  Status codes:
0 = stabilized, 1 = toppling budget exceeded.
"""

from __future__ import annotations

from collections import deque

import numpy as np

COMPILED = False

# zero-event kind codes shared with the compiled kernel
KIND_DISAPPEAR = 0
KIND_CREATE_ORIGIN = 1
KIND_CREATE_RB = 2
KIND_MOVE = 3


def _stabilize_queue(h, t, budget):
    """FIFO work-queue stabilization of the interior of a padded array.

    Pops batch-topple (height // 2d topplings at once, all legal).  The
    in-queue flag keeps every unstable site enqueued exactly once.
    """
    d = h.ndim
    twod = 2 * d
    shape = h.shape
    hf = h.ravel()
    tf = t.ravel()
    strides = []
    s = 1
    for ax in range(d - 1, -1, -1):
        strides.append(s)
        s *= shape[ax]
    strides = strides[::-1]
    interior = np.ones(shape, dtype=bool)
    for ax in range(d):
        sl = [slice(None)] * d
        sl[ax] = 0
        interior[tuple(sl)] = False
        sl[ax] = shape[ax] - 1
        interior[tuple(sl)] = False
    interior = interior.ravel()

    queue = deque(int(i) for i in np.flatnonzero(interior & (hf >= twod)))
    inq = np.zeros(hf.shape, dtype=bool)
    for i in queue:
        inq[i] = True
    offsets = [st for st in strides for _ in (0,)]
    steps = 0
    while queue:
        i = queue.popleft()
        inq[i] = False
        k = hf[i] // twod
        if k <= 0:
            continue
        if steps + k > budget:
            k = budget - steps
        if k > 0:
            hf[i] -= twod * k
            tf[i] += k
            steps += k
            for st in strides:
                for j in (i - st, i + st):
                    hf[j] += k
                    if interior[j] and hf[j] >= twod and not inq[j]:
                        queue.append(j)
                        inq[j] = True
        if hf[i] >= twod:
            # budget ran out mid-batch; the state is valid but unstable
            queue.appendleft(i)
            inq[i] = True
        if steps >= budget and queue:
            return steps, 1
    return steps, 0


def stabilize_padded_1d(h, t, budget):
    return _stabilize_queue(h, t, budget)


def stabilize_padded_2d(h, t, budget):
    return _stabilize_queue(h, t, budget)


def stabilize_padded_nd(h, t, budget):
    return _stabilize_queue(h, t, budget)


def onesided_step(hh, n, arrival, zeros, topples=None):
    """One time step of the one-sided procedure, organized into waves.

    ``hh`` holds heights on [0, n] (entry n is written here), ``zeros``
    is the ascending list of empty-site positions and is updated in
    place.  Returns (events, left_exported, right_exported) where each
    event is (wave, kind, from_pos, to_pos) with -1 for "not applicable".
    """
    events = []
    a_left = 0
    pending = 0
    origin_waves = 0
    hh[n] = arrival
    if arrival == 0:
        events.append((0, KIND_CREATE_RB, -1, n))
        zeros.append(n)
    wave = 0
    while hh[n] >= 2:
        wave += 1
        hh[n] -= 2
        pending += 1
        if topples is not None:
            topples[n] += 1
        y = n - 1
        if y >= 0:
            hh[y] += 1
        else:
            a_left += 1
        while y >= 0 and hh[y] >= 2:
            hh[y] -= 2
            if topples is not None:
                topples[y] += 1
            hh[y + 1] += 1
            if y >= 1:
                hh[y - 1] += 1
            else:
                a_left += 1
            y -= 1
        x = y + 1  # leftmost site toppled in this wave
        if x == 0:
            assert not zeros, "origin creation with zeros still present"
            origin_waves += 1
            if n == 0:
                # degenerate first step: the wave is {0} and the origin
                # only empties on the last toppling of a tall column
                if hh[0] == 0:
                    events.append((wave, KIND_CREATE_ORIGIN, -1, 0))
                    zeros.append(0)
            else:
                events.append((wave, KIND_CREATE_ORIGIN, -1, 0))
                zeros.append(0)
        elif x == n:
            assert zeros and zeros[-1] == n - 1
            if hh[n] != 0:
                events.append((wave, KIND_DISAPPEAR, n - 1, -1))
                zeros.pop()
            else:
                events.append((wave, KIND_MOVE, n - 1, n))
                zeros[-1] = n
        else:
            assert zeros and zeros[-1] == x - 1
            events.append((wave, KIND_MOVE, x - 1, x))
            zeros[-1] = x
    return events, a_left, pending, origin_waves


def onesided_run(samples, want_topples=True):
    """Full one-sided run over the sampled heights.

    Returns (heights, Z, origin_cum, ev_step, ev_wave, ev_kind, ev_from,
    ev_to, topples, a_left, pending).
    """
    samples = np.ascontiguousarray(samples, dtype=np.int64)
    n_max = samples.shape[0] - 1
    hh = np.zeros(n_max + 1, dtype=np.int64)
    topples = np.zeros(n_max + 1, dtype=np.int64) if want_topples else None
    zeros = []
    z_arr = np.zeros(n_max + 1, dtype=np.int64)
    origin_cum = np.zeros(n_max + 1, dtype=np.int64)
    ev_step, ev_wave, ev_kind, ev_from, ev_to = [], [], [], [], []
    a_left = 0
    pending = 0
    origin = 0
    for n in range(n_max + 1):
        arrival = int(samples[n]) + pending
        pending = 0
        events, da, dp, dorigin = onesided_step(hh, n, arrival, zeros, topples)
        a_left += da
        pending += dp
        origin += dorigin
        for wave, kind, frm, to in events:
            ev_step.append(n)
            ev_wave.append(wave)
            ev_kind.append(kind)
            ev_from.append(frm)
            ev_to.append(to)
        z_arr[n] = len(zeros)
        origin_cum[n] = origin
    return (
        hh,
        z_arr,
        origin_cum,
        np.array(ev_step, dtype=np.int64),
        np.array(ev_wave, dtype=np.int64),
        np.array(ev_kind, dtype=np.int64),
        np.array(ev_from, dtype=np.int64),
        np.array(ev_to, dtype=np.int64),
        topples if want_topples else np.zeros(0, dtype=np.int64),
        a_left,
        pending,
    )
