# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the lattice hot loops.

Same call surface and exact same integer semantics as _kernels_py; the
pure-Python module is the executable reference for these routines.
"""

import numpy as np

cimport numpy as cnp

COMPILED = True

KIND_DISAPPEAR = 0
KIND_CREATE_ORIGIN = 1
KIND_CREATE_RB = 2
KIND_MOVE = 3


def stabilize_padded_1d(cnp.int64_t[::1] h, cnp.int64_t[::1] t, long long budget):
    """FIFO queue stabilization of h[1..N-2]; cells 0 and N-1 are halo."""
    cdef Py_ssize_t n = h.shape[0]
    cdef Py_ssize_t cap = n + 1
    cdef cnp.ndarray[cnp.int64_t, ndim=1] queue_arr = np.empty(cap, dtype=np.int64)
    cdef cnp.int64_t[::1] queue = queue_arr
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] inq_arr = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] inq = inq_arr
    cdef Py_ssize_t head = 0, tail = 0
    cdef Py_ssize_t i, j
    cdef long long steps = 0, k
    for i in range(1, n - 1):
        if h[i] >= 2:
            queue[tail] = i
            tail = (tail + 1) % cap
            inq[i] = 1
    while head != tail:
        i = queue[head]
        head = (head + 1) % cap
        inq[i] = 0
        k = h[i] >> 1
        if k > 0:
            if steps + k > budget:
                k = budget - steps
            if k > 0:
                h[i] -= 2 * k
                t[i] += k
                steps += k
                h[i - 1] += k
                h[i + 1] += k
                j = i - 1
                if j >= 1 and h[j] >= 2 and not inq[j]:
                    queue[tail] = j
                    tail = (tail + 1) % cap
                    inq[j] = 1
                j = i + 1
                if j <= n - 2 and h[j] >= 2 and not inq[j]:
                    queue[tail] = j
                    tail = (tail + 1) % cap
                    inq[j] = 1
        if h[i] >= 2:
            head = (head - 1 + cap) % cap
            queue[head] = i
            inq[i] = 1
        if steps >= budget and head != tail:
            return steps, 1
    return steps, 0


def stabilize_padded_2d(cnp.int64_t[:, ::1] h, cnp.int64_t[:, ::1] t, long long budget):
    """Same as the 1d kernel on a 2d padded array with flat indexing."""
    cdef Py_ssize_t rows = h.shape[0]
    cdef Py_ssize_t cols = h.shape[1]
    cdef Py_ssize_t n = rows * cols
    cdef Py_ssize_t cap = n + 1
    cdef cnp.ndarray[cnp.int64_t, ndim=1] queue_arr = np.empty(cap, dtype=np.int64)
    cdef cnp.int64_t[::1] queue = queue_arr
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] inq_arr = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] inq = inq_arr
    cdef cnp.int64_t* hf = &h[0, 0]
    cdef cnp.int64_t* tf = &t[0, 0]
    cdef Py_ssize_t head = 0, tail = 0
    cdef Py_ssize_t i, j, r, c, m
    cdef long long steps = 0, k
    cdef Py_ssize_t[4] offs
    offs[0] = -cols
    offs[1] = -1
    offs[2] = 1
    offs[3] = cols
    for r in range(1, rows - 1):
        for c in range(1, cols - 1):
            i = r * cols + c
            if hf[i] >= 4:
                queue[tail] = i
                tail = (tail + 1) % cap
                inq[i] = 1
    while head != tail:
        i = queue[head]
        head = (head + 1) % cap
        inq[i] = 0
        k = hf[i] >> 2
        if k > 0:
            if steps + k > budget:
                k = budget - steps
            if k > 0:
                hf[i] -= 4 * k
                tf[i] += k
                steps += k
                for m in range(4):
                    j = i + offs[m]
                    hf[j] += k
                    if hf[j] >= 4 and not inq[j]:
                        r = j // cols
                        c = j % cols
                        if 1 <= r < rows - 1 and 1 <= c < cols - 1:
                            queue[tail] = j
                            tail = (tail + 1) % cap
                            inq[j] = 1
        if hf[i] >= 4:
            head = (head - 1 + cap) % cap
            queue[head] = i
            inq[i] = 1
        if steps >= budget and head != tail:
            return steps, 1
    return steps, 0


def onesided_run(samples, bint want_topples=True):
    """One-sided stabilization of [0, n] for n = 0..n_max, with waves
    and zero-event classification.  Matches _kernels_py.onesided_run."""
    cdef cnp.ndarray[cnp.int64_t, ndim=1] samp = np.ascontiguousarray(samples, dtype=np.int64)
    cdef Py_ssize_t n_max = samp.shape[0] - 1
    cdef cnp.ndarray[cnp.int64_t, ndim=1] hh_arr = np.zeros(n_max + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] top_arr = np.zeros(
        n_max + 1 if want_topples else 0, dtype=np.int64)
    # per-wave topple counts as interval increments; prefix-summed at the end
    cdef cnp.ndarray[cnp.int64_t, ndim=1] tdiff_arr = np.zeros(
        n_max + 2 if want_topples else 0, dtype=np.int64)
    cdef cnp.int64_t[::1] td = tdiff_arr
    cdef cnp.ndarray[cnp.int64_t, ndim=1] z_arr = np.zeros(n_max + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] origin_arr = np.zeros(n_max + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] zstack_arr = np.zeros(n_max + 2, dtype=np.int64)
    cdef cnp.int64_t[::1] hh = hh_arr
    cdef cnp.int64_t[::1] zstack = zstack_arr
    cdef cnp.int64_t[::1] sa = samp
    cdef cnp.int64_t[::1] tp = top_arr
    cdef cnp.int64_t[::1] za = z_arr
    cdef cnp.int64_t[::1] oc = origin_arr

    cdef Py_ssize_t cap = 4 * (n_max + 2)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] ev_arr = np.empty((cap, 5), dtype=np.int64)
    cdef Py_ssize_t n_ev = 0

    cdef Py_ssize_t n, y, x, zlen = 0
    cdef long long arrival, pending = 0, a_left = 0, origin = 0, wave

    for n in range(n_max + 1):
        arrival = sa[n] + pending
        pending = 0
        hh[n] = arrival
        if arrival == 0:
            if n_ev == cap:
                cap *= 2
                ev_arr = np.resize(ev_arr, (cap, 5))
            ev_arr[n_ev, 0] = n
            ev_arr[n_ev, 1] = 0
            ev_arr[n_ev, 2] = KIND_CREATE_RB
            ev_arr[n_ev, 3] = -1
            ev_arr[n_ev, 4] = n
            n_ev += 1
            zstack[zlen] = n
            zlen += 1
        wave = 0
        while hh[n] >= 2:
            wave += 1
            pending += 1
            # sites strictly between the rightmost zero and n all hold
            # one grain, so the wave topples exactly [x, n] once each
            # and only the endpoints (and the zero at x - 1) change
            if zlen > 0:
                x = zstack[zlen - 1] + 1
            else:
                x = 0
            if want_topples:
                td[x] += 1
                td[n + 1] -= 1
            if x == n:
                hh[n] -= 2
                if n > 0:
                    hh[n - 1] += 1
                else:
                    a_left += 1
            else:
                hh[n] -= 1
                hh[x] -= 1
                if x > 0:
                    hh[x - 1] += 1
                else:
                    a_left += 1
            if n_ev == cap:
                cap *= 2
                ev_arr = np.resize(ev_arr, (cap, 5))
            ev_arr[n_ev, 0] = n
            ev_arr[n_ev, 1] = wave
            if x == 0:
                origin += 1
                if n == 0 and hh[0] != 0:
                    continue  # tall origin column: no zero until it empties
                ev_arr[n_ev, 2] = KIND_CREATE_ORIGIN
                ev_arr[n_ev, 3] = -1
                ev_arr[n_ev, 4] = 0
                zstack[zlen] = 0
                zlen += 1
            elif x == n:
                if hh[n] != 0:
                    ev_arr[n_ev, 2] = KIND_DISAPPEAR
                    ev_arr[n_ev, 3] = n - 1
                    ev_arr[n_ev, 4] = -1
                    zlen -= 1
                else:
                    ev_arr[n_ev, 2] = KIND_MOVE
                    ev_arr[n_ev, 3] = n - 1
                    ev_arr[n_ev, 4] = n
                    zstack[zlen - 1] = n
            else:
                ev_arr[n_ev, 2] = KIND_MOVE
                ev_arr[n_ev, 3] = x - 1
                ev_arr[n_ev, 4] = x
                zstack[zlen - 1] = x
            n_ev += 1
        za[n] = zlen
        oc[n] = origin

    if want_topples:
        np.cumsum(tdiff_arr[:n_max + 1], out=top_arr)
    ev = ev_arr[:n_ev]
    return (
        hh_arr,
        z_arr,
        origin_arr,
        np.ascontiguousarray(ev[:, 0]),
        np.ascontiguousarray(ev[:, 1]),
        np.ascontiguousarray(ev[:, 2]),
        np.ascontiguousarray(ev[:, 3]),
        np.ascontiguousarray(ev[:, 4]),
        top_arr,
        int(a_left),
        int(pending),
    )
