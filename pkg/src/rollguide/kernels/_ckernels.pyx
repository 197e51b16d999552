# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled piano-roll kernels; behaviour matches kernels._fallback exactly."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

IMPL = "cython"


def pitch_class_profile(cnp.uint8_t[:, :] velocity):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(12)
    cdef double[:] acc = out
    cdef Py_ssize_t p, f, F = velocity.shape[1]
    for p in range(128):
        for f in range(F):
            acc[p % 12] += velocity[p, f]
    return out


def density_counts(cnp.uint8_t[:, :] velocity, cnp.uint8_t[:, :] onset,
                   Py_ssize_t window):
    cdef Py_ssize_t F = velocity.shape[1]
    cdef Py_ssize_t nwin = F // window
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vert = np.zeros(nwin)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] horiz = np.zeros(nwin)
    cdef double[:] vv = vert
    cdef double[:] hv = horiz
    cdef Py_ssize_t w, f, p, n_on, any_start
    for w in range(nwin):
        for f in range(w * window, (w + 1) * window):
            n_on = 0
            any_start = 0
            for p in range(128):
                if velocity[p, f] > 0:
                    n_on += 1
                if onset[p, f] > 0:
                    any_start = 1
            vv[w] += n_on
            hv[w] += any_start
        vv[w] /= window
    return vert, horiz


def frame_chord_codes(cnp.uint8_t[:, :] velocity):
    cdef Py_ssize_t F = velocity.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.zeros(F, dtype=np.int64)
    cdef cnp.int64_t[:] cv = out
    cdef Py_ssize_t p, f
    for f in range(F):
        for p in range(128):
            if velocity[p, f] > 0:
                cv[f] |= <cnp.int64_t>1 << (p % 12)
    return out


def longest_run_codes(cnp.uint8_t[:, :] velocity, Py_ssize_t window):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] codes = frame_chord_codes(velocity)
    cdef cnp.int64_t[:] cv = codes
    cdef Py_ssize_t nwin = velocity.shape[1] // window
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.zeros(nwin, dtype=np.int64)
    cdef cnp.int64_t[:] ov = out
    cdef Py_ssize_t w, f, lo, hi, run_len, best_len
    cdef cnp.int64_t cur, best_code
    for w in range(nwin):
        lo = w * window
        hi = lo + window
        cur = cv[lo]
        run_len = 1
        best_code = cur
        best_len = 0
        for f in range(lo + 1, hi):
            if cv[f] == cur:
                run_len += 1
            else:
                if run_len > best_len:
                    best_len = run_len
                    best_code = cur
                cur = cv[f]
                run_len = 1
        if run_len > best_len:
            best_code = cur
        ov[w] = best_code
    return out


def smooth_velocity_runs(cnp.uint8_t[:, :] velocity, cnp.uint8_t[:, :] onset):
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out = np.asarray(velocity).copy()
    cdef cnp.uint8_t[:, :] ov = out
    cdef Py_ssize_t F = velocity.shape[1]
    cdef Py_ssize_t p, f, s, e, rank, v
    cdef int counts[128]
    for p in range(128):
        f = 0
        while f < F:
            if velocity[p, f] == 0:
                f += 1
                continue
            s = f
            e = f + 1
            # run: positive cells, split at the next onset or silence
            while e < F and velocity[p, e] > 0 and onset[p, e] == 0:
                e += 1
            # lower median of the run via counting (values are 1..127)
            for v in range(128):
                counts[v] = 0
            for f in range(s, e):
                counts[velocity[p, f]] += 1
            rank = (e - s - 1) // 2
            v = 0
            while counts[v] <= rank:
                rank -= counts[v]
                v += 1
            for f in range(s, e):
                ov[p, f] = <cnp.uint8_t>v
            f = e
    return out
