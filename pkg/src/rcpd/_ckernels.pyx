# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Mirrors ``_pykernels`` result-for-result."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

cdef enum:
    HISTORY_LEN = 5

cdef double GAIN_EPS = 1e-12


cdef inline bint _fires(const long long[:, ::1] w, Py_ssize_t i,
                        const long long[::1] cur, const long long[:, ::1] hist,
                        Py_ssize_t r, long long cap) nogil:
    cdef Py_ssize_t k
    cdef long long rank = w[i, 0], t
    if rank >= cap or rank > cur[r]:
        return False
    for k in range(HISTORY_LEN):
        t = hist[r, k]
        if t:
            rank = w[i, k + 1]
            if rank >= cap or rank > t:
                return False
    return True


def match_windows(windows, cur_thr, hist_thr, long long cap):
    cdef const long long[:, ::1] w = np.ascontiguousarray(windows, dtype=np.int64)
    cdef const long long[::1] cur = np.ascontiguousarray(cur_thr, dtype=np.int64)
    cdef const long long[:, ::1] hist = np.ascontiguousarray(hist_thr, dtype=np.int64)
    cdef Py_ssize_t n = w.shape[0], n_rules = cur.shape[0], i, r
    out_arr = np.full(n, -1, dtype=np.int64)
    cdef long long[::1] out = out_arr
    with nogil:
        for i in range(n):
            for r in range(n_rules):
                if _fires(w, i, cur, hist, r, cap):
                    out[i] = r
                    break
    return out_arr


def build_windows(ranks, long long cap):
    cdef const long long[::1] rk = np.ascontiguousarray(ranks, dtype=np.int64)
    cdef Py_ssize_t m = rk.shape[0], i, k
    arr = np.empty((m, HISTORY_LEN + 1), dtype=np.int64)
    cdef long long[:, ::1] w = arr
    for i in range(m):
        for k in range(HISTORY_LEN + 1):
            w[i, k] = rk[i - k] if i - k >= 0 else cap
    return arr


def first_firing(ranks, cur_thr, hist_thr, long long cap):
    cdef const long long[::1] rk = np.ascontiguousarray(ranks, dtype=np.int64)
    cdef const long long[::1] cur = np.ascontiguousarray(cur_thr, dtype=np.int64)
    cdef const long long[:, ::1] hist = np.ascontiguousarray(hist_thr, dtype=np.int64)
    cdef Py_ssize_t m = rk.shape[0], n_rules = cur.shape[0], i, r, k
    cdef long long rank, t
    cdef bint ok
    for i in range(m):
        for r in range(n_rules):
            rank = rk[i]
            if rank >= cap or rank > cur[r]:
                continue
            ok = True
            for k in range(HISTORY_LEN):
                t = hist[r, k]
                if t:
                    rank = rk[i - k - 1] if i - k - 1 >= 0 else cap
                    if rank >= cap or rank > t:
                        ok = False
                        break
            if ok:
                return i, r
    return -1, -1


def best_split(codes, rows, resid, weight, Py_ssize_t n_bins, Py_ssize_t min_leaf):
    cdef const int[:, ::1] cd = np.ascontiguousarray(codes, dtype=np.int32)
    cdef const long long[::1] rw = np.ascontiguousarray(rows, dtype=np.int64)
    cdef const double[::1] res = np.ascontiguousarray(resid, dtype=np.float64)
    cdef const double[::1] wt = np.ascontiguousarray(weight, dtype=np.float64)
    cdef Py_ssize_t n_features = cd.shape[1], n_rows = rw.shape[0]
    cdef Py_ssize_t f, b, j, i, c
    g_arr = np.zeros(n_bins, dtype=np.float64)
    w_arr = np.zeros(n_bins, dtype=np.float64)
    n_arr = np.zeros(n_bins, dtype=np.int64)
    cdef double[::1] gh = g_arr
    cdef double[::1] wh = w_arr
    cdef long long[::1] nh = n_arr
    cdef double best_gain = 0.0, gain, gl, wl, gr, wr_, g_tot, w_tot, parent, scale
    cdef long long nl, n_tot
    cdef Py_ssize_t best_f = -1, best_b = -1

    with nogil:
        for f in range(n_features):
            for b in range(n_bins):
                gh[b] = 0.0
                wh[b] = 0.0
                nh[b] = 0
            for j in range(n_rows):
                i = rw[j]
                c = cd[i, f]
                gh[c] += wt[i] * res[i]
                wh[c] += wt[i]
                nh[c] += 1
            # prefix sums in place
            for b in range(1, n_bins):
                gh[b] += gh[b - 1]
                wh[b] += wh[b - 1]
            g_tot = gh[n_bins - 1]
            w_tot = wh[n_bins - 1]
            n_tot = n_rows
            parent = g_tot * g_tot / w_tot
            nl = 0
            for b in range(n_bins - 1):
                nl += nh[b]
                if nh[b] == 0 or nl < min_leaf or n_tot - nl < min_leaf:
                    continue
                gl = gh[b]
                wl = wh[b]
                gr = g_tot - gl
                wr_ = w_tot - wl
                if not (wl > 0.0 and wr_ > 0.0):
                    continue
                gain = gl * gl / wl + gr * gr / wr_ - parent
                scale = fabs(best_gain)
                if scale < 1.0:
                    scale = 1.0
                if gain > best_gain + GAIN_EPS * scale:
                    best_gain = gain
                    best_f = f
                    best_b = b
    return best_gain, best_f, best_b
