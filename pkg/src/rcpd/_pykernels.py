"""Pure numpy implementations of the hot kernels.

Must stay result-identical to ``_ckernels.pyx``; tests run both.
"""

import numpy as np

HISTORY_LEN = 5
GAIN_EPS = 1e-12


def match_windows(windows, cur_thr, hist_thr, cap):
    """Index of the first satisfied rule per window row, or -1.

    ``windows`` is (n, 6) int64: current rank then history offsets 1..5.
    ``hist_thr[r, k] == 0`` leaves offset ``k + 1`` unconstrained for rule r.
    """
    windows = np.asarray(windows, dtype=np.int64)
    n = windows.shape[0]
    out = np.full(n, -1, dtype=np.int64)
    valid = windows < cap
    for r in range(len(cur_thr) - 1, -1, -1):
        ok = valid[:, 0] & (windows[:, 0] <= cur_thr[r])
        for k in range(HISTORY_LEN):
            t = hist_thr[r, k]
            if t:
                ok &= valid[:, k + 1] & (windows[:, k + 1] <= t)
        out[ok] = r
    return out


def build_windows(ranks, cap):
    """(m, 6) window rows for every sentence of a rank sequence."""
    ranks = np.asarray(ranks, dtype=np.int64)
    m = ranks.shape[0]
    padded = np.concatenate([np.full(HISTORY_LEN, cap, dtype=np.int64), ranks])
    cols = [padded[HISTORY_LEN - k: HISTORY_LEN - k + m] for k in range(HISTORY_LEN + 1)]
    return np.stack(cols, axis=1)


def first_firing(ranks, cur_thr, hist_thr, cap):
    """(sentence, rule) of the first firing window, or (-1, -1)."""
    if len(ranks) == 0:
        return -1, -1
    fired = match_windows(build_windows(ranks, cap), cur_thr, hist_thr, cap)
    hits = np.flatnonzero(fired >= 0)
    if hits.size == 0:
        return -1, -1
    i = int(hits[0])
    return i, int(fired[i])


def best_split(codes, rows, resid, weight, n_bins, min_leaf):
    """Best weighted least-squares split of ``resid`` over binned features.

    Returns ``(gain, feature, bin)`` where the left child takes
    ``codes[:, feature] <= bin``; ``(0.0, -1, -1)`` if nothing improves.
    Ties go to the lowest feature, then the lowest bin.
    """
    codes = np.asarray(codes)
    n_features = codes.shape[1]
    wr = (weight * resid)[rows]
    w = weight[rows]
    best_gain, best_f, best_b = 0.0, -1, -1
    for f in range(n_features):
        c = codes[rows, f]
        g_hist = np.bincount(c, weights=wr, minlength=n_bins)
        w_hist = np.bincount(c, weights=w, minlength=n_bins)
        n_hist = np.bincount(c, minlength=n_bins)
        g_left = np.cumsum(g_hist)
        w_left = np.cumsum(w_hist)
        n_left = np.cumsum(n_hist)
        g_tot, w_tot, n_tot = g_left[-1], w_left[-1], n_left[-1]
        parent = g_tot * g_tot / w_tot
        g_right = g_tot - g_left
        w_right = w_tot - w_left
        ok = (n_hist > 0) & (n_left >= min_leaf) & (n_tot - n_left >= min_leaf)
        ok &= (w_left > 0.0) & (w_right > 0.0)
        ok[-1] = False
        cand = np.flatnonzero(ok)
        if cand.size == 0:
            continue
        gl, wl, gr, wrr = g_left[cand], w_left[cand], g_right[cand], w_right[cand]
        gains = gl * gl / wl + gr * gr / wrr - parent
        for b, gain in zip(cand.tolist(), gains.tolist()):
            if gain > best_gain + GAIN_EPS * max(1.0, abs(best_gain)):
                best_gain, best_f, best_b = gain, f, b
    return best_gain, best_f, best_b
