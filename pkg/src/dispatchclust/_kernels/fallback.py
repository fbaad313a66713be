"""Pure-numpy kernels: GRU layer forward/backward over a sequence, and DTW.

This module is the fallback used when the compiled extension is not
available. Both backends implement the same contract and must agree to
float64 round-off; see tests/test_kernels.py.

GRU cell (gate order r, z, n along the 3H axis):

    gi = x_t @ w_ih + b_ih
    gh = h_prev @ w_hh + b_hh
    r  = sigmoid(gi_r + gh_r)
    z  = sigmoid(gi_z + gh_z)
    n  = tanh(gi_n + r * gh_n)
    h  = (1 - z) * n + z * h_prev
"""

import numpy as np


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def gru_forward(x, h0, w_ih, w_hh, b_ih, b_hh):
    """Run one GRU layer over a full sequence.

    x: (T, B, I), h0: (B, H), w_ih: (I, 3H), w_hh: (H, 3H), biases: (3H,).
    Returns (h_seq, cache) where h_seq is (T, B, H) and cache holds the
    per-step gate activations needed by gru_backward.
    """
    T, B, I = x.shape
    H = h0.shape[1]
    gi = x.reshape(T * B, I) @ w_ih
    gi = gi.reshape(T, B, 3 * H) + b_ih

    h_seq = np.empty((T, B, H))
    r_s = np.empty((T, B, H))
    z_s = np.empty((T, B, H))
    n_s = np.empty((T, B, H))
    hn_s = np.empty((T, B, H))  # gh_n, the recurrent pre-activation gated by r

    h = h0
    for t in range(T):
        gh = h @ w_hh + b_hh
        r = _sigmoid(gi[t, :, :H] + gh[:, :H])
        z = _sigmoid(gi[t, :, H:2 * H] + gh[:, H:2 * H])
        hn = gh[:, 2 * H:]
        n = np.tanh(gi[t, :, 2 * H:] + r * hn)
        h = (1.0 - z) * n + z * h
        r_s[t], z_s[t], n_s[t], hn_s[t], h_seq[t] = r, z, n, hn, h

    return h_seq, (r_s, z_s, n_s, hn_s)


def gru_backward(dh_seq, dh_last, x, h0, h_seq, cache, w_ih, w_hh):
    """Backward pass matching gru_forward.

    dh_seq: (T, B, H) gradient w.r.t. every hidden state; dh_last: (B, H)
    extra gradient w.r.t. the final hidden state (zeros if unused).
    Returns (dx, dh0, dw_ih, dw_hh, db_ih, db_hh).
    """
    r_s, z_s, n_s, hn_s = cache
    T, B, H = dh_seq.shape
    I = x.shape[2]

    dgi = np.empty((T, B, 3 * H))
    dw_hh = np.zeros_like(w_hh)
    db_hh = np.zeros(3 * H)
    dgh_t = np.empty((B, 3 * H))

    carry = dh_last.copy()
    for t in range(T - 1, -1, -1):
        dh = dh_seq[t] + carry
        h_prev = h_seq[t - 1] if t > 0 else h0
        r, z, n, hn = r_s[t], z_s[t], n_s[t], hn_s[t]

        dz = dh * (h_prev - n)
        da_z = dz * z * (1.0 - z)
        da_n = dh * (1.0 - z) * (1.0 - n * n)
        dghn = da_n * r
        da_r = da_n * hn * r * (1.0 - r)

        dgi[t, :, :H] = da_r
        dgi[t, :, H:2 * H] = da_z
        dgi[t, :, 2 * H:] = da_n
        dgh_t[:, :H] = da_r
        dgh_t[:, H:2 * H] = da_z
        dgh_t[:, 2 * H:] = dghn

        carry = dh * z + dgh_t @ w_hh.T
        dw_hh += h_prev.T @ dgh_t
        db_hh += dgh_t.sum(axis=0)

    dgi_flat = dgi.reshape(T * B, 3 * H)
    dx = (dgi_flat @ w_ih.T).reshape(T, B, I)
    dw_ih = x.reshape(T * B, I).T @ dgi_flat
    db_ih = dgi_flat.sum(axis=0)
    return dx, carry, dw_ih, dw_hh, db_ih, db_hh


def dtw_cost(x, y):
    """DTW alignment cost with absolute-difference local cost, full window.

    Classic DP over steps {(1,0),(0,1),(1,1)}; returns a float.
    """
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise ValueError("dtw requires non-empty sequences")
    inf = float("inf")
    prev = [inf] * (m + 1)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur = [inf] * (m + 1)
        xi = x[i - 1]
        for j in range(1, m + 1):
            c = abs(xi - y[j - 1])
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = c + best
        prev = cur
    return prev[m]
