# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: GRU layer forward/backward over a sequence, and DTW.

Same contract as the pure-numpy fallback (see fallback.py for the cell
equations and argument shapes). Matrix products go through BLAS dgemm;
the gate math is fused into C loops.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh, fabs, INFINITY
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _sigmoid(double a) nogil:
    cdef double e
    if a >= 0.0:
        return 1.0 / (1.0 + exp(-a))
    e = exp(a)
    return e / (1.0 + e)


# Row-major helpers on top of Fortran-order dgemm. For row-major A (M,K),
# B (K,N), C (M,N): C = A@B is computed as the column-major product
# C^T = B^T A^T using the untransposed data pointers.

cdef void _mm(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
              double beta) nogil:
    # c = a @ b + beta * c
    cdef int m = a.shape[0], k = a.shape[1], n = b.shape[1]
    cdef double alpha = 1.0
    dgemm("n", "n", &n, &m, &k, &alpha, &b[0, 0], &n, &a[0, 0], &k,
          &beta, &c[0, 0], &n)


cdef void _mm_bt(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
                 double beta) nogil:
    # c = a @ b.T + beta * c ; a is (M,K), b is (N,K), c is (M,N)
    cdef int m = a.shape[0], k = a.shape[1], n = b.shape[0]
    cdef double alpha = 1.0
    dgemm("t", "n", &n, &m, &k, &alpha, &b[0, 0], &k, &a[0, 0], &k,
          &beta, &c[0, 0], &n)


cdef void _mm_at(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
                 double beta) nogil:
    # c = a.T @ b + beta * c ; a is (K,M), b is (K,N), c is (M,N)
    cdef int k = a.shape[0], m = a.shape[1], n = b.shape[1]
    cdef double alpha = 1.0
    dgemm("n", "t", &n, &m, &k, &alpha, &b[0, 0], &n, &a[0, 0], &m,
          &beta, &c[0, 0], &n)


def gru_forward(cnp.ndarray x_in, cnp.ndarray h0_in, cnp.ndarray w_ih_in,
                cnp.ndarray w_hh_in, cnp.ndarray b_ih_in, cnp.ndarray b_hh_in):
    cdef double[:, :, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef double[:, ::1] h0 = np.ascontiguousarray(h0_in, dtype=np.float64)
    cdef double[:, ::1] w_ih = np.ascontiguousarray(w_ih_in, dtype=np.float64)
    cdef double[:, ::1] w_hh = np.ascontiguousarray(w_hh_in, dtype=np.float64)
    cdef double[::1] b_ih = np.ascontiguousarray(b_ih_in, dtype=np.float64)
    cdef double[::1] b_hh = np.ascontiguousarray(b_hh_in, dtype=np.float64)

    cdef Py_ssize_t T = x.shape[0], B = x.shape[1], I = x.shape[2]
    cdef Py_ssize_t H = h0.shape[1]

    # Input-side product for all timesteps in one BLAS call.
    gi_arr = (np.asarray(x).reshape(T * B, I)
              @ np.asarray(w_ih)).reshape(T, B, 3 * H)
    cdef double[:, :, ::1] gi = gi_arr

    h_seq_arr = np.empty((T, B, H))
    r_arr = np.empty((T, B, H))
    z_arr = np.empty((T, B, H))
    n_arr = np.empty((T, B, H))
    hn_arr = np.empty((T, B, H))
    gh_arr = np.empty((B, 3 * H))
    cdef double[:, :, ::1] h_seq = h_seq_arr
    cdef double[:, :, ::1] r_s = r_arr
    cdef double[:, :, ::1] z_s = z_arr
    cdef double[:, :, ::1] n_s = n_arr
    cdef double[:, :, ::1] hn_s = hn_arr
    cdef double[:, ::1] gh = gh_arr

    cdef double[:, ::1] h_prev = h0
    cdef Py_ssize_t t, b, j
    cdef double r, z, hn, n, hp

    with nogil:
        for t in range(T):
            _mm(h_prev, w_hh, gh, 0.0)
            for b in range(B):
                for j in range(H):
                    hp = h_prev[b, j]
                    r = _sigmoid(gi[t, b, j] + b_ih[j] + gh[b, j] + b_hh[j])
                    z = _sigmoid(gi[t, b, H + j] + b_ih[H + j]
                                 + gh[b, H + j] + b_hh[H + j])
                    hn = gh[b, 2 * H + j] + b_hh[2 * H + j]
                    n = tanh(gi[t, b, 2 * H + j] + b_ih[2 * H + j] + r * hn)
                    r_s[t, b, j] = r
                    z_s[t, b, j] = z
                    hn_s[t, b, j] = hn
                    n_s[t, b, j] = n
                    h_seq[t, b, j] = (1.0 - z) * n + z * hp
            h_prev = h_seq[t]

    return h_seq_arr, (r_arr, z_arr, n_arr, hn_arr)


def gru_backward(cnp.ndarray dh_seq_in, cnp.ndarray dh_last_in,
                 cnp.ndarray x_in, cnp.ndarray h0_in, cnp.ndarray h_seq_in,
                 tuple cache, cnp.ndarray w_ih_in, cnp.ndarray w_hh_in):
    cdef double[:, :, ::1] dh_seq = np.ascontiguousarray(dh_seq_in, dtype=np.float64)
    cdef double[:, :, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef double[:, ::1] h0 = np.ascontiguousarray(h0_in, dtype=np.float64)
    cdef double[:, :, ::1] h_seq = np.ascontiguousarray(h_seq_in, dtype=np.float64)
    cdef double[:, ::1] w_ih = np.ascontiguousarray(w_ih_in, dtype=np.float64)
    cdef double[:, ::1] w_hh = np.ascontiguousarray(w_hh_in, dtype=np.float64)
    cdef double[:, :, ::1] r_s = cache[0]
    cdef double[:, :, ::1] z_s = cache[1]
    cdef double[:, :, ::1] n_s = cache[2]
    cdef double[:, :, ::1] hn_s = cache[3]

    cdef Py_ssize_t T = dh_seq.shape[0], B = dh_seq.shape[1], H = dh_seq.shape[2]
    cdef Py_ssize_t I = x.shape[2]

    dgi_arr = np.empty((T, B, 3 * H))
    carry_arr = np.ascontiguousarray(dh_last_in, dtype=np.float64).copy()
    dgh_arr = np.empty((B, 3 * H))
    dw_hh_arr = np.zeros((H, 3 * H))
    db_hh_arr = np.zeros(3 * H)
    cdef double[:, :, ::1] dgi = dgi_arr
    cdef double[:, ::1] carry = carry_arr
    cdef double[:, ::1] dgh = dgh_arr
    cdef double[:, ::1] dw_hh = dw_hh_arr
    cdef double[::1] db_hh = db_hh_arr

    cdef double[:, ::1] h_prev
    cdef Py_ssize_t t, b, j
    cdef double dh, r, z, n, hn, dz, da_z, da_n, dghn, da_r

    with nogil:
        for t in range(T - 1, -1, -1):
            if t > 0:
                h_prev = h_seq[t - 1]
            else:
                h_prev = h0
            for b in range(B):
                for j in range(H):
                    dh = dh_seq[t, b, j] + carry[b, j]
                    r = r_s[t, b, j]
                    z = z_s[t, b, j]
                    n = n_s[t, b, j]
                    hn = hn_s[t, b, j]
                    dz = dh * (h_prev[b, j] - n)
                    da_z = dz * z * (1.0 - z)
                    da_n = dh * (1.0 - z) * (1.0 - n * n)
                    dghn = da_n * r
                    da_r = da_n * hn * r * (1.0 - r)
                    dgi[t, b, j] = da_r
                    dgi[t, b, H + j] = da_z
                    dgi[t, b, 2 * H + j] = da_n
                    dgh[b, j] = da_r
                    dgh[b, H + j] = da_z
                    dgh[b, 2 * H + j] = dghn
                    carry[b, j] = dh * z
                    db_hh[j] += da_r
                    db_hh[H + j] += da_z
                    db_hh[2 * H + j] += dghn
            _mm_bt(dgh, w_hh, carry, 1.0)
            _mm_at(h_prev, dgh, dw_hh, 1.0)

    dgi_flat = dgi_arr.reshape(T * B, 3 * H)
    x_flat = np.asarray(x).reshape(T * B, I)
    dx = (dgi_flat @ np.asarray(w_ih).T).reshape(T, B, I)
    dw_ih = x_flat.T @ dgi_flat
    db_ih = dgi_flat.sum(axis=0)
    return dx, carry_arr, dw_ih, dw_hh_arr, db_ih, db_hh_arr


def dtw_cost(x_in, y_in):
    cdef double[::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef double[::1] y = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0]
    if n == 0 or m == 0:
        raise ValueError("dtw requires non-empty sequences")

    prev_arr = np.full(m + 1, np.inf)
    cur_arr = np.full(m + 1, np.inf)
    cdef double[::1] prev = prev_arr
    cdef double[::1] cur = cur_arr
    cdef double[::1] tmp
    cdef Py_ssize_t i, j
    cdef double best, xi

    prev[0] = 0.0
    with nogil:
        for i in range(1, n + 1):
            cur[0] = INFINITY
            xi = x[i - 1]
            for j in range(1, m + 1):
                best = prev[j - 1]
                if prev[j] < best:
                    best = prev[j]
                if cur[j - 1] < best:
                    best = cur[j - 1]
                cur[j] = fabs(xi - y[j - 1]) + best
            tmp = prev
            prev = cur
            cur = tmp
    return float(prev[m])
