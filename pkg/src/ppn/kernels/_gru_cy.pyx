# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled GRU sequence kernel.

Same recurrence and gradient recursion as ``gru_numpy``; the recurrent
matvecs run as axpy loops over pre-transposed weights so the compiler can
vectorize them without reassociating reductions (results stay deterministic
for a given build).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp as c_exp
from libc.math cimport tanh as c_tanh

cnp.import_array()


cdef inline double _sigmoid(double v) noexcept nogil:
    return 1.0 / (1.0 + c_exp(-v))


cdef inline void _transpose(double[:, ::1] src, double[:, ::1] dst, Py_ssize_t h) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(h):
        for j in range(h):
            dst[j, i] = src[i, j]


cdef inline void _gate_preact(double[:, ::1] w, double[:, ::1] ut,
                              double[::1] b, double[::1] xt, double[::1] hvec,
                              double[::1] out, Py_ssize_t h, Py_ssize_t d) noexcept nogil:
    # out = W x_t + U h + b, with U given transposed for contiguous axpy
    cdef Py_ssize_t i, j, k
    cdef double hj
    for i in range(h):
        out[i] = b[i]
        for k in range(d):
            out[i] += w[i, k] * xt[k]
    for j in range(h):
        hj = hvec[j]
        if hj != 0.0:
            for i in range(h):
                out[i] += ut[j, i] * hj


def gru_forward(double[:, ::1] x,
                double[:, ::1] wz, double[:, ::1] wr, double[:, ::1] wc,
                double[:, ::1] uz, double[:, ::1] ur, double[:, ::1] uc,
                double[::1] bz, double[::1] br, double[::1] bc,
                bint want_states=False):
    cdef Py_ssize_t T = x.shape[0]
    cdef Py_ssize_t D = x.shape[1]
    cdef Py_ssize_t H = bz.shape[0]
    cdef Py_ssize_t t, i

    h_seq_arr = np.empty((T, H), dtype=np.float64)
    cdef double[:, ::1] h_seq = h_seq_arr
    z_arr = np.empty((T, H), dtype=np.float64) if want_states else None
    r_arr = np.empty((T, H), dtype=np.float64) if want_states else None
    c_arr = np.empty((T, H), dtype=np.float64) if want_states else None
    cdef double[:, ::1] z_seq = z_arr if want_states else h_seq
    cdef double[:, ::1] r_seq = r_arr if want_states else h_seq
    cdef double[:, ::1] c_seq = c_arr if want_states else h_seq

    scratch = np.zeros((7, H), dtype=np.float64)
    cdef double[:, ::1] s = scratch
    cdef double[::1] h = s[0]
    cdef double[::1] az = s[1]
    cdef double[::1] ar = s[2]
    cdef double[::1] ac = s[3]
    cdef double[::1] rh = s[4]

    trans = np.empty((3 * H, H), dtype=np.float64)
    cdef double[:, ::1] tr = trans
    cdef double[:, ::1] uzT = tr[:H]
    cdef double[:, ::1] urT = tr[H:2 * H]
    cdef double[:, ::1] ucT = tr[2 * H:]
    _transpose(uz, uzT, H)
    _transpose(ur, urT, H)
    _transpose(uc, ucT, H)

    cdef double zi, ci
    with nogil:
        for t in range(T):
            _gate_preact(wz, uzT, bz, x[t], h, az, H, D)
            _gate_preact(wr, urT, br, x[t], h, ar, H, D)
            for i in range(H):
                az[i] = _sigmoid(az[i])
                ar[i] = _sigmoid(ar[i])
                rh[i] = ar[i] * h[i]
            _gate_preact(wc, ucT, bc, x[t], rh, ac, H, D)
            for i in range(H):
                zi = az[i]
                ci = c_tanh(ac[i])
                h[i] = (1.0 - zi) * h[i] + zi * ci
                h_seq[t, i] = h[i]
                if want_states:
                    z_seq[t, i] = zi
                    r_seq[t, i] = ar[i]
                    c_seq[t, i] = ci

    if want_states:
        return h_seq_arr, (z_arr, r_arr, c_arr)
    return h_seq_arr, None


def gru_backward(double[:, ::1] x,
                 double[:, ::1] wz, double[:, ::1] wr, double[:, ::1] wc,
                 double[:, ::1] uz, double[:, ::1] ur, double[:, ::1] uc,
                 double[:, ::1] h_seq,
                 double[:, ::1] z_seq, double[:, ::1] r_seq, double[:, ::1] c_seq,
                 double[::1] d_last):
    cdef Py_ssize_t T = x.shape[0]
    cdef Py_ssize_t D = x.shape[1]
    cdef Py_ssize_t H = d_last.shape[0]
    cdef Py_ssize_t t, i, j, k

    dwz_a = np.zeros((H, D))
    dwr_a = np.zeros((H, D))
    dwc_a = np.zeros((H, D))
    duz_a = np.zeros((H, H))
    dur_a = np.zeros((H, H))
    duc_a = np.zeros((H, H))
    dbz_a = np.zeros(H)
    dbr_a = np.zeros(H)
    dbc_a = np.zeros(H)
    cdef double[:, ::1] dwz = dwz_a
    cdef double[:, ::1] dwr = dwr_a
    cdef double[:, ::1] dwc = dwc_a
    cdef double[:, ::1] duz = duz_a
    cdef double[:, ::1] dur = dur_a
    cdef double[:, ::1] duc = duc_a
    cdef double[::1] dbz = dbz_a
    cdef double[::1] dbr = dbr_a
    cdef double[::1] dbc = dbc_a

    scratch = np.zeros((8, H), dtype=np.float64)
    cdef double[:, ::1] s = scratch
    cdef double[::1] dh = s[0]
    cdef double[::1] dh_prev = s[1]
    cdef double[::1] da_z = s[2]
    cdef double[::1] da_r = s[3]
    cdef double[::1] da_c = s[4]
    cdef double[::1] drh = s[5]
    cdef double[::1] hp = s[6]
    cdef double[::1] rh = s[7]

    cdef double zi, ri, ci, g
    for i in range(H):
        dh[i] = d_last[i]

    with nogil:
        for t in range(T - 1, -1, -1):
            for i in range(H):
                hp[i] = h_seq[t - 1, i] if t > 0 else 0.0
            for i in range(H):
                zi = z_seq[t, i]
                ri = r_seq[t, i]
                ci = c_seq[t, i]
                da_c[i] = dh[i] * zi * (1.0 - ci * ci)
                da_z[i] = dh[i] * (ci - hp[i]) * zi * (1.0 - zi)
                dh_prev[i] = dh[i] * (1.0 - zi)
                rh[i] = ri * hp[i]
                drh[i] = 0.0
            # dWc/dbc/dUc and drh = Uc^T da_c (rows of uc are contiguous)
            for i in range(H):
                g = da_c[i]
                dbc[i] += g
                for k in range(D):
                    dwc[i, k] += g * x[t, k]
                for j in range(H):
                    duc[i, j] += g * rh[j]
                    drh[j] += uc[i, j] * g
            for i in range(H):
                da_r[i] = drh[i] * hp[i] * r_seq[t, i] * (1.0 - r_seq[t, i])
                dh_prev[i] += drh[i] * r_seq[t, i]
            for i in range(H):
                g = da_r[i]
                dbr[i] += g
                for k in range(D):
                    dwr[i, k] += g * x[t, k]
                for j in range(H):
                    dur[i, j] += g * hp[j]
                    dh_prev[j] += ur[i, j] * g
            for i in range(H):
                g = da_z[i]
                dbz[i] += g
                for k in range(D):
                    dwz[i, k] += g * x[t, k]
                for j in range(H):
                    duz[i, j] += g * hp[j]
                    dh_prev[j] += uz[i, j] * g
            for i in range(H):
                dh[i] = dh_prev[i]

    return dwz_a, dwr_a, dwc_a, duz_a, dur_a, duc_a, dbz_a, dbr_a, dbc_a
