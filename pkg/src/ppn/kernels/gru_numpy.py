"""Pure-numpy GRU sequence kernel.

Reference implementation of the recurrence used by the per-indicator
encoder channels:

    z_t = sigmoid(Wz x_t + Uz h_{t-1} + bz)
    r_t = sigmoid(Wr x_t + Ur h_{t-1} + br)
    c_t = tanh(Wc x_t + Uc (r_t * h_{t-1}) + bc)
    h_t = (1 - z_t) * h_{t-1} + z_t * c_t,   h_0 = 0

The compiled extension in ``_gru_cy`` mirrors these formulas; outputs agree
to floating-point roundoff (summation order differs), never bit-for-bit.

``gru_backward`` propagates the gradient of a scalar objective with respect
to the *final* hidden state back onto the nine parameter arrays.  Gradients
with respect to the inputs are not computed: channel inputs are observed
data, never the output of another differentiable op.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(a: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-a))


def gru_forward(x, wz, wr, wc, uz, ur, uc, bz, br, bc, want_states=False):
    """Run the recurrence over ``x`` of shape (T, D).

    Returns ``(h_seq, states)`` where ``h_seq`` is the (T, H) array of hidden
    states (row t is the state after consuming visit t) and ``states`` is the
    (z, r, c) cache required by :func:`gru_backward`, or ``None`` when
    ``want_states`` is false.
    """
    T = x.shape[0]
    H = bz.shape[0]
    h_seq = np.empty((T, H))
    if want_states:
        z_seq = np.empty((T, H))
        r_seq = np.empty((T, H))
        c_seq = np.empty((T, H))
    h = np.zeros(H)
    for t in range(T):
        xt = x[t]
        z = _sigmoid(wz @ xt + uz @ h + bz)
        r = _sigmoid(wr @ xt + ur @ h + br)
        c = np.tanh(wc @ xt + uc @ (r * h) + bc)
        h = (1.0 - z) * h + z * c
        h_seq[t] = h
        if want_states:
            z_seq[t] = z
            r_seq[t] = r
            c_seq[t] = c
    if want_states:
        return h_seq, (z_seq, r_seq, c_seq)
    return h_seq, None


def gru_backward(x, wz, wr, wc, uz, ur, uc, h_seq, z_seq, r_seq, c_seq, d_last):
    """Backpropagate ``d_last`` (gradient w.r.t. h_T) through the recurrence.

    Returns gradients in parameter order:
    (dwz, dwr, dwc, duz, dur, duc, dbz, dbr, dbc).
    """
    T, H = h_seq.shape
    dwz = np.zeros_like(wz)
    dwr = np.zeros_like(wr)
    dwc = np.zeros_like(wc)
    duz = np.zeros_like(uz)
    dur = np.zeros_like(ur)
    duc = np.zeros_like(uc)
    dbz = np.zeros(H)
    dbr = np.zeros(H)
    dbc = np.zeros(H)

    dh = np.asarray(d_last, dtype=np.float64).copy()
    for t in range(T - 1, -1, -1):
        h_prev = h_seq[t - 1] if t > 0 else np.zeros(H)
        z = z_seq[t]
        r = r_seq[t]
        c = c_seq[t]
        xt = x[t]

        dz = dh * (c - h_prev)
        dc = dh * z
        dh_prev = dh * (1.0 - z)

        da_c = dc * (1.0 - c * c)
        dwc += np.outer(da_c, xt)
        dbc += da_c
        rh = r * h_prev
        duc += np.outer(da_c, rh)
        drh = uc.T @ da_c
        dr = drh * h_prev
        dh_prev += drh * r

        da_r = dr * r * (1.0 - r)
        dwr += np.outer(da_r, xt)
        dbr += da_r
        dur += np.outer(da_r, h_prev)
        dh_prev += ur.T @ da_r

        da_z = dz * z * (1.0 - z)
        dwz += np.outer(da_z, xt)
        dbz += da_z
        duz += np.outer(da_z, h_prev)
        dh_prev += uz.T @ da_z

        dh = dh_prev

    return dwz, dwr, dwc, duz, dur, duc, dbz, dbr, dbc
