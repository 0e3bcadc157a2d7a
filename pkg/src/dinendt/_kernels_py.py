"""Pure-numpy LSTM kernels.

Reference implementation of the hot loops.  The compiled extension in
``_lstm_ext`` exposes the same four functions with the same cache layout.
Gate blocks are ordered input, forget, candidate, output.
"""

import numpy as np


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_cell_forward(x, h, c, w, b):
    d = x.shape[-1]
    hid = h.shape[-1]
    z = x @ w[:d] + (h @ w[d:] + b)
    gi = _sigmoid(z[..., :hid])
    gf = _sigmoid(z[..., hid:2 * hid])
    gg = np.tanh(z[..., 2 * hid:3 * hid])
    go = _sigmoid(z[..., 3 * hid:])
    c_new = gf * c + gi * gg
    tc = np.tanh(c_new)
    h_new = go * tc
    out = np.concatenate([h_new, c_new], axis=-1)
    cache = (x, h, c, w, gi, gf, gg, go, tc)
    return out, cache


def lstm_cell_backward(cache, dh_new, dc_new):
    x, h, c, w, gi, gf, gg, go, tc = cache
    d = x.shape[-1]
    dc_tot = dc_new + dh_new * go * (1.0 - tc * tc)
    dz = np.concatenate([
        dc_tot * gg * gi * (1.0 - gi),
        dc_tot * c * gf * (1.0 - gf),
        dc_tot * gi * (1.0 - gg * gg),
        dh_new * tc * go * (1.0 - go),
    ], axis=-1)
    dx = dz @ w[:d].T
    # h and c may be broadcast along leading axes; reduce dz first
    dz_h = dz
    if h.ndim == dz.ndim:
        axes = tuple(i for i in range(h.ndim - 1) if h.shape[i] == 1 and dz.shape[i] != 1)
        if axes:
            dz_h = dz.sum(axis=axes, keepdims=True)
    dh = dz_h @ w[d:].T
    dc = dc_tot * gf
    dw = np.empty_like(w)
    dw[:d] = x.reshape(-1, d).T @ dz.reshape(-1, dz.shape[-1])
    hb = np.broadcast_to(h, dz_h.shape[:-1] + (h.shape[-1],))
    dw[d:] = hb.reshape(-1, h.shape[-1]).T @ dz_h.reshape(-1, dz.shape[-1])
    db = dz.reshape(-1, dz.shape[-1]).sum(axis=0)
    return dx, dh, dc, dw, db


def lstm_seq_forward(xs, w, b):
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    steps, batch, d = xs.shape
    hid = b.shape[0] // 4
    wh = w[d:]
    zx = xs @ w[:d] + b
    acts = np.empty((steps, batch, 4 * hid))
    hs = np.empty((steps, batch, hid))
    cs = np.empty((steps, batch, hid))
    tcs = np.empty((steps, batch, hid))
    h = np.zeros((batch, hid))
    c = np.zeros((batch, hid))
    for t in range(steps):
        z = zx[t] + h @ wh
        a = acts[t]
        a[:, :2 * hid] = _sigmoid(z[:, :2 * hid])
        a[:, 2 * hid:3 * hid] = np.tanh(z[:, 2 * hid:3 * hid])
        a[:, 3 * hid:] = _sigmoid(z[:, 3 * hid:])
        c = a[:, hid:2 * hid] * c + a[:, :hid] * a[:, 2 * hid:3 * hid]
        tc = np.tanh(c)
        h = a[:, 3 * hid:] * tc
        hs[t] = h
        cs[t] = c
        tcs[t] = tc
    out = np.concatenate([hs, cs], axis=-1)
    return out, (xs, w, acts, hs, cs, tcs)


def lstm_seq_backward(cache, dhs, dcs):
    xs, w, acts, hs, cs, tcs = cache
    steps, batch, d = xs.shape
    hid = hs.shape[2]
    wh_t = w[d:].T
    dz = np.empty_like(acts)
    dh_next = np.zeros((batch, hid))
    dc_next = np.zeros((batch, hid))
    zeros = np.zeros((batch, hid))
    for t in range(steps - 1, -1, -1):
        a = acts[t]
        gi, gf = a[:, :hid], a[:, hid:2 * hid]
        gg, go = a[:, 2 * hid:3 * hid], a[:, 3 * hid:]
        tc = tcs[t]
        c_prev = cs[t - 1] if t > 0 else zeros
        dh = dhs[t] + dh_next
        dc = dcs[t] + dc_next + dh * go * (1.0 - tc * tc)
        z = dz[t]
        z[:, :hid] = dc * gg * gi * (1.0 - gi)
        z[:, hid:2 * hid] = dc * c_prev * gf * (1.0 - gf)
        z[:, 2 * hid:3 * hid] = dc * gi * (1.0 - gg * gg)
        z[:, 3 * hid:] = dh * tc * go * (1.0 - go)
        dh_next = z @ wh_t
        dc_next = dc * gf
    flat = dz.reshape(-1, 4 * hid)
    dw = np.empty_like(w)
    dw[:d] = xs.reshape(-1, d).T @ flat
    h_prev = np.concatenate([np.zeros((1, batch, hid)), hs[:-1]], axis=0)
    dw[d:] = h_prev.reshape(-1, hid).T @ flat
    db = flat.sum(axis=0)
    dxs = dz @ w[:d].T
    return dxs, dw, db
