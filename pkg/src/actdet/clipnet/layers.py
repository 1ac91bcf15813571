"""Forward/backward kernels for the clip classifier.

All arrays are channels-last with a leading batch axis: ``(B, T, H, W, C)``.
"""
from __future__ import annotations

import numpy as np


def conv_out_size(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


def conv3d_forward(x, w, b, stride, pad):
    """3-D convolution via an im2col matrix product.

    ``w`` has shape ``(kt, kh, kw, Cin, Cout)``. Returns the output and a cache
    for :func:`conv3d_backward`.
    """
    B, T, H, W, C = x.shape
    kt, kh, kw, cin, cout = w.shape
    if cin != C:
        raise ValueError(f"input has {C} channels, kernel expects {cin}")
    st, sh, sw = stride
    pt, ph, pw = pad
    To, Ho, Wo = conv_out_size(T, kt, st, pt), conv_out_size(H, kh, sh, ph), conv_out_size(W, kw, sw, pw)
    xp = np.pad(x, ((0, 0), (pt, pt), (ph, ph), (pw, pw), (0, 0)))
    cols = np.empty((B, To, Ho, Wo, kt, kh, kw, C), dtype=x.dtype)
    for a in range(kt):
        for c in range(kh):
            for d in range(kw):
                cols[:, :, :, :, a, c, d, :] = xp[
                    :,
                    a : a + st * (To - 1) + 1 : st,
                    c : c + sh * (Ho - 1) + 1 : sh,
                    d : d + sw * (Wo - 1) + 1 : sw,
                ]
    out = cols.reshape(-1, kt * kh * kw * C) @ w.reshape(-1, cout) + b
    return out.reshape(B, To, Ho, Wo, cout), (x.shape, xp.shape, cols)


def conv3d_backward(dout, cache, w, stride, pad, need_dx=True):
    x_shape, xp_shape, cols = cache
    kt, kh, kw, C, cout = w.shape
    B, To, Ho, Wo, _ = dout.shape
    st, sh, sw = stride
    pt, ph, pw = pad
    d2 = dout.reshape(-1, cout)
    dw = (cols.reshape(d2.shape[0], -1).T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (d2 @ w.reshape(-1, cout).T).reshape(B, To, Ho, Wo, kt, kh, kw, C)
    dxp = np.zeros(xp_shape, dtype=dout.dtype)
    for a in range(kt):
        for c in range(kh):
            for d in range(kw):
                dxp[
                    :,
                    a : a + st * (To - 1) + 1 : st,
                    c : c + sh * (Ho - 1) + 1 : sh,
                    d : d + sw * (Wo - 1) + 1 : sw,
                ] += dcols[:, :, :, :, a, c, d, :]
    _, T, H, W, _ = x_shape
    return dxp[:, pt : pt + T, ph : ph + H, pw : pw + W], dw, db


def split_rows(h: int) -> int:
    """Number of rows in the top part; odd heights give the extra row to the top."""
    return (h + 1) // 2


def part_max(S, rows: slice):
    """Max over ``(T, rows, W)`` per batch item and class, plus flat argmax indices."""
    part = S[:, :, rows, :, :]
    B, N = part.shape[0], part.shape[-1]
    flat = part.reshape(B, -1, N)
    idx = np.argmax(flat, axis=1)
    return np.take_along_axis(flat, idx[:, None, :], axis=1)[:, 0, :], idx


def part_max_backward(ds, idx, S_shape, rows: slice, dtype):
    B, T, H, W, N = S_shape
    n_rows = len(range(*rows.indices(H)))
    dflat = np.zeros((B, T * n_rows * W, N), dtype=dtype)
    np.put_along_axis(dflat, idx[:, None, :], ds[:, None, :], axis=1)
    dS = np.zeros(S_shape, dtype=dtype)
    dS[:, :, rows, :, :] = dflat.reshape(B, T, n_rows, W, N)
    return dS


def log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(z):
    return np.exp(log_softmax(z))
