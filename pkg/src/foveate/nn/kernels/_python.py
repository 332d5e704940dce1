"""NumPy implementations of the convolution/pooling hot kernels.

These are the fallback for the compiled extension in ``_ckernels.pyx``.
Layout is NHWC; weights are (kh, kw, cin, cout); everything is float64.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

BACKEND_NAME = "python"


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int):
    n, _, _, c = xp.shape
    sn, sh, sw, sc = xp.strides
    view = as_strided(
        xp,
        shape=(n, oh, ow, kh, kw, c),
        strides=(sn, sh * stride, sw * stride, sh, sw, sc),
        writeable=False,
    )
    return np.ascontiguousarray(view).reshape(n * oh * ow, kh * kw * c)


def conv2d_forward(x, w, stride, pad):
    n, h, wd, cin = x.shape
    kh, kw, wcin, cout = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    y = cols @ w.reshape(kh * kw * wcin, cout)
    return y.reshape(n, oh, ow, cout)


def conv2d_backward(x, w, gy, stride, pad):
    n, h, wd, cin = x.shape
    kh, kw, _, cout = w.shape
    _, oh, ow, _ = gy.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    gy_mat = gy.reshape(n * oh * ow, cout)
    gw = (cols.T @ gy_mat).reshape(w.shape)
    gcols = (gy_mat @ w.reshape(kh * kw * cin, cout).T).reshape(
        n, oh, ow, kh, kw, cin
    )
    gxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            gxp[:, i : i + oh * stride : stride, j : j + ow * stride : stride, :] += (
                gcols[:, :, :, i, j, :]
            )
    gx = gxp[:, pad : pad + h, pad : pad + wd, :] if pad else gxp
    return gx, gw


def _pool_view(x, k, stride, oh, ow):
    n, _, _, c = x.shape
    sn, sh, sw, sc = x.strides
    return as_strided(
        x,
        shape=(n, oh, ow, k, k, c),
        strides=(sn, sh * stride, sw * stride, sh, sw, sc),
        writeable=False,
    )


def maxpool_forward(x, k, stride):
    n, h, w, c = x.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    win = _pool_view(x, k, stride, oh, ow).reshape(n, oh, ow, k * k, c)
    idx = win.argmax(axis=3).astype(np.int64)
    y = np.take_along_axis(win, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return np.ascontiguousarray(y), idx


def maxpool_backward(x_shape, idx, gy, k, stride):
    n, h, w, c = x_shape
    _, oh, ow, _ = gy.shape
    gx = np.zeros(x_shape, dtype=np.float64)
    for pos in range(k * k):
        i, j = divmod(pos, k)
        mask = idx == pos
        gx[:, i : i + oh * stride : stride, j : j + ow * stride : stride, :] += (
            gy * mask
        )
    return gx


def avgpool_forward(x, k, stride):
    n, h, w, c = x.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    win = _pool_view(x, k, stride, oh, ow)
    return win.mean(axis=(3, 4))


def avgpool_backward(x_shape, gy, k, stride):
    n, h, w, c = x_shape
    _, oh, ow, _ = gy.shape
    g = gy / (k * k)
    gx = np.zeros(x_shape, dtype=np.float64)
    for i in range(k):
        for j in range(k):
            gx[:, i : i + oh * stride : stride, j : j + ow * stride : stride, :] += g
    return gx
