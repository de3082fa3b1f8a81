"""Numpy building blocks for the mask network, each with an explicit backward.

All ops are functional: forward returns (output, cache) and backward takes
(grad_out, cache), so eval-mode inference stays pure and thread-safe.
"""

from __future__ import annotations

import numpy as np


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """(N, C, H, W) -> patches (N, OH, OW, C, kh, kw)."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    s0, s1, s2, s3 = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, oh, ow, kh, kw),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3),
    )
    return np.ascontiguousarray(view.transpose(0, 2, 3, 1, 4, 5))


def col2im(
    cols: np.ndarray,
    out_shape: tuple[int, int, int, int],
    stride: int,
    pad: int,
) -> np.ndarray:
    """Scatter-add patches (N, OH, OW, C, kh, kw) back to (N, C, H, W)."""
    n, c, h, w = out_shape
    oh, ow, kh, kw = cols.shape[1], cols.shape[2], cols.shape[4], cols.shape[5]
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    csrc = cols.transpose(0, 3, 1, 2, 4, 5)  # (N, C, OH, OW, kh, kw)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i: i + stride * oh: stride, j: j + stride * ow: stride] += (
                csrc[:, :, :, :, i, j]
            )
    if pad:
        return xp[:, :, pad:-pad, pad:-pad]
    return xp


def conv2d_forward(x, weight, bias, stride, pad):
    """weight: (F, C, kh, kw); returns y (N, F, OH, OW)."""
    f, c, kh, kw = weight.shape
    cols = im2col(x, kh, kw, stride, pad)
    n, oh, ow = cols.shape[:3]
    flat = cols.reshape(n * oh * ow, c * kh * kw)
    y = flat @ weight.reshape(f, -1).T + bias
    cache = (flat, x.shape, weight, stride, pad, (n, oh, ow))
    return y.reshape(n, oh, ow, f).transpose(0, 3, 1, 2), cache


def conv2d_backward(dy, cache):
    flat, x_shape, weight, stride, pad, (n, oh, ow) = cache
    f, c, kh, kw = weight.shape
    dyf = dy.transpose(0, 2, 3, 1).reshape(n * oh * ow, f)
    dw = (dyf.T @ flat).reshape(weight.shape)
    db = dyf.sum(axis=0)
    dcols = (dyf @ weight.reshape(f, -1)).reshape(n, oh, ow, c, kh, kw)
    dx = col2im(dcols, x_shape, stride, pad)
    return dx, dw, db


def deconv2d_forward(x, weight, bias, stride, pad, out_pad):
    """weight: (C, F, kh, kw); output spatial = (in-1)*stride - 2*pad + k + out_pad."""
    n, c, h, w = x.shape
    _, f, kh, kw = weight.shape
    out_h = (h - 1) * stride - 2 * pad + kh + out_pad
    out_w = (w - 1) * stride - 2 * pad + kw + out_pad
    cols = (
        x.transpose(0, 2, 3, 1).reshape(n * h * w, c) @ weight.reshape(c, -1)
    ).reshape(n, h, w, f, kh, kw)
    canvas_h = (h - 1) * stride + kh
    canvas_w = (w - 1) * stride + kw
    canvas = col2im(cols, (n, f, canvas_h, canvas_w), stride, pad=0)
    y = canvas[:, :, pad: pad + out_h, pad: pad + out_w] + bias[None, :, None, None]
    cache = (x, weight, stride, pad, (canvas_h, canvas_w), (out_h, out_w))
    return y, cache


def deconv2d_backward(dy, cache):
    x, weight, stride, pad, (canvas_h, canvas_w), (out_h, out_w) = cache
    n, c, h, w = x.shape
    _, f, kh, kw = weight.shape
    dcanvas = np.zeros((n, f, canvas_h, canvas_w), dtype=dy.dtype)
    dcanvas[:, :, pad: pad + out_h, pad: pad + out_w] = dy
    patches = im2col(dcanvas, kh, kw, stride, pad=0)  # (N, H, W, F, kh, kw)
    pf = patches.reshape(n * h * w, f * kh * kw)
    dx = (pf @ weight.reshape(c, -1).T).reshape(n, h, w, c).transpose(0, 3, 1, 2)
    x_flat = x.transpose(0, 2, 3, 1).reshape(n * h * w, c)
    dw = (x_flat.T @ pf).reshape(weight.shape)
    db = dy.sum(axis=(0, 2, 3))
    return dx, dw, db


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train, eps=1e-5,
                      momentum=0.9):
    """Per-channel normalization over (N, H, W).

    Train mode uses batch statistics and updates the running buffers in
    place; eval mode reads the buffers and touches nothing.
    """
    if train:
        mu = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu[None, :, None, None]) * inv_std[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    cache = (xhat, inv_std, gamma)
    return y, cache


def batchnorm_backward(dy, cache):
    xhat, inv_std, gamma = cache
    m = dy.shape[0] * dy.shape[2] * dy.shape[3]
    dgamma = (dy * xhat).sum(axis=(0, 2, 3))
    dbeta = dy.sum(axis=(0, 2, 3))
    dxhat = dy * gamma[None, :, None, None]
    sum_dxhat = dxhat.sum(axis=(0, 2, 3))
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3))
    dx = (inv_std[None, :, None, None] / m) * (
        m * dxhat
        - sum_dxhat[None, :, None, None]
        - xhat * sum_dxhat_xhat[None, :, None, None]
    )
    return dx, dgamma, dbeta


def leaky_relu_forward(x, slope):
    y = np.where(x > 0, x, slope * x)
    return y, (x > 0, slope)


def leaky_relu_backward(dy, cache):
    pos, slope = cache
    return np.where(pos, dy, slope * dy)


def sigmoid_forward(x):
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return y, y


def sigmoid_backward(dy, y):
    return dy * y * (1.0 - y)


def dropout_forward(x, p, rng: np.random.Generator):
    if p <= 0.0:
        return x, None
    keep = rng.random(x.shape) >= p
    scale = 1.0 / (1.0 - p)
    return x * keep * scale, (keep, scale)


def dropout_backward(dy, cache):
    if cache is None:
        return dy
    keep, scale = cache
    return dy * keep * scale
