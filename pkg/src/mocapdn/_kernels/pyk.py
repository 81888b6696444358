"""Numpy implementations of the hot kernels.

This is the fallback lane used when the compiled extension is unavailable
(or when MOCAPDN_BACKEND=python). Same call signatures and semantics as
the compiled lane; reduction order may differ in the last few ulps.
"""

import numpy as np

BACKEND = "python"


def softmax_rows(x):
    """Row-wise softmax of a 2-D array, max-subtracted for stability."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_grad(y, gy):
    """Gradient of row softmax: gx = y * (gy - sum(gy * y, row))."""
    dot = (gy * y).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def layer_norm_rows(x, gamma, beta, eps):
    """Row-wise layer norm with affine.

    Returns (y, xhat, rstd) where xhat is the normalized input and rstd
    the reciprocal standard deviation, both kept for the backward pass.
    Variance is the population variance (divide by d).
    """
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = centered * rstd
    y = gamma * xhat + beta
    return y, xhat, rstd[:, 0].copy()


def layer_norm_rows_grad(xhat, rstd, gamma, gy):
    """Backward of layer_norm_rows. Returns (gx, ggamma, gbeta)."""
    ggamma = (gy * xhat).sum(axis=0)
    gbeta = gy.sum(axis=0)
    gxhat = gy * gamma
    m1 = gxhat.mean(axis=1, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=1, keepdims=True)
    gx = rstd[:, None] * (gxhat - m1 - xhat * m2)
    return gx, ggamma, gbeta


def adam_update(param, grad, m, v, t, lr, beta1, beta2, eps):
    """Fused in-place Adam step on flat 1-D views (bias-corrected).

    Denominator is sqrt(vhat + eps), matching the step-1 reference value
    in the test suite.
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    param -= lr * mhat / np.sqrt(vhat + eps)
