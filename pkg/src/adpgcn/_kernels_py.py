"""Pure numpy implementations of the hot kernels.

Same signatures as the compiled adpgcn._ckernels module; adpgcn.kernels picks
one of the two at import time. All arrays are C-contiguous float64.
"""

import numpy as np


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(x, grad):
    return np.where(x > 0.0, grad, 0.0)


def softmax_rows_fwd(x):
    # max-subtraction keeps exp() in range for large logits
    shifted = x - x.max(axis=1, keepdims=True)
    out = np.exp(shifted)
    out /= out.sum(axis=1, keepdims=True)
    return out


def softmax_rows_bwd(y, grad):
    dot = (y * grad).sum(axis=1, keepdims=True)
    return y * (grad - dot)


def layer_norm_fwd(x, gain, bias, eps):
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=1)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std[:, None]
    return xhat * gain + bias, xhat, inv_std


def layer_norm_bwd(grad, xhat, inv_std, gain):
    dgain = (grad * xhat).sum(axis=0)
    dbias = grad.sum(axis=0)
    dxhat = grad * gain
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = inv_std[:, None] * (dxhat - m1 - xhat * m2)
    return dx, dgain, dbias


def adam_update(param, grad, m, v, step, lr, beta1, beta2, eps):
    # in-place on param, m, v; step is the already-incremented counter
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
