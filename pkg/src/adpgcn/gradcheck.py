"""Central finite-difference verification of reverse-mode gradients."""

import numpy as np

from . import tensor
from .errors import NonFiniteValue


def finite_difference_check(f, params, h=1e-5, max_coords=None, rng=None):
    """Compare AD gradients of a scalar-valued closure against central differences.

    f: deterministic zero-argument callable returning a scalar Tensor computed
       from `params` (a sequence of leaf Tensors). Re-evaluated 2 times per
       checked coordinate with the coordinate nudged by +-h.
    max_coords: optional cap on the number of coordinates checked per
       parameter; coordinates are then subsampled with `rng`.

    Returns the max over checked coordinates of
        |ad - fd| / max(1, |ad|, |fd|).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = list(params)
    for p in params:
        p.grad = None
    loss = f()
    loss.backward()
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros(p.shape) for p in params
    ]

    def eval_loss():
        with tensor.no_grad():
            value = f().item()
        if not np.isfinite(value):
            raise NonFiniteValue("finite_difference_check: f produced NaN/Inf")
        return value

    worst = 0.0
    for p, ad in zip(params, analytic):
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        ad_flat = ad.reshape(-1)
        for idx in coords:
            original = flat[idx]
            flat[idx] = original + h
            plus = eval_loss()
            flat[idx] = original - h
            minus = eval_loss()
            flat[idx] = original
            fd = (plus - minus) / (2.0 * h)
            err = abs(ad_flat[idx] - fd) / max(1.0, abs(ad_flat[idx]), abs(fd))
            worst = max(worst, err)
    return worst
