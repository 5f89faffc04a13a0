from __future__ import annotations

import numpy as np

from ..errors import NumericError
from .tensor import no_grad


def grad_check(f, inputs, h=1e-5, floor=1e-6):
    """Compare backprop gradients of scalar ``f(*inputs)`` with central differences.

    The step for each element is ``h * max(1, |x|)``. Returns the maximum
    relative error ``|a - b| / max(|a|, |b|, 1e-8)`` over all input elements.
    Inputs are switched to ``requires_grad`` so none is silently skipped.
    """
    for t in inputs:
        if t.dtype != np.float64:
            raise NumericError(f"grad_check needs float64 inputs, got {t.dtype}")
        t.data = np.ascontiguousarray(t.data)
        t.grad = None
        t.requires_grad = True
    out = f(*inputs)
    if out.size != 1:
        raise NumericError(f"grad_check: f must return a scalar, got shape {out.shape}")
    if not np.isfinite(out.data).all():
        raise NumericError("grad_check: non-finite function value")
    out.backward()
    worst = 0.0
    with no_grad():
        for t in inputs:
            analytic = np.zeros_like(t.data) if t.grad is None else t.grad.reshape(t.shape)
            flat = t.data.reshape(-1)
            if not np.isfinite(analytic).all():
                raise NumericError("grad_check: non-finite analytic gradient")
            for i in range(flat.size):
                orig = flat[i]
                step = h * max(1.0, abs(orig))
                flat[i] = orig + step
                plus = f(*inputs).item()
                flat[i] = orig - step
                minus = f(*inputs).item()
                flat[i] = orig
                if not (np.isfinite(plus) and np.isfinite(minus)):
                    raise NumericError(f"grad_check: non-finite value perturbing element {i}")
                numeric = (plus - minus) / (2.0 * step)
                a = float(analytic.reshape(-1)[i])
                err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                worst = max(worst, err)
    return worst
