"""Shared test oracles: central finite differences and kink-aware checks.

The FD oracle only ever calls forward evaluations, so it stays independent
of the reverse-mode path it validates.
"""

import numpy as np

from voxgan.tensor import Tensor


def rel_err(a, b):
    """Worst-case elementwise relative error with a unit floor."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def fd_grad(f, x, h=1e-5):
    """Central finite differences of scalar f over every entry of array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def fd_grad_params(loss_fn, params, h=1e-5, coords=None):
    """FD gradient of loss_fn() w.r.t. leaf parameter tensors, in place.

    Returns {tensor: fd array}. `coords` limits each parameter to a subset
    of flat coordinates (list of ints) for speed; omitted entries are NaN.
    """
    out = {}
    for p in params:
        base = p.data.copy()
        flat = base.reshape(-1)
        fd = np.full(flat.size, np.nan)
        idxs = range(flat.size) if coords is None else coords
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            p.assign_(base)
            fp = loss_fn()
            flat[i] = orig - h
            p.assign_(base)
            fm = loss_fn()
            flat[i] = orig
            fd[i] = (fp - fm) / (2 * h)
        p.assign_(base)
        out[p] = fd.reshape(p.shape)
    return out


def compare_fd(ad, fd):
    """Worst relative error over coordinates the FD oracle actually probed."""
    mask = np.isfinite(fd)
    return rel_err(np.asarray(ad)[mask], np.asarray(fd)[mask])


def away_from_kinks(arrays, margin):
    """True when no entry sits within `margin` of zero (relu/leaky kinks)."""
    return all(np.abs(np.asarray(a)).min() > margin for a in arrays if np.asarray(a).size)


def nudge_from_kinks(x, margin):
    """Push entries of x out of the +-margin band around zero."""
    x = np.asarray(x, dtype=np.float64).copy()
    small = np.abs(x) < margin
    x[small] = np.where(x[small] >= 0, margin, -margin) * 1.5
    return x


def as_tensor(x, requires_grad=False):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=requires_grad)
