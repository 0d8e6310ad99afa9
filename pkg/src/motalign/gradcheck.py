"""Central finite-difference oracle for checking tape gradients."""

import numpy as np

from .autodiff import Tape, backward, no_grad


def numerical_grad(fn, tensors, eps=1e-5, max_entries=None, rng=None):
    """Central differences of scalar ``fn()`` w.r.t. entries of ``tensors``.

    ``fn`` takes no arguments and reads the tensors' current values. When
    ``max_entries`` is set, only that many entries per tensor (chosen by
    ``rng``) are probed; the rest are reported as NaN.
    """
    out = []
    for t in tensors:
        g = np.full(t.shape, np.nan)
        flat = t.data.reshape(-1)
        picks = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            rng = rng or np.random.default_rng(0)
            picks = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        gflat = g.reshape(-1)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + eps
            with no_grad():
                fp = float(fn().data)
            flat[i] = orig - eps
            with no_grad():
                fm = float(fn().data)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * eps)
        out.append(g)
    return out


def tape_grad(fn, tensors):
    """Gradients of scalar ``fn()`` from the tape, one array per tensor."""
    saved = [t.requires_grad for t in tensors]
    for t in tensors:
        t.requires_grad = True
        t.grad = None
    with Tape() as tape:
        loss = fn()
    backward(loss, tape)
    grads = [t.grad.copy() for t in tensors]
    for t, s in zip(tensors, saved):
        t.requires_grad = s
        t.grad = None
    return grads


def relative_error(analytic, numeric):
    """``|a - n| / max(|a|, |n|)`` over the probed (non-NaN) entries."""
    a = np.concatenate([np.asarray(x).reshape(-1) for x in analytic])
    n = np.concatenate([np.asarray(x).reshape(-1) for x in numeric])
    keep = ~np.isnan(n)
    a, n = a[keep], n[keep]
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-300)
    return float(np.linalg.norm(a - n) / scale)


def check_gradients(fn, tensors, eps=1e-5, max_entries=None, seed=0):
    """Return the relative error between tape and finite-difference gradients."""
    analytic = tape_grad(fn, tensors)
    numeric = numerical_grad(fn, tensors, eps=eps, max_entries=max_entries, rng=np.random.default_rng(seed))
    return relative_error(analytic, numeric)
