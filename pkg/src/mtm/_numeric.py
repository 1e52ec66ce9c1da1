import numpy as np


def logsumexp(a, axis=None):
    """``log(sum(exp(a)))`` along ``axis``; all ``-inf`` gives ``-inf``.

    Small-array replacement for ``scipy.special.logsumexp``, whose dispatch
    overhead dominates a sampler step.
    """
    a = np.asarray(a, dtype=float)
    if axis is None:
        m = a.max()
        if not np.isfinite(m):
            return float(m)
        return float(m + np.log(np.exp(a - m).sum()))
    m = a.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(a - m).sum(axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)
