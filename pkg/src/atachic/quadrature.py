"""Composite trapezoid weights on the uniform node grid."""

import numpy as np


def tail_weights(m):
    """Weights W with ``(W @ f)[i] ~ integral of f over [x_i, 1]``.

    Row i carries trapezoid weights on nodes i..m; row m is empty.
    """
    h = 1.0 / m
    w = np.triu(np.full((m + 1, m + 1), h))
    idx = np.arange(m + 1)
    w[idx, idx] = 0.5 * h
    w[:, m] = 0.5 * h
    w[m, m] = 0.0
    return np.triu(w)


def trapz(f, h):
    f = np.asarray(f)
    return h * (f.sum(axis=-1) - 0.5 * (f[..., 0] + f[..., -1]))


def cumtrapz0(f, h):
    """Running trapezoid integral from x_0, same length as ``f`` (starts at 0)."""
    f = np.asarray(f, dtype=float)
    out = np.zeros_like(f)
    out[..., 1:] = np.cumsum(0.5 * h * (f[..., 1:] + f[..., :-1]), axis=-1)
    return out


def l2_norm(f, h):
    """Trapezoid L2 norm over the last axis, summed over leading axes."""
    f = np.asarray(f, dtype=float)
    return float(np.sqrt(np.sum(trapz(f * f, h))))
