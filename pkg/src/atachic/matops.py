"""Small dense matrix helpers: exponential, eigenvalue real parts, decay margin.

Everything here targets the tiny matrices (n <= 64) that describe the
zero-speed block, so clarity wins over speed.
"""

import math

import numpy as np

MAX_ORDER = 64


class EigenIterationError(ArithmeticError):
    """Raised when the shifted QR iteration fails to deflate."""


def as_square(a):
    a = np.array(a, dtype=float, ndmin=2)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
    if a.shape[0] > MAX_ORDER:
        raise ValueError(f"matrix order {a.shape[0]} exceeds {MAX_ORDER}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def expm(a, s=1.0):
    """Return ``exp(a * s)`` by scaling and squaring a truncated Taylor series.

    The argument is scaled by ``2**-j`` until its infinity norm is at most
    1/2, the series is summed until terms drop below machine precision
    relative to the partial sum, and the result is squared ``j`` times.
    """
    a = as_square(a)
    s = float(s)
    if not math.isfinite(s):
        raise ValueError("scale s must be finite")
    n = a.shape[0]
    b = a * s
    norm = np.abs(b).sum(axis=1).max()
    if norm == 0.0:
        return np.eye(n)
    j = max(0, math.ceil(math.log2(norm / 0.5)))
    b = b / 2.0**j

    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, 40):
        term = term @ b / k
        result = result + term
        if np.abs(term).max() <= 1e-18 * np.abs(result).max():
            break
    for _ in range(j):
        result = result @ result
    return result


def hessenberg(a):
    """Reduce ``a`` to upper Hessenberg form with Householder reflections."""
    h = as_square(a).copy()
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        if x[0] > 0:
            alpha = -alpha
        v = x
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            continue
        v /= vnorm
        h[k + 1:, :] -= 2.0 * np.outer(v, v @ h[k + 1:, :])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h


def _wilkinson_shift(block):
    a, b, c, d = block[-2, -2], block[-2, -1], block[-1, -2], block[-1, -1]
    half_tr = 0.5 * (a + d)
    disc = np.sqrt(half_tr * half_tr - (a * d - b * c) + 0j)
    mu1, mu2 = half_tr + disc, half_tr - disc
    return mu1 if abs(mu1 - d) < abs(mu2 - d) else mu2


def _qr_step(block, mu):
    k = block.shape[0]
    a = block - mu * np.eye(k)
    rotations = []
    for i in range(k - 1):
        x, y = a[i, i], a[i + 1, i]
        r = math.hypot(abs(x), abs(y))
        if r == 0.0:
            g = np.eye(2, dtype=complex)
        else:
            c, s = x / r, y / r
            g = np.array([[np.conj(c), np.conj(s)], [-s, c]])
        a[i:i + 2, i:] = g @ a[i:i + 2, i:]
        rotations.append(g)
    for i, g in enumerate(rotations):
        a[:i + 2, i:i + 2] = a[:i + 2, i:i + 2] @ g.conj().T
    return a + mu * np.eye(k)


def eigenvalues(a, max_sweeps=200):
    """All eigenvalues of ``a`` (complex), by Hessenberg reduction and shifted QR."""
    a = as_square(a)
    norm = np.abs(a).max()
    if norm == 0.0:
        return np.zeros(a.shape[0], dtype=complex)
    # unit scale keeps the deflation test away from the subnormal range
    h = hessenberg(a / norm).astype(complex)
    n = h.shape[0]
    eps = np.finfo(float).eps
    found = []
    hi = n - 1
    stalled = 0
    total = 0
    while hi >= 0:
        if hi == 0:
            found.append(h[0, 0])
            break
        lo = hi
        while lo > 0:
            scale = abs(h[lo, lo]) + abs(h[lo - 1, lo - 1])
            if abs(h[lo, lo - 1]) <= eps * max(scale, 1e-3):
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            found.append(h[hi, hi])
            hi -= 1
            stalled = 0
            continue
        stalled += 1
        total += 1
        if total > max_sweeps * n:
            raise EigenIterationError(
                f"QR iteration did not converge after {total} sweeps "
                f"(active block {lo}:{hi + 1})")
        block = h[lo:hi + 1, lo:hi + 1]
        if stalled % 11 == 0:
            # exceptional shift breaks symmetric stalls
            mu = block[-1, -1] + 0.75 * abs(block[-1, -2])
        else:
            mu = _wilkinson_shift(block)
        h[lo:hi + 1, lo:hi + 1] = _qr_step(block, mu)
    return np.array(found[::-1]) * norm


def eigen_real_parts(a):
    """Sorted real parts of the eigenvalues of ``a`` (repeats kept)."""
    return np.sort(eigenvalues(a).real)


def is_hurwitz(a):
    return bool(eigen_real_parts(a)[-1] < 0.0)


def sym_decay_margin(a):
    """Coercivity constant of ``-a``.

    Returns ``-lambda_max((a + a.T) / 2)`` when the symmetric part is
    negative definite, so that ``v @ a @ v <= -margin * |v|**2``; returns
    None otherwise.
    """
    a = as_square(a)
    sym = 0.5 * (a + a.T)
    top = eigen_real_parts(sym)[-1]
    if top < 0.0:
        return float(-top)
    return None
