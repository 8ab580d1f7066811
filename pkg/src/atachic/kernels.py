"""Direct backstepping kernels on the triangle 0 <= x <= xi <= 1.

Fields are stored as full (m+1, m+1) arrays indexed ``[i, j]`` for the node
``(x_i, xi_j)``; only ``i <= j`` is meaningful and the lower part is zero.
``G`` and ``R`` carry a trailing axis of length n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import matops
from .model import validate_config


class KernelConvergenceError(RuntimeError):
    def __init__(self, iterations, last_change):
        self.iterations = iterations
        self.last_change = last_change
        super().__init__(
            f"kernel iteration did not converge in {iterations} sweeps "
            f"(last max change {last_change:.3e})")


@dataclass(frozen=True, eq=False)
class KernelSet:
    m: int
    K1: np.ndarray
    K2: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    G: np.ndarray
    R: np.ndarray
    iterations: int = 0
    last_change: float = 0.0

    @property
    def n(self):
        return self.G.shape[-1]

    def nodes(self):
        """Triangle node indices ``(i, j)`` in lexicographic order."""
        i, j = np.triu_indices(self.m + 1)
        return i, j

    def on_grid(self, m):
        """Linear interpolation of every field onto the lattice with m cells."""
        if m == self.m:
            return self
        fields = {name: resample_triangle(getattr(self, name), m)
                  for name in ("K1", "K2", "Q1", "Q2", "G", "R")}
        return KernelSet(m=m, iterations=self.iterations, last_change=self.last_change, **fields)


def resample_triangle(f, m):
    """Interpolate a triangle field to a new lattice.

    The unused lower part is filled by extending diagonal values along x
    before bilinear interpolation, which keeps first-order accuracy near
    the diagonal.
    """
    src_m = f.shape[0] - 1
    idx = np.arange(src_m + 1)
    full = f[np.minimum(idx[:, None], idx[None, :]), idx[None, :]]
    xs = np.linspace(0.0, 1.0, src_m + 1)
    xt = np.linspace(0.0, 1.0, m + 1)
    X, XI = np.meshgrid(xt, xt, indexing="ij")
    interp = RegularGridInterpolator((xs, xs), full, method="linear")
    out = interp(np.stack([X, XI], axis=-1))
    mask = np.triu(np.ones((m + 1, m + 1), dtype=bool))
    if out.ndim == 3:
        mask = mask[..., None]
    return np.where(mask, out, 0.0)


def eval_transition(cfg, x, xi, which):
    """State-transition matrix ``exp(psi * (xi - x) / lambda_k)``."""
    for val in (x, xi):
        if not 0.0 <= val <= 1.0:
            raise ValueError(f"point {val} outside [0, 1]")
    lam = {1: cfg.lambda1, 2: cfg.lambda2}[which]
    return matops.expm(cfg.psi, (xi - x) / lam)


def transition_table(psi, m, scale):
    """``[expm(psi * r * scale / m) for r in 0..m]`` stacked."""
    return np.stack([matops.expm(psi, r * scale / m) for r in range(m + 1)])


def _weighted_tail(F, step, h):
    """Trapezoid ``sum_{k=i..j} w_k F[k, j] @ step**(k-i)`` for every i <= j.

    Uses the recurrence S_i = F_i + S_{i+1} @ step on each column, then
    removes half of the two endpoint contributions.
    """
    N = F.shape[0]
    S = np.zeros_like(F)
    S[N - 1] = F[N - 1]
    for i in range(N - 2, -1, -1):
        S[i] = F[i] + S[i + 1] @ step
    # endpoint k=j term: F[j, j] @ step**(j-i); recover it from the recurrence
    diag = F[np.arange(N), np.arange(N)]
    end = np.zeros_like(F)
    end[np.arange(N), np.arange(N)] = diag
    for i in range(N - 2, -1, -1):
        end[i, i + 1:] = end[i + 1, i + 1:] @ step
    out = h * S - 0.5 * h * (F + end)
    return np.where(np.triu(np.ones((N, N), dtype=bool))[..., None], out, 0.0)


def g_field(cfg, K1, K2, table1):
    """G from its explicit formula given K1, K2 (table1[r] = expm(psi r h / lambda1))."""
    m = K1.shape[0] - 1
    h = 1.0 / m
    l1 = cfg.lambda1
    F = K1[..., None] * cfg.theta1 + K2[..., None] * cfg.theta2
    idx = np.arange(m + 1)
    offset = np.clip(idx[None, :] - idx[:, None], 0, m)
    homog = -(cfg.theta1 @ table1[offset]) / l1
    G = homog + _weighted_tail(F, table1[1], h) / l1
    return np.where(np.triu(np.ones((m + 1, m + 1), dtype=bool))[..., None], G, 0.0)


def r_field(cfg, Q1, Q2, table2):
    """R from its explicit formula given Q1, Q2 (table2[r] = expm(-psi r h / lambda2))."""
    m = Q1.shape[0] - 1
    h = 1.0 / m
    l2 = cfg.lambda2
    F = Q1[..., None] * cfg.theta1 + Q2[..., None] * cfg.theta2
    idx = np.arange(m + 1)
    offset = np.clip(idx[None, :] - idx[:, None], 0, m)
    homog = (cfg.theta2 @ table2[offset]) / l2
    R = homog - _weighted_tail(F, table2[1], h) / l2
    return np.where(np.triu(np.ones((m + 1, m + 1), dtype=bool))[..., None], R, 0.0)


def _march_from_diagonal(diag_value, S, a, b, h):
    """Solve ``a dK/dx - b dK/dxi = S`` outward from the diagonal, upwind."""
    N = S.shape[0]
    K = np.zeros((N, N))
    idx = np.arange(N)
    K[idx, idx] = diag_value
    for d in range(1, N):
        i = np.arange(N - d)
        j = i + d
        K[i, j] = (a * K[i + 1, j] + b * K[i, j - 1] - h * S[i, j]) / (a + b)
    return K


def _march_from_edge(edge, S, lam, h):
    """Solve ``lam (dK/dx + dK/dxi) = S`` backward along xi - x = const from xi = 1."""
    N = S.shape[0]
    m = N - 1
    K = np.zeros((N, N))
    K[:, m] = edge
    for d in range(N - 1):
        i = np.arange(m - d)
        src = S[i, i + d]
        tail = np.cumsum(src[::-1])[::-1]
        K[i, i + d] = edge[m - d] - (h / lam) * tail
    return K


def _sources(cfg, K1, K2, Q1, Q2, G, R):
    s_k1 = -cfg.sigma21 * K2 - G @ cfg.omega1
    s_k2 = -cfg.sigma12 * K1 - G @ cfg.omega2
    s_q1 = cfg.sigma21 * Q2 + R @ cfg.omega1
    s_q2 = cfg.sigma12 * Q1 + R @ cfg.omega2
    return s_k1, s_k2, s_q1, s_q2


def diagonal_data(cfg):
    lsum = cfg.lambda1 + cfg.lambda2
    return {
        "K2": -cfg.sigma12 / lsum,
        "Q1": cfg.sigma21 / lsum,
        "G": -cfg.theta1 / cfg.lambda1,
        "R": cfg.theta2 / cfg.lambda2,
    }


def edge_factors(cfg):
    """Multipliers of the xi = 1 relations K1 = c_k K2 and Q2 = c_q Q1."""
    return (cfg.lambda2 * cfg.rho / cfg.lambda1,
            cfg.lambda1 / (cfg.lambda2 * cfg.rho))


def solve_direct_kernels(cfg, m_k=100, tol=1e-9, max_iter=200):
    """Successive-approximation solve of the kernel equations on the triangle.

    Each sweep recomputes G and R from their explicit formulas, marches K2
    and Q1 outward from their diagonal data, then K1 and Q2 backward from
    the xi = 1 edge, with all couplings taken from the previous sweep.
    Stops when the largest change between sweeps is at most ``tol``.
    """
    cfg = validate_config(cfg)
    if m_k < 16:
        raise ValueError("kernel lattice needs m_k >= 16")
    if not tol > 0:
        raise ValueError("tol must be positive")
    m = int(m_k)
    N = m + 1
    h = 1.0 / m
    upper = np.triu(np.ones((N, N), dtype=bool))
    table1 = transition_table(cfg.psi, m, 1.0 / cfg.lambda1)
    table2 = transition_table(cfg.psi, m, -1.0 / cfg.lambda2)
    data = diagonal_data(cfg)
    ck, cq = edge_factors(cfg)

    K2 = np.where(upper, data["K2"], 0.0)
    Q1 = np.where(upper, data["Q1"], 0.0)
    K1 = ck * K2
    Q2 = cq * Q1
    change = np.inf
    for it in range(1, max_iter + 1):
        G = g_field(cfg, K1, K2, table1)
        R = r_field(cfg, Q1, Q2, table2)
        s_k1, s_k2, s_q1, s_q2 = _sources(cfg, K1, K2, Q1, Q2, G, R)
        K2n = _march_from_diagonal(data["K2"], s_k2, cfg.lambda1, cfg.lambda2, h)
        Q1n = _march_from_diagonal(data["Q1"], s_q1, cfg.lambda2, cfg.lambda1, h)
        K1n = _march_from_edge(ck * K2n[:, m], s_k1, cfg.lambda1, h)
        Q2n = _march_from_edge(cq * Q1n[:, m], s_q2, cfg.lambda2, h)
        change = max(np.abs(K1n - K1).max(), np.abs(K2n - K2).max(),
                     np.abs(Q1n - Q1).max(), np.abs(Q2n - Q2).max())
        K1, K2, Q1, Q2 = K1n, K2n, Q1n, Q2n
        if not np.isfinite(change):
            raise KernelConvergenceError(it, change)
        if change <= tol:
            break
    else:
        raise KernelConvergenceError(max_iter, change)

    G = g_field(cfg, K1, K2, table1)
    R = r_field(cfg, Q1, Q2, table2)
    return KernelSet(m=m, K1=K1, K2=K2, Q1=Q1, Q2=Q2, G=G, R=R,
                     iterations=it, last_change=float(change))


def _triangle(f):
    """Copy with NaN outside the triangle, padded by one NaN layer on each side."""
    N = f.shape[0]
    mask = np.triu(np.ones((N, N), dtype=bool))
    if f.ndim == 3:
        mask = mask[..., None]
    g = np.where(mask, f, np.nan)
    pad = [(1, 1), (1, 1)] + [(0, 0)] * (f.ndim - 2)
    return np.pad(g, pad, constant_values=np.nan)


def _derivative(f, di, dj, h):
    """Directional difference along lattice step (di, dj): centered if possible."""
    P = _triangle(f)
    N = f.shape[0]
    c = P[1:N + 1, 1:N + 1]
    fwd = (P[1 + di:N + 1 + di, 1 + dj:N + 1 + dj] - c) / h
    bwd = (c - P[1 - di:N + 1 - di, 1 - dj:N + 1 - dj]) / h
    out = np.where(np.isnan(fwd), bwd, np.where(np.isnan(bwd), fwd, 0.5 * (fwd + bwd)))
    return out


def kernel_residual(ks, cfg):
    """Max-norm residuals of the kernel equations on the lattice of ``ks``.

    Transport equations use centered differences where both neighbours lie in
    the triangle and one-sided differences at its edges; imposed diagonal and
    edge data are skipped. ``G`` and ``R`` report the residual of the linear
    ODEs in x that their explicit formulas solve.
    """
    m = ks.m
    h = 1.0 / m
    N = m + 1
    idx = np.arange(N)
    off_diag = idx[:, None] < idx[None, :]
    not_edge = np.triu(np.ones((N, N), dtype=bool)) & (idx[None, :] < m)
    s_k1, s_k2, s_q1, s_q2 = _sources(cfg, ks.K1, ks.K2, ks.Q1, ks.Q2, ks.G, ks.R)

    def dx(f):
        return _derivative(f, 1, 0, h)

    def dxi(f):
        return _derivative(f, 0, 1, h)

    r_k1 = cfg.lambda1 * _derivative(ks.K1, 1, 1, h) - s_k1
    r_k2 = cfg.lambda1 * dx(ks.K2) - cfg.lambda2 * dxi(ks.K2) - s_k2
    r_q1 = cfg.lambda2 * dx(ks.Q1) - cfg.lambda1 * dxi(ks.Q1) - s_q1
    r_q2 = cfg.lambda2 * _derivative(ks.Q2, 1, 1, h) - s_q2
    f_g = ks.K1[..., None] * cfg.theta1 + ks.K2[..., None] * cfg.theta2
    f_r = ks.Q1[..., None] * cfg.theta1 + ks.Q2[..., None] * cfg.theta2
    r_g = cfg.lambda1 * dx(ks.G) + f_g + ks.G @ cfg.psi
    r_r = cfg.lambda2 * dx(ks.R) - f_r - ks.R @ cfg.psi

    def peak(r, mask):
        if r.ndim == 3:
            r = np.abs(r).max(axis=-1)
        vals = np.abs(r[mask])
        return float(vals.max()) if vals.size else 0.0

    return {
        "K1": peak(r_k1, not_edge),
        "K2": peak(r_k2, off_diag),
        "Q1": peak(r_q1, off_diag),
        "Q2": peak(r_q2, not_edge),
        "G": peak(r_g, off_diag),
        "R": peak(r_r, off_diag),
    }


def boundary_defects(ks, cfg):
    """Largest deviation from the imposed diagonal and xi = 1 data."""
    data = diagonal_data(cfg)
    ck, cq = edge_factors(cfg)
    idx = np.arange(ks.m + 1)
    return {
        "K2_diag": float(np.abs(ks.K2[idx, idx] - data["K2"]).max()),
        "Q1_diag": float(np.abs(ks.Q1[idx, idx] - data["Q1"]).max()),
        "G_diag": float(np.abs(ks.G[idx, idx] - data["G"]).max()),
        "R_diag": float(np.abs(ks.R[idx, idx] - data["R"]).max()),
        "K1_edge": float(np.abs(ks.K1[:, -1] - ck * ks.K2[:, -1]).max()),
        "Q2_edge": float(np.abs(ks.Q2[:, -1] - cq * ks.Q1[:, -1]).max()),
    }
