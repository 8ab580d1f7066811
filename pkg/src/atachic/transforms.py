"""Volterra map to the target system, its inverse, and the boundary feedback.

All integrals over [x, 1] use trapezoid weights on the nodes, so every map
here is a matrix acting on node values. The inverse kernels are read off the
exact inverse of that matrix, which makes inverse(forward(state)) an identity
up to roundoff on the lattice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quadrature import tail_weights


@dataclass(frozen=True, eq=False)
class InverseKernelSet:
    m: int
    L1: np.ndarray
    L2: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    S: np.ndarray
    E: np.ndarray
    N1: np.ndarray
    N2: np.ndarray
    N3: np.ndarray
    iterations: int = 0

    @property
    def n(self):
        return self.S.shape[-1]


class SeriesDivergenceError(RuntimeError):
    pass


def _check_grid(state_m, kernel_m):
    if state_m != kernel_m:
        raise ValueError(f"state grid m={state_m} differs from kernel lattice m={kernel_m}")


def _kernels_for(ks, m):
    return ks if ks.m == m else ks.on_grid(m)


@dataclass(frozen=True, eq=False)
class ForwardOperator:
    """Matrices of the forward map ``[alpha; beta] = (I - A) [u; p] - B v``."""

    m: int
    A: np.ndarray  # (2N, 2N)
    B: np.ndarray  # (2N, nN)

    @classmethod
    def from_kernels(cls, ks, m=None):
        m = ks.m if m is None else m
        ks = _kernels_for(ks, m)
        W = tail_weights(m)
        A = np.block([[W * ks.K1, W * ks.K2], [W * ks.Q1, W * ks.Q2]])
        Bu = np.hstack([W * ks.G[..., k] for k in range(ks.n)])
        Bp = np.hstack([W * ks.R[..., k] for k in range(ks.n)])
        return cls(m=m, A=A, B=np.vstack([Bu, Bp]))

    def apply(self, u, p, v):
        N = self.m + 1
        up = np.concatenate([u, p])
        ab = up - self.A @ up - self.B @ np.asarray(v).reshape(-1)
        return ab[:N], ab[N:]


def forward_transform(state, ks):
    """Map a plant snapshot to the target coordinates ``(alpha, beta)``.

    Kernels on a different lattice are linearly interpolated onto the state
    grid first.
    """
    op = ForwardOperator.from_kernels(ks, state.m)
    return op.apply(state.u, state.p, state.v)


def _neumann_resolvent(A, tol=1e-12, max_iter=None):
    """``L`` with ``(I - A)^{-1} = I + L`` via the iteration L <- A + A L."""
    max_iter = max_iter or 10 * A.shape[0]
    L = A.copy()
    delta = np.inf
    for it in range(1, max_iter + 1):
        new = A + A @ L
        delta = np.abs(new - L).max()
        L = new
        if delta <= tol:
            return L, it
    raise SeriesDivergenceError(
        f"Neumann series did not settle in {max_iter} iterations (last change {delta:.3e})")


def invert_kernels(ks, cfg, tol=1e-12):
    """Inverse kernels (L, M, S, E) and target couplings (N1, N2, N3)."""
    m = ks.m
    N = m + 1
    n = ks.n
    op = ForwardOperator.from_kernels(ks)
    Lmat, it = _neumann_resolvent(op.A, tol=tol, max_iter=10 * m)
    Smat = op.B + Lmat @ op.B

    W = tail_weights(m)
    safe = np.where(W > 0, W, 1.0)

    def unweight(block):
        return np.where(W > 0, block / safe, 0.0)

    L1 = unweight(Lmat[:N, :N])
    L2 = unweight(Lmat[:N, N:])
    M1 = unweight(Lmat[N:, :N])
    M2 = unweight(Lmat[N:, N:])
    S = np.stack([unweight(Smat[:N, k * N:(k + 1) * N]) for k in range(n)], axis=-1)
    E = np.stack([unweight(Smat[N:, k * N:(k + 1) * N]) for k in range(n)], axis=-1)

    o1, o2 = cfg.omega1, cfg.omega2
    N1 = L1[..., None] * o1 + M1[..., None] * o2
    N2 = L2[..., None] * o1 + M2[..., None] * o2
    N3 = o1[:, None] * S[..., None, :] + o2[:, None] * E[..., None, :]
    return InverseKernelSet(m=m, L1=L1, L2=L2, M1=M1, M2=M2, S=S, E=E,
                            N1=N1, N2=N2, N3=N3, iterations=it)


def inverse_transform(alpha, beta, v, iks):
    """Recover ``(u, p)`` from target coordinates and the unchanged v."""
    m = np.asarray(alpha).size - 1
    _check_grid(m, iks.m)
    W = tail_weights(m)
    v = np.asarray(v, dtype=float).reshape(iks.n, m + 1)
    sv = sum((W * iks.S[..., k]) @ v[k] for k in range(iks.n))
    ev = sum((W * iks.E[..., k]) @ v[k] for k in range(iks.n))
    u = alpha + (W * iks.L1) @ alpha + (W * iks.L2) @ beta + sv
    p = beta + (W * iks.M1) @ alpha + (W * iks.M2) @ beta + ev
    return u, p


@dataclass(frozen=True, eq=False)
class FeedbackGains:
    """Row ``x = 0`` of the forward map: ``U = -q p(0) + ku @ u + kp @ p + sum_k kv[k] @ v[k]``."""

    q: float
    ku: np.ndarray
    kp: np.ndarray
    kv: np.ndarray

    @classmethod
    def from_kernels(cls, ks, cfg, m=None):
        m = ks.m if m is None else m
        ks = _kernels_for(ks, m)
        w = tail_weights(m)[0]
        return cls(q=cfg.q, ku=w * ks.K1[0], kp=w * ks.K2[0], kv=(w * ks.G[0].T))

    def __call__(self, u, p, v):
        return float(-self.q * p[0] + self.ku @ u + self.kp @ p + np.sum(self.kv * v))


def control_law(state, ks, cfg):
    """Boundary input that zeroes the target state at x = 0."""
    gains = FeedbackGains.from_kernels(ks, cfg, state.m)
    return gains(state.u, state.p, state.v)


def target_residual(traj, ks, iks, cfg, t_min=0.0):
    """Check a closed-loop trajectory against the target dynamics.

    Every stored snapshot is transformed. Reports the largest |alpha(t, 0)|,
    the interior residuals of the two transport equations (centred in x,
    forward in time between consecutive snapshots with t >= t_min), the
    residual of the zero-speed equation written with N1, N2, N3, and the
    largest |beta(t, 1) - rho alpha(t, 1)|.
    """
    snaps = traj.snapshots
    if len(snaps) < 2:
        raise ValueError("trajectory needs at least two stored snapshots")
    m = snaps[0].m
    _check_grid(m, iks.m)
    h = 1.0 / m
    op = ForwardOperator.from_kernels(ks, m)
    W = tail_weights(m)
    n = cfg.n
    ab = [op.apply(s.u, s.p, s.v) for s in snaps]

    def couplings(alpha, beta, v):
        out = np.outer(cfg.omega1, alpha) + np.outer(cfg.omega2, beta) + cfg.psi @ v
        for k in range(n):
            out[k] += (W * iks.N1[..., k]) @ alpha + (W * iks.N2[..., k]) @ beta
            out[k] += sum((W * iks.N3[..., k, l]) @ v[l] for l in range(n))
        return out

    res_a = res_b = res_v = 0.0
    for k in range(len(snaps) - 1):
        t0, t1 = snaps[k].t, snaps[k + 1].t
        if t0 < t_min:
            continue
        dt = t1 - t0
        (a0, b0), (a1, b1) = ab[k], ab[k + 1]
        ra = (a1 - a0)[1:-1] / dt + cfg.lambda1 * (a0[2:] - a0[:-2]) / (2 * h)
        rb = (b1 - b0)[1:-1] / dt - cfg.lambda2 * (b0[2:] - b0[:-2]) / (2 * h)
        rv = (snaps[k + 1].v - snaps[k].v) / dt - couplings(a0, b0, snaps[k].v)
        res_a = max(res_a, float(np.abs(ra).max()))
        res_b = max(res_b, float(np.abs(rb).max()))
        res_v = max(res_v, float(np.abs(rv).max()))
    return {
        "alpha_at_0": max(float(abs(a[0])) for a, _ in ab),
        "alpha_pde": res_a,
        "beta_pde": res_b,
        "v_pde": res_v,
        "beta_reflection": max(float(abs(b[-1] - cfg.rho * a[-1])) for a, b in ab),
    }
