"""Stability certificate for the target system and the non-stabilizability study.

The first half computes the weighted L2 Lyapunov functional of the target
coordinates and the constants that certify its decay. The second half works
on the scalar pair u_t = -lam u_x, v_t = psi v + omega u, u(t, 0) = U(t):
the subspace S = {P(u, v) = 0} of stabilizable data, the functional R that
grows like exp(psi t) off S, and the delay-ODE form of the same obstruction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import matops
from .quadrature import cumtrapz0, trapz
from .transforms import ForwardOperator


@dataclass(frozen=True)
class LyapunovParams:
    """Certificate constants. A and K are kept as logarithms because for
    strongly coupled plants exp(2 mu) is far outside double range."""

    log_A: float
    B: float
    mu: float
    vartheta: float
    rho_star: float
    log_K: float
    nbar1: float
    nbar2: float
    nbar3: float

    @property
    def A(self):
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_A))

    @property
    def K(self):
        return math.exp(self.log_K)


def lyapunov_constants(cfg, iks):
    """Certificate constants, or None when psi + psi.T is not negative definite.

    B = 1 and A = rho**2 exp(2 mu) + 1 make both boundary terms of the
    derivative nonpositive; mu and vartheta absorb the in-domain couplings.
    """
    rho_star = matops.sym_decay_margin(cfg.psi)
    if rho_star is None:
        return None
    nbar1 = float(np.linalg.norm(iks.N1, axis=-1).max())
    nbar2 = float(np.linalg.norm(iks.N2, axis=-1).max())
    nbar3 = float(np.linalg.norm(iks.N3, axis=(-2, -1)).max())
    o1 = float(cfg.omega1 @ cfg.omega1)
    o2 = float(cfg.omega2 @ cfg.omega2)
    mu = max(2 * (o1 + nbar1**2) / rho_star, 2 * (o2 + nbar2**2) / rho_star) + 1.0
    vartheta = 16 * nbar3**2 / rho_star**2
    B = 1.0
    # log(rho^2 exp(2 mu) + 1)
    log_A = float(np.logaddexp(2 * math.log(abs(cfg.rho)) + 2 * mu, 0.0)) if cfg.rho else 0.0
    log_K = min(math.log(cfg.lambda1) - log_A, math.log(cfg.lambda2 / B), math.log(rho_star / 2))
    return LyapunovParams(log_A=log_A, B=B, mu=mu, vartheta=vartheta, rho_star=rho_star,
                          log_K=log_K, nbar1=nbar1, nbar2=nbar2, nbar3=nbar3)


def log_lyapunov_value(alpha, beta, v, lp, cfg):
    """log V for V = int (A/lam1) e^{-mu x} alpha^2 + (B/lam2) e^{mu x} beta^2 + 0.5 e^{-vartheta x} |v|^2.

    Evaluated with trapezoid weights in log space; -inf for the zero state.
    """
    alpha = np.asarray(alpha, dtype=float)
    m = alpha.size - 1
    h = 1.0 / m
    x = np.linspace(0.0, 1.0, m + 1)
    w = np.full(m + 1, h)
    w[[0, -1]] = 0.5 * h
    v = np.asarray(v, dtype=float).reshape(-1, m + 1)
    log_w = np.log(w)
    terms = np.concatenate([
        lp.log_A - math.log(cfg.lambda1) - lp.mu * x + log_w,
        math.log(lp.B / cfg.lambda2) + lp.mu * x + log_w,
        math.log(0.5) - lp.vartheta * x + log_w,
    ])
    mags = np.concatenate([alpha**2, np.asarray(beta, dtype=float) ** 2, np.sum(v * v, axis=0)])
    if not np.any(mags > 0):
        return -math.inf
    return float(special.logsumexp(terms, b=mags))


def lyapunov_value(alpha, beta, v, lp, cfg):
    """V itself; inf when it exceeds double range."""
    with np.errstate(over="ignore"):
        return float(np.exp(log_lyapunov_value(alpha, beta, v, lp, cfg)))


def lyapunov_monitor(lp, ks, cfg, m):
    """Callable ``(u, p, v) -> log V`` for recording along a simulation."""
    op = ForwardOperator.from_kernels(ks, m)

    def monitor(u, p, v):
        alpha, beta = op.apply(u, p, v)
        return log_lyapunov_value(alpha, beta, v, lp, cfg)

    return monitor


def log_slope(t, log_v):
    """Least-squares slope of log V against t."""
    return float(np.polyfit(np.asarray(t, dtype=float), np.asarray(log_v, dtype=float), 1)[0])


# -- scalar transport / zero-speed pair ------------------------------------

def _memory_integral(scfg, u, x, h):
    """Trapezoid of exp(-psi (x - s) / lam) u(s) over [0, x] at every node."""
    a = scfg.psi / scfg.lam
    return np.exp(-a * x) * cumtrapz0(np.exp(a * x) * u, h)


def operator_P(scfg, u, v, grid):
    """P(u, v)(x) = v(x) - exp(-psi x / lam) v(0) + (omega / lam) * memory integral of u."""
    x = grid.x
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return (v - np.exp(-scfg.psi * x / scfg.lam) * v[0]
            + (scfg.omega / scfg.lam) * _memory_integral(scfg, u, x, grid.dx))


def w_transform(scfg, u, v, grid):
    """Coordinates in which the zero-speed state evolves as w_t = psi w.

    Pointwise identical to :func:`operator_P`, kept separate because it is
    tracked along trajectories rather than tested for membership.
    """
    return operator_P(scfg, u, v, grid)


def in_subspace_S(scfg, u, v, grid, tol=None):
    """Whether ``(u, v)`` satisfies P(u, v) = 0 to ``tol``; also returns max |P|."""
    P = operator_P(scfg, u, v, grid)
    if tol is None:
        tol = 1e-6 * (1.0 + float(np.abs(v).max()))
    worst = float(np.abs(P).max())
    return worst <= tol, worst


def s_member_profile(scfg, u0, v_at_zero, x):
    """v0 on nodes x such that (u0, v0) lies in S, with adaptive quadrature.

    ``u0`` must be a callable. The construction inverts the definition of P.
    """
    a = scfg.psi / scfg.lam
    out = np.empty_like(np.asarray(x, dtype=float))
    for k, xk in enumerate(x):
        mem, _ = integrate.quad(lambda s: math.exp(-a * (xk - s)) * u0(s), 0.0, xk,
                                epsabs=1e-14, epsrel=1e-13)
        out[k] = math.exp(-a * xk) * v_at_zero - scfg.omega / scfg.lam * mem
    return out


@dataclass(frozen=True)
class RFunctional:
    """Value of R together with the weight built from the initial data."""

    R: float
    phi: np.ndarray
    h: np.ndarray
    K: float


def _phi(scfg, u, v, grid):
    return (scfg.psi * cumtrapz0(v, grid.dx) + scfg.omega * cumtrapz0(u, grid.dx)
            + scfg.lam * np.asarray(v, dtype=float))


def functional_R(scfg, u0, v0, u, v, grid):
    """R(t) = integral of h(x) * phi_t(x), with h = phi_0 - mean(phi_0).

    phi_t is built like phi_0 but from the state at time t. Off S, R obeys
    dR/dt = psi R for every input.
    """
    phi0 = _phi(scfg, u0, v0, grid)
    Kc = float(trapz(phi0, grid.dx))
    hfun = phi0 - Kc
    R = float(trapz(hfun * _phi(scfg, u, v, grid), grid.dx))
    return RFunctional(R=R, phi=phi0, h=hfun, K=Kc)


def norm_floor(scfg, R, hfun):
    """Lower bound on sqrt(|u|^2 + |v|^2) implied by the value R.

    From |R| <= |h|_inf ((psi + lam) |v| + |omega| |u|) and Cauchy-Schwarz.
    """
    hmax = float(np.abs(hfun).max())
    c = math.sqrt(2.0) * hmax * max(abs(scfg.psi) + scfg.lam, abs(scfg.omega))
    return abs(R) / c if c > 0 else math.inf


@dataclass(frozen=True)
class DelaySeries:
    t: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    w: np.ndarray
    delay: float


def ode_counterexample(scfg, x1, U, t_final, v1_0=0.0, v2_0=0.0, dt=1e-4):
    """Zero-speed state at x = 0 and x = x1 once the transport state is U(t - x/lam).

    Integrates v1' = psi v1 + omega U(t) and v2' = psi v2 + omega U(t - x1/lam)
    by forward Euler. ``U`` must be defined back to t = -1/lam. Returns
    w(t) = v1(t - x1/lam) - v2(t) (NaN before the delay has elapsed), which
    obeys w' = psi w whatever U is.
    """
    if not 0.0 < x1 <= 1.0:
        raise ValueError("x1 must lie in (0, 1]")
    delay = x1 / scfg.lam
    lag = round(delay / dt)
    if abs(lag * dt - delay) > 1e-9 * max(1.0, delay):
        raise ValueError("x1 / lam must be a multiple of dt")
    steps = round(t_final / dt)
    t = np.arange(steps + 1) * dt
    f1 = scfg.omega * np.asarray([U(tk) for tk in t[:-1]], dtype=float)
    f2 = scfg.omega * np.asarray([U(tk - delay) for tk in t[:-1]], dtype=float)
    a = 1.0 + scfg.psi * dt
    v1 = np.empty(steps + 1)
    v2 = np.empty(steps + 1)
    v1[0], v2[0] = v1_0, v2_0
    for k in range(steps):
        v1[k + 1] = a * v1[k] + dt * f1[k]
        v2[k + 1] = a * v2[k] + dt * f2[k]
    w = np.full(steps + 1, np.nan)
    w[lag:] = v1[:steps + 1 - lag] - v2[lag:]
    return DelaySeries(t=t, v1=v1, v2=v2, w=w, delay=delay)


def compatible_history(scfg, v0, dt=1e-4):
    """Input history on [-1/lam, 0) that makes w vanish at every delay.

    Enforces, for the forward-Euler recursion with step ``dt``, that the
    zero-speed state started at x_s = lam s dt reaches v0(0) exactly after
    s steps of delayed input; the discrete difference of that condition
    gives one history value per step. Returns a callable U on [-1/lam, 0)
    (piecewise constant on the step grid).
    """
    if scfg.omega == 0.0:
        raise ValueError("omega = 0: the input cannot reach the zero-speed state")
    S = round(1.0 / (scfg.lam * dt))
    a = 1.0 + scfg.psi * dt
    s = np.arange(S + 1)
    G = v0(0.0) - a**s * np.array([v0(scfg.lam * k * dt) for k in s])
    hist = np.zeros(S + 1)  # hist[j] = U(-j dt)
    hist[1:] = (G[1:] - G[:-1]) / (scfg.omega * dt * a ** (s[1:] - 1))

    def U(t):
        if t >= 0.0:
            return 0.0
        j = int(round(-t / dt))
        return float(hist[min(j, S)])

    return U


def continuous_history(scfg, v0, dv0):
    """Continuous-time counterpart of :func:`compatible_history`.

    Differentiating the compatibility condition in x gives
    U(-x/lam) = -(psi v0(x) + lam v0'(x)) / omega.
    """
    if scfg.omega == 0.0:
        raise ValueError("omega = 0: the input cannot reach the zero-speed state")

    def U(t):
        if t >= 0.0:
            return 0.0
        x = -scfg.lam * t
        return -(scfg.psi * v0(x) + scfg.lam * dv0(x)) / scfg.omega

    return U


class SubspaceFeedbackWarning(UserWarning):
    pass


def subspace_feedback(scfg, k, v_at_zero):
    """U = -(k / omega) v(t, 0), stabilizing on S; 0 (with a warning) if omega = 0.

    On S the zero-speed state obeys v(t, x) = v(t - x/lam, 0), and the
    boundary value then follows y' = (psi - k) y.
    """
    if scfg.omega == 0.0:
        warnings.warn("omega = 0: only the subspace with v(0) = 0 is stabilizable, using U = 0",
                      SubspaceFeedbackWarning, stacklevel=2)
        return 0.0
    return -(k / scfg.omega) * float(v_at_zero)
