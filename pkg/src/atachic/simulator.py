"""Explicit upwind simulation of the plant and of the scalar transport/zero-speed pair.

Both schemes are first-order: upwind differences for the transport states,
forward Euler for the zero-speed states, couplings frozen at the current time
level. The scalar pair also has an exact solution by characteristics, which
serves as the reference for convergence checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import StateSnapshot
from .quadrature import l2_norm, trapz
from .transforms import FeedbackGains

OVERFLOW = 1e12


class SimulationOverflow(RuntimeError):
    """State blew past the overflow threshold; ``trajectory`` holds the run so far."""

    def __init__(self, step, t, trajectory):
        self.step = step
        self.t = t
        self.trajectory = trajectory
        super().__init__(f"state exceeded {OVERFLOW:g} at step {step} (t={t:.4f})")


@dataclass
class Trajectory:
    """Snapshots every ``stride`` steps plus per-step scalar records."""

    snapshots: list = field(default_factory=list)
    t: list = field(default_factory=list)
    U: list = field(default_factory=list)
    norm_u: list = field(default_factory=list)
    norm_p: list = field(default_factory=list)
    norm_v: list = field(default_factory=list)
    V: list = field(default_factory=list)

    def record(self, t, U, state_u, state_p, state_v, h, V=None):
        self.t.append(t)
        self.U.append(U)
        self.norm_u.append(l2_norm(state_u, h))
        self.norm_p.append(l2_norm(state_p, h))
        self.norm_v.append(l2_norm(state_v, h))
        self.V.append(np.nan if V is None else V)

    def arrays(self):
        return {name: np.asarray(getattr(self, name), dtype=float)
                for name in ("t", "U", "norm_u", "norm_p", "norm_v", "V")}

    @property
    def total_norm(self):
        a = self.arrays()
        return np.sqrt(a["norm_u"] ** 2 + a["norm_p"] ** 2 + a["norm_v"] ** 2)


# Controllers.  Each returns (u at x=0, U) from the state after the interior
# update, so the feedback sees the newest values (one-step lag at most dt).

class OpenLoop:
    """U = 0: the boundary only reflects p."""

    name = "open"

    def boundary(self, t, u, p, v, q):
        return q * p[0], 0.0


class ZeroInflow:
    """U = -q p(t, 0), i.e. u(t, 0) = 0."""

    name = "zero"

    def boundary(self, t, u, p, v, q):
        return 0.0, -q * p[0]


class Signal:
    """Scripted input U(t)."""

    name = "signal"

    def __init__(self, fn):
        self.fn = fn

    def boundary(self, t, u, p, v, q):
        U = float(self.fn(t))
        return U + q * p[0], U


class Backstepping:
    """Full-state feedback built from the direct kernels.

    The quadrature of the feedback includes u(t, 0) itself with weight dx/2,
    so the boundary value is solved from the resulting scalar linear
    equation; this keeps alpha(t, 0) = 0 exactly on the grid.
    """

    name = "backstep"

    def __init__(self, ks, cfg, m=None):
        self.gains = FeedbackGains.from_kernels(ks, cfg, m)

    def boundary(self, t, u, p, v, q):
        g = self.gains
        c = g.ku[0]
        rest = -q * p[0] + g.ku[1:] @ u[1:] + g.kp @ p + np.sum(g.kv * v)
        u0 = (rest + q * p[0]) / (1.0 - c)
        return u0, u0 - q * p[0]


def _steps(t_final, dt_max):
    nsteps = max(1, math.ceil(t_final / dt_max - 1e-9))
    return nsteps, t_final / nsteps


def simulate(cfg, grid, ic, t_final, controller=None, snapshot_stride=10, monitor=None):
    """Advance the plant from ``ic`` to ``t_final``.

    ``controller`` is one of OpenLoop (default), ZeroInflow, Signal or
    Backstepping. ``monitor(u, p, v)``, if given, is recorded as V each step.
    The step is shortened slightly so that t_final is hit exactly.
    """
    controller = controller or OpenLoop()
    m = grid.m
    if ic.m != m:
        raise ValueError(f"initial state has m={ic.m}, grid has m={m}")
    if grid.dt * cfg.max_speed / grid.dx > 1.0 + 1e-12:
        raise ValueError("CFL condition violated")
    h = grid.dx
    nsteps, dt = _steps(t_final, grid.dt)
    c1 = cfg.lambda1 * dt / h
    c2 = cfg.lambda2 * dt / h
    u, p, v = ic.u.copy(), ic.p.copy(), ic.v.copy()
    th1, th2, om1, om2, psi = cfg.theta1, cfg.theta2, cfg.omega1, cfg.omega2, cfg.psi

    traj = Trajectory()
    traj.snapshots.append(StateSnapshot(ic.t, u, p, v))
    U0 = controller.boundary(ic.t, u, p, v, cfg.q)[1]
    traj.record(ic.t, U0, u, p, v, h, monitor(u, p, v) if monitor else None)
    t = ic.t
    for step in range(1, nsteps + 1):
        thv = th1 @ v
        tpv = th2 @ v
        un = u.copy()
        pn = p.copy()
        un[1:] = u[1:] - c1 * (u[1:] - u[:-1]) + dt * (cfg.sigma12 * p[1:] + thv[1:])
        pn[:-1] = p[:-1] + c2 * (p[1:] - p[:-1]) + dt * (cfg.sigma21 * u[:-1] + tpv[:-1])
        v = v + dt * (np.outer(om1, u) + np.outer(om2, p) + psi @ v)
        u, p = un, pn
        t = ic.t + step * dt
        p[-1] = cfg.rho * u[-1]
        u[0], U = controller.boundary(t, u, p, v, cfg.q)

        peak = max(np.abs(u).max(), np.abs(p).max(), np.abs(v).max())
        if not np.isfinite(peak) or peak > OVERFLOW:
            raise SimulationOverflow(step, t, traj)
        traj.record(t, U, u, p, v, h, monitor(u, p, v) if monitor else None)
        if step % snapshot_stride == 0 or step == nsteps:
            traj.snapshots.append(StateSnapshot(t, u, p, v))
    return traj


@dataclass
class ScalarTrajectory:
    """Fields of the scalar pair (u, v) at the stored times, one row per time."""

    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    U: np.ndarray = None


def simulate_simplified_fd(scfg, grid, u0, v0, U=None, t_final=1.0, feedback=None, stride=1):
    """Upwind/Euler scheme for u_t = -lam u_x, v_t = psi v + omega u, u(t, 0) = U(t).

    ``feedback(t, u, v)``, if given, replaces the scripted signal ``U``.
    """
    m = grid.m
    h = grid.dx
    if grid.dt * scfg.lam / h > 1.0 + 1e-12:
        raise ValueError("CFL condition violated")
    nsteps, dt = _steps(t_final, grid.dt)
    c = scfg.lam * dt / h
    u = np.array(u0, dtype=float).copy()
    v = np.array(v0, dtype=float).copy()
    if u.size != m + 1 or v.size != m + 1:
        raise ValueError("initial data do not match the grid")
    U = U or (lambda t: 0.0)
    ts, us, vs, Us = [0.0], [u.copy()], [v.copy()], [float(u[0])]
    for step in range(1, nsteps + 1):
        t = step * dt
        un = u.copy()
        un[1:] = u[1:] - c * (u[1:] - u[:-1])
        v = v + dt * (scfg.psi * v + scfg.omega * u)
        u = un
        u[0] = feedback(t, u, v) if feedback else float(U(t))
        if not np.all(np.isfinite(v)) or np.abs(v).max() > OVERFLOW:
            raise SimulationOverflow(step, t, None)
        if step % stride == 0 or step == nsteps:
            ts.append(t)
            us.append(u.copy())
            vs.append(v.copy())
            Us.append(float(u[0]))
    return ScalarTrajectory(np.array(ts), np.array(us), np.array(vs), np.array(Us))


def _as_profile(f, x):
    if callable(f):
        return np.asarray(f(x), dtype=float) * np.ones_like(x)
    f = np.asarray(f, dtype=float)
    grid = np.linspace(0.0, 1.0, f.size)
    return np.interp(x, grid, f)


def exact_scalar_state(scfg, u0, v0, U, t, x, dt):
    """Characteristic solution of the scalar pair at time t on nodes x.

    ``u0`` may be a callable or node samples (linearly interpolated); ``v0``
    is only needed on ``x``. The memory integral in v is split where the
    characteristic through (t, x) leaves the initial data and each piece is
    integrated by the composite trapezoid rule with step at most ``dt``.
    """
    lam, psi, omega = scfg.lam, scfg.psi, scfg.omega
    x = np.asarray(x, dtype=float)
    cross = x / lam
    u = np.where(lam * t <= x, _as_profile(u0, np.clip(x - lam * t, 0.0, 1.0)),
                 np.asarray(U(np.maximum(t - cross, 0.0)), dtype=float) * np.ones_like(x))
    v = math.exp(psi * t) * _as_profile(v0, x)
    if omega == 0.0 or t == 0.0:
        return u, v

    split = np.minimum(t, cross)
    k1 = max(1, math.ceil(split.max() / dt))
    k2 = max(1, math.ceil((t - split).max() / dt))
    r1 = np.linspace(0.0, 1.0, k1 + 1)
    r2 = np.linspace(0.0, 1.0, k2 + 1)
    s1 = split[:, None] * r1
    s2 = split[:, None] + (t - split)[:, None] * r2
    f1 = np.exp(psi * (t - s1)) * _as_profile(u0, np.clip(x[:, None] - lam * s1, 0.0, 1.0).ravel()).reshape(s1.shape)
    f2 = np.exp(psi * (t - s2)) * np.asarray(U(np.maximum(s2 - cross[:, None], 0.0)), dtype=float)
    part1 = trapz(f1, 1.0) * split / k1
    part2 = trapz(f2, 1.0) * (t - split) / k2
    return u, v + omega * (part1 + part2)


def simulate_simplified_exact(scfg, u0, v0, U, times, grid, dt=None):
    """Exact-solution trajectory of the scalar pair at the requested times."""
    x = grid.x
    dt = dt or grid.cfl * grid.dx / scfg.lam
    us, vs = [], []
    for t in times:
        u, v = exact_scalar_state(scfg, u0, v0, U, float(t), x, dt)
        us.append(u)
        vs.append(v)
    times = np.asarray(times, dtype=float)
    return ScalarTrajectory(times, np.array(us), np.array(vs),
                            np.asarray(U(times), dtype=float) * np.ones_like(times))


def scripted_input(kind, amplitude=0.5, rate=1.0):
    """Named scripted inputs, all vanishing at t = 0.

    ``zero``; ``sine``: amplitude*sin(rate*t); ``decay``:
    amplitude*(exp(-rate*t) - exp(-3*rate*t)).
    """
    if kind == "zero":
        return lambda t: np.zeros_like(np.asarray(t, dtype=float))
    if kind == "sine":
        return lambda t: amplitude * np.sin(rate * np.asarray(t, dtype=float))
    if kind == "decay":
        return lambda t: amplitude * (np.exp(-rate * np.asarray(t, dtype=float))
                                      - np.exp(-3.0 * rate * np.asarray(t, dtype=float)))
    raise ValueError(f"unknown input signal {kind!r}")
