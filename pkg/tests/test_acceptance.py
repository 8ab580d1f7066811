"""Acceptance criteria 1-8, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (or as a script); the verdict
lines go straight to the terminal.
"""

import math
import sys
import time

import numpy as np
import pytest

from atachic import analysis, simulator
from atachic.cli import load_config
from atachic.kernels import boundary_defects, kernel_residual, solve_direct_kernels
from atachic.model import Grid, SimplifiedConfig, initial_condition, random_smooth_state
from atachic.transforms import ForwardOperator, invert_kernels, inverse_transform


@pytest.fixture
def verdict(capsys):
    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {label}: {detail}")
        return ok
    return emit


@pytest.fixture(scope="module")
def plant():
    return load_config("paper_iv.json")


@pytest.fixture(scope="module")
def kernel_pair(plant):
    start = time.perf_counter()
    ks = {m: solve_direct_kernels(plant, m) for m in (100, 200)}
    return ks, time.perf_counter() - start


@pytest.fixture(scope="module")
def scenario(plant, kernel_pair):
    """Open and closed loop from sine(1,1,1) on m = 200, CFL 0.9, every step stored."""
    ks = kernel_pair[0][200]
    start = time.perf_counter()
    iks = invert_kernels(ks, plant)
    lp = analysis.lyapunov_constants(plant, iks)
    grid = Grid.for_plant(plant, 200, 0.9)
    ic = initial_condition("sine(1,1,1)", grid, plant.n)
    try:
        open_loop = simulator.simulate(plant, grid, ic, 10.0, simulator.OpenLoop())
        overflow = False
    except simulator.SimulationOverflow as exc:
        open_loop, overflow = exc.trajectory, True
    closed = simulator.simulate(plant, grid, ic, 10.0, simulator.Backstepping(ks, plant),
                                snapshot_stride=1, monitor=analysis.lyapunov_monitor(lp, ks, plant, 200))
    op = ForwardOperator.from_kernels(ks)
    target = [op.apply(s.u, s.p, s.v) for s in closed.snapshots]
    scale = max(np.abs(ic.u).max(), np.abs(ic.p).max(), np.abs(ic.v).max())
    return dict(grid=grid, ic=ic, open=open_loop, overflow=overflow, closed=closed, target=target,
                lp=lp, scale=scale, seconds=time.perf_counter() - start, ks=ks, iks=iks)


def test_criterion_1_kernels(plant, kernel_pair, verdict):
    ks, seconds = kernel_pair
    r100 = kernel_residual(ks[100], plant)
    r200 = kernel_residual(ks[200], plant)
    ratios = {k: r100[k] / r200[k] for k in r100}
    defect = max(max(boundary_defects(k, plant).values()) for k in ks.values())
    ok = all(1.3 <= r <= 2.7 for r in ratios.values()) and defect <= 1e-12 and seconds <= 30
    detail = ", ".join(f"{k} {r:.3f}" for k, r in ratios.items())
    assert verdict("1", ok, f"residual ratios {detail}; max boundary defect {defect:.1e}; {seconds:.1f} s")


def test_criterion_2_roundtrip(plant, kernel_pair, verdict):
    ks = kernel_pair[0][200]
    start = time.perf_counter()
    iks = invert_kernels(ks, plant)
    op = ForwardOperator.from_kernels(ks)
    grid = Grid(200)
    worst = 0.0
    for seed in range(10):
        s = random_smooth_state(grid, plant.n, np.random.default_rng(seed))
        a, b = op.apply(s.u, s.p, s.v)
        u, p = inverse_transform(a, b, s.v, iks)
        worst = max(worst, np.abs(u - s.u).max(), np.abs(p - s.p).max())
    seconds = time.perf_counter() - start
    ok = worst <= 1e-10 and seconds <= 5
    assert verdict("2", ok, f"max roundtrip error {worst:.2e}; {seconds:.2f} s")


def test_criterion_3a_open_loop_growth(scenario, verdict):
    total = scenario["open"].total_norm
    growth = total.max() / total[0]
    ok = scenario["overflow"] or growth > 5
    detail = (f"peak/initial total norm {growth:.3f}, final/initial {total[-1] / total[0]:.3e} "
              f"at t={scenario['open'].t[-1]:g}; overflow={scenario['overflow']}")
    assert verdict("3(a)", ok, detail)


def test_criterion_3b_closed_loop_decay(scenario, verdict):
    traj = scenario["closed"]
    t = np.asarray(traj.t)
    total = traj.total_norm
    at8 = total[np.argmin(np.abs(t - 8.0))]
    ok = at8 <= 0.01 * total[0] and scenario["seconds"] <= 60
    assert verdict("3(b)", ok, f"total norm at t=8 is {at8 / total[0]:.2e} of initial; "
                               f"scenario runtime {scenario['seconds']:.1f} s")


def test_criterion_3c_target_drains(plant, scenario, verdict):
    dx = scenario["grid"].dx
    t = np.array([s.t for s in scenario["closed"].snapshots])
    amax = np.array([np.abs(a).max() for a, _ in scenario["target"]])
    bmax = np.array([np.abs(b).max() for _, b in scenario["target"]])
    ta = 1 / plant.lambda1 + 5 * dx / plant.lambda1
    tb = 1 / plant.lambda1 + 1 / plant.lambda2 + 5 * dx * (1 / plant.lambda1 + 1 / plant.lambda2)
    limit = 1e-2 * scenario["scale"]
    worst_a = amax[t >= ta].max()
    worst_b = bmax[t >= tb].max()
    clear_a = t[np.nonzero(amax > limit)[0].max() + 1]
    clear_b = t[np.nonzero(bmax > limit)[0].max() + 1]
    ok = worst_a <= limit and worst_b <= limit
    detail = (f"max|alpha| for t>={ta:.4f} is {worst_a:.3e}, max|beta| for t>={tb:.4f} is {worst_b:.3e} "
              f"(limit {limit:.0e}; below limit from t={clear_a:.4f} and t={clear_b:.4f}; "
              f"initial sup alpha {amax[0]:.3f}, beta {bmax[0]:.3f})")
    assert verdict("3(c)", ok, detail)


def test_criterion_4_boundary_exact(scenario, verdict):
    worst = max(abs(a[0]) for a, _ in scenario["target"][1:])
    ok = worst <= 1e-8 * scenario["scale"]
    assert verdict("4", ok, f"max |alpha(t,0)| over steps after t=0 is {worst:.2e}")


def test_criterion_5_lyapunov(plant, scenario, verdict):
    lp = scenario["lp"]
    rec = scenario["closed"].arrays()
    t, logv = rec["t"], rec["V"]
    sel = t >= 1 / plant.lambda1 + 1 / plant.lambda2
    steps = np.diff(logv[sel])
    rises = int(np.sum(steps > math.log1p(1e-6)))
    slope = analysis.log_slope(t[sel], logv[sel])
    rho_ok = lp is not None and abs(lp.rho_star - 1.190983) <= 1e-5
    ok = rho_ok and rises == 0 and slope <= -0.5 * lp.K
    detail = (f"rho*={lp.rho_star:.7f}; log K={lp.log_K:.1f}; log V slope {slope:.3f}; "
              f"{rises} of {steps.size} steps increase V beyond 1e-6 (largest factor {math.exp(steps.max()):.3g})")
    assert verdict("5", ok, detail)


def test_criterion_6_obstruction(verdict):
    start = time.perf_counter()
    sc = SimplifiedConfig(lam=1.0, psi=0.5, omega=1.0)
    grid = Grid(400, 0.9, 1.0)
    x = grid.x
    u0f = lambda s: np.sin(np.pi * np.asarray(s))  # noqa: E731
    u0, v0 = u0f(x), 1 + 0.5 * np.cos(np.pi * x)
    us = lambda s: 0.5 * np.asarray(s) * (1 - np.asarray(s))  # noqa: E731
    vs = analysis.s_member_profile(sc, us, 0.8, x)
    times = np.linspace(0, 4, 41)
    probes = [40, 120, 200, 280, 360]
    err_r = err_w = 0.0
    member_ok = not analysis.in_subspace_S(sc, u0, v0, grid)[0]
    worst_p = 0.0
    for kind, rate in (("zero", 1.0), ("sine", 1.0), ("decay", 0.5)):
        U = simulator.scripted_input(kind, rate=rate)
        tr = simulator.simulate_simplified_exact(sc, u0f, v0, U, times, grid)
        R = np.array([analysis.functional_R(sc, u0, v0, u, v, grid).R for u, v in zip(tr.u, tr.v)])
        growth = np.exp(sc.psi * times)
        err_r = max(err_r, np.abs(R / R[0] / growth - 1).max())
        w = np.array([analysis.w_transform(sc, u, v, grid)[probes] for u, v in zip(tr.u, tr.v)])
        err_w = max(err_w, np.abs(w / w[0] / growth[:, None] - 1).max())
        trs = simulator.simulate_simplified_exact(sc, us, vs, U, times, grid)
        for u, v in zip(trs.u, trs.v):
            inside, p = analysis.in_subspace_S(sc, u, v, grid)
            member_ok &= inside
            worst_p = max(worst_p, p)
    seconds = time.perf_counter() - start
    ok = err_r <= 1e-3 and err_w <= 1e-3 and member_ok and seconds <= 10
    assert verdict("6", ok, f"R/R(0) rel err {err_r:.2e}; w ratio rel err {err_w:.2e}; "
                            f"S-member max|P| {worst_p:.2e} stays in S: {member_ok}; {seconds:.1f} s")


def test_criterion_7_fd_order(verdict):
    sc = SimplifiedConfig(lam=1.0, psi=0.5, omega=1.0)
    U = simulator.scripted_input("sine")
    u0f = lambda s: np.sin(np.pi * np.asarray(s))  # noqa: E731
    errs = []
    for m in (100, 200, 400):
        grid = Grid(m, 0.9, 1.0)
        v0 = 1 + 0.5 * np.cos(np.pi * grid.x)
        fd = simulator.simulate_simplified_fd(sc, grid, u0f(grid.x), v0, U, 2.0)
        u, v = simulator.exact_scalar_state(sc, u0f, v0, U, fd.t[-1], grid.x, grid.dt)
        errs.append(math.sqrt(np.sum((fd.u[-1] - u) ** 2 + (fd.v[-1] - v) ** 2) / m))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    ok = min(orders) >= 0.9
    assert verdict("7", ok, f"L2 errors {', '.join(f'{e:.3e}' for e in errs)}; observed orders "
                            f"{orders[0]:.3f}, {orders[1]:.3f}")


def test_criterion_8_delay_odes(verdict):
    sc = SimplifiedConfig(lam=1.0, psi=0.5, omega=1.0)
    dt = 1e-4
    ds = analysis.ode_counterexample(sc, 0.5, lambda t: 0.5 * math.sin(t), 4.0, 1.0, 0.3, dt=dt)
    lag = round(ds.delay / dt)
    ref = np.exp(sc.psi * (ds.t[lag:] - ds.delay)) * ds.w[lag]
    rel = np.abs(ds.w[lag:] / ref - 1).max()
    v0 = lambda s: 1 + 0.5 * math.cos(math.pi * s)  # noqa: E731
    hist = analysis.compatible_history(sc, v0, dt)
    worst = 0.0
    for x1 in (0.1, 0.25, 0.5, 0.75, 1.0):
        d = analysis.ode_counterexample(sc, x1, lambda t: hist(t) if t < 0 else 0.5 * math.sin(t),
                                        2.0, v0(0), v0(x1), dt=dt)
        worst = max(worst, abs(d.w[round(d.delay / dt)]))
    ok = rel <= 1e-3 and worst < 1e-6
    assert verdict("8", ok, f"w growth rel err {rel:.2e}; compatible-history max |w(x1)| {worst:.1e}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
