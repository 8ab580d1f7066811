from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg

from atachic import kernels
from atachic.model import PlantConfig


def test_diagonal_and_edge_data_exact(cfg, ks100):
    for name, val in kernels.boundary_defects(ks100, cfg).items():
        assert val <= 1e-12, name
    assert ks100.K2[0, 0] == pytest.approx(-2.5 / 2.15, abs=1e-14)


def test_transition_table_matches_scipy(cfg):
    table = kernels.transition_table(cfg.psi, 20, 1 / cfg.lambda1)
    for r in (0, 7, 20):
        assert np.allclose(table[r], scipy.linalg.expm(cfg.psi * r / 20 / cfg.lambda1), rtol=1e-12)
    assert np.allclose(kernels.eval_transition(cfg, 0.2, 0.7, 2),
                       scipy.linalg.expm(cfg.psi * 0.5 / cfg.lambda2), rtol=1e-12)
    with pytest.raises(ValueError):
        kernels.eval_transition(cfg, -0.1, 0.5, 1)


def test_g_and_r_against_direct_quadrature(cfg, ks100):
    """Explicit formulas evaluated node by node with scipy's matrix exponential."""
    m = ks100.m
    x = np.linspace(0, 1, m + 1)
    for i, j in [(0, m), (10, 60), (50, 51), (0, 37)]:
        tau = x[i:j + 1]
        f_g = np.array([(ks100.K1[k, j] * cfg.theta1 + ks100.K2[k, j] * cfg.theta2)
                        @ scipy.linalg.expm(cfg.psi * (x[k] - x[i]) / cfg.lambda1) for k in range(i, j + 1)])
        g = (-cfg.theta1 @ scipy.linalg.expm(cfg.psi * (x[j] - x[i]) / cfg.lambda1)
             + np.trapezoid(f_g, tau, axis=0)) / cfg.lambda1
        assert np.allclose(ks100.G[i, j], g, atol=1e-11)
        f_r = np.array([(ks100.Q1[k, j] * cfg.theta1 + ks100.Q2[k, j] * cfg.theta2)
                        @ scipy.linalg.expm(-cfg.psi * (x[k] - x[i]) / cfg.lambda2) for k in range(i, j + 1)])
        r = (cfg.theta2 @ scipy.linalg.expm(cfg.psi * (x[i] - x[j]) / cfg.lambda2)
             - np.trapezoid(f_r, tau, axis=0)) / cfg.lambda2
        assert np.allclose(ks100.R[i, j], r, atol=1e-10 * max(1, np.abs(r).max()))


def test_uncoupled_plant_has_zero_kernels():
    cfg = PlantConfig(n=1, lambda1=1.0, lambda2=2.0, sigma12=0.0, sigma21=0.0, theta1=[0.0],
                      theta2=[0.0], omega1=[1.0], omega2=[1.0], psi=[[-1.0]], q=1.0, rho=0.5)
    ks = kernels.solve_direct_kernels(cfg, 32)
    for name in ("K1", "K2", "Q1", "Q2", "G", "R"):
        assert not np.any(getattr(ks, name)), name


def test_no_zero_speed_coupling_gives_closed_form_k2():
    # with sigma21 = 0 and theta = 0, K2 solves lam1 K2_x - lam2 K2_xi = -sigma12 K1 and
    # K1 = 0 is consistent only if its source vanishes, which it does here
    cfg = PlantConfig(n=1, lambda1=1.0, lambda2=1.0, sigma12=1.0, sigma21=0.0, theta1=[0.0],
                      theta2=[0.0], omega1=[0.0], omega2=[0.0], psi=[[-1.0]], q=1.0, rho=1.0)
    ks = kernels.solve_direct_kernels(cfg, 64)
    # K1 is driven only by the edge relation K1(x, 1) = K2(x, 1)
    assert np.allclose(ks.K1[:, -1], ks.K2[:, -1])
    assert np.allclose(ks.Q1, 0.0) and np.allclose(ks.Q2, 0.0)


def test_residual_is_small_and_refines(cfg, ks100, ks200):
    r100 = kernels.kernel_residual(ks100, cfg)
    r200 = kernels.kernel_residual(ks200, cfg)
    for name in r100:
        assert r200[name] < r100[name], name


def test_residual_detects_perturbation(cfg, ks100):
    K1 = ks100.K1.copy()
    K1[40, 70] += 1.0
    bad = replace(ks100, K1=K1)
    assert kernels.kernel_residual(bad, cfg)["K1"] >= cfg.lambda1 * ks100.m / 2


def test_convergence_error(cfg):
    with pytest.raises(kernels.KernelConvergenceError) as exc:
        kernels.solve_direct_kernels(cfg, 32, max_iter=1)
    assert exc.value.iterations == 1


def test_bad_lattice(cfg):
    with pytest.raises(ValueError):
        kernels.solve_direct_kernels(cfg, 8)


def test_resample_keeps_shared_nodes(ks200):
    coarse = ks200.on_grid(100)
    upper = np.triu(np.ones((101, 101), dtype=bool))
    assert np.allclose(coarse.Q2[upper], ks200.Q2[::2, ::2][upper], rtol=1e-13, atol=1e-12)
    assert np.allclose(coarse.G, ks200.G[::2, ::2], atol=1e-12)
    assert coarse.on_grid(100) is coarse


def test_resample_exact_for_linear_fields():
    x = np.linspace(0, 1, 41)
    f = np.triu(2 * x[:, None] - 3 * x[None, :] + 1)
    y = np.linspace(0, 1, 58)
    expect = np.triu(2 * y[:, None] - 3 * y[None, :] + 1)
    away = y[None, :] - y[:, None] >= 1 / 40
    assert np.allclose(kernels.resample_triangle(f, 57)[away], expect[away], atol=1e-13)


def test_nodes_order(ks100):
    i, j = ks100.nodes()
    assert np.all(i <= j) and i.size == 101 * 102 // 2
