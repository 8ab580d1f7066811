"""SVG figures written next to the CSV outputs of the command-line tool."""

from __future__ import annotations

import matplotlib
import numpy as np
from matplotlib.figure import Figure

# fixed salt and no date stamp so repeated runs produce identical files
matplotlib.rcParams["svg.hashsalt"] = "atachic"
_SVG_META = {"Date": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)


def plot_lines(t, columns, path, title="", logy=False, xlabel="t"):
    """One line per entry of ``columns`` (name -> values) against ``t``."""
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.add_subplot()
    t = np.asarray(t, dtype=float)
    for name, vals in columns.items():
        vals = np.asarray(vals, dtype=float)
        if logy:
            vals = np.where(vals > 0, vals, np.nan)
        ax.plot(t, vals, label=name, lw=1.2)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    _save(fig, path)
    return path


def plot_norms(rec, path):
    """L2 norms (log scale) and the boundary input from a norms record."""
    fig = Figure(figsize=(6.4, 6.0))
    ax1, ax2 = fig.subplots(2, 1, sharex=True)
    t = rec["t"]
    for name in ("norm_u", "norm_p", "norm_v"):
        ax1.semilogy(t, np.where(rec[name] > 0, rec[name], np.nan), label=name, lw=1.2)
    total = np.sqrt(rec["norm_u"] ** 2 + rec["norm_p"] ** 2 + rec["norm_v"] ** 2)
    ax1.semilogy(t, total, "k--", label="total", lw=1.0)
    ax1.set_ylabel("L2 norm")
    ax1.legend()
    ax1.grid(alpha=0.3)
    ax2.plot(t, rec["U"], lw=1.2)
    ax2.set_ylabel("U(t)")
    ax2.set_xlabel("t")
    ax2.grid(alpha=0.3)
    _save(fig, path)
    return path


def plot_spacetime(t, x, field, path, title=""):
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.add_subplot()
    mesh = ax.pcolormesh(x, t, field, shading="auto", cmap="RdBu_r")
    fig.colorbar(mesh, ax=ax)
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    ax.set_title(title)
    _save(fig, path)
    return path


def plot_kernels(ks, path):
    """Scalar kernels over the triangle, blank below the diagonal."""
    x = np.linspace(0.0, 1.0, ks.m + 1)
    lower = np.tril(np.ones((ks.m + 1, ks.m + 1), dtype=bool), -1)
    fig = Figure(figsize=(8.0, 7.0))
    axes = fig.subplots(2, 2)
    for ax, name in zip(axes.ravel(), ("K1", "K2", "Q1", "Q2")):
        data = np.ma.masked_where(lower, getattr(ks, name))
        mesh = ax.pcolormesh(x, x, data, shading="auto", cmap="viridis")
        fig.colorbar(mesh, ax=ax)
        ax.set_title(name)
        ax.set_xlabel("xi")
        ax.set_ylabel("x")
    _save(fig, path)
    return path
