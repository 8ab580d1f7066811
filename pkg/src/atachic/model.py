"""Plant description, discretization grid and state samples."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import matops


class ConfigError(ValueError):
    """Invalid plant or grid description.

    ``errors`` holds ``(field, message)`` pairs, one per violated invariant.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{msg}" for _, msg in self.errors))


@dataclass(frozen=True, eq=False)
class PlantConfig:
    """Coefficients of the two transport equations and the n zero-speed states.

    ``theta1``/``theta2`` are the rows coupling v into u and p,
    ``omega1``/``omega2`` the columns coupling u and p into v, ``psi`` the
    internal dynamics of v, ``q`` and ``rho`` the reflection coefficients at
    x=0 and x=1.
    """

    n: int
    lambda1: float
    lambda2: float
    sigma12: float
    sigma21: float
    theta1: np.ndarray
    theta2: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    psi: np.ndarray
    q: float
    rho: float
    hurwitz: bool | None = field(default=None, compare=False)
    sym_neg_definite: bool | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("theta1", "theta2", "omega1", "omega2"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float).ravel())
        object.__setattr__(self, "psi", np.array(self.psi, dtype=float, ndmin=2))
        for name in ("lambda1", "lambda2", "sigma12", "sigma21", "q", "rho"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def max_speed(self):
        return max(self.lambda1, self.lambda2)

    def as_dict(self):
        return {
            "n": self.n,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "sigma12": self.sigma12,
            "sigma21": self.sigma21,
            "theta1": self.theta1.tolist(),
            "theta2": self.theta2.tolist(),
            "omega1": self.omega1.tolist(),
            "omega2": self.omega2.tolist(),
            "psi": self.psi.tolist(),
            "q": self.q,
            "rho": self.rho,
        }

    def __eq__(self, other):
        if not isinstance(other, PlantConfig):
            return NotImplemented
        return self.as_dict() == other.as_dict()


@dataclass(frozen=True)
class SimplifiedConfig:
    """Scalar transport state u feeding one zero-speed state v (u_t = -lambda u_x, v_t = psi v + omega u)."""

    lam: float
    psi: float
    omega: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError([("lambda", "lambda must be positive")])


def example_plant():
    """The n=2 open-loop unstable example used for the closed-loop demonstration."""
    return PlantConfig(
        n=2, lambda1=1.25, lambda2=0.9, sigma12=2.5, sigma21=-3.5,
        theta1=[0.25, 0.1], theta2=[0.25, -0.1],
        omega1=[0.3, 0.8], omega2=[-0.65, 0.3],
        psi=[[-1.5, 2.0], [-1.0, -2.0]], q=-0.7, rho=0.5,
    )


def validate_config(cfg):
    """Check every invariant of ``cfg`` and attach the stability flags.

    Returns a copy with ``hurwitz`` and ``sym_neg_definite`` filled in.
    Raises ConfigError listing all offending fields at once.
    """
    errors = []
    n = cfg.n
    if not isinstance(n, (int, np.integer)) or n < 1:
        errors.append(("n", "n must be a positive integer"))
        n = None
    for name in ("lambda1", "lambda2"):
        val = getattr(cfg, name)
        if not np.isfinite(val) or val <= 0:
            errors.append((name, f"{name} must be positive"))
    for name in ("q", "rho"):
        val = getattr(cfg, name)
        if not np.isfinite(val) or val == 0:
            errors.append((name, f"{name} must be nonzero"))
    for name in ("sigma12", "sigma21"):
        if not np.isfinite(getattr(cfg, name)):
            errors.append((name, f"{name} must be finite"))
    if n is not None:
        for name in ("theta1", "theta2", "omega1", "omega2"):
            arr = getattr(cfg, name)
            if arr.shape != (n,):
                errors.append((name, f"{name} must have length {n}, got {arr.size}"))
            elif not np.all(np.isfinite(arr)):
                errors.append((name, f"{name} has non-finite entries"))
        if cfg.psi.shape != (n, n):
            errors.append(("psi", f"psi must be {n}x{n}, got {cfg.psi.shape[0]}x{cfg.psi.shape[1]}"))
        elif not np.all(np.isfinite(cfg.psi)):
            errors.append(("psi", "psi has non-finite entries"))
    if errors:
        raise ConfigError(errors)
    hurwitz = matops.is_hurwitz(cfg.psi)
    neg_def = matops.sym_decay_margin(cfg.psi) is not None
    return replace(cfg, hurwitz=hurwitz, sym_neg_definite=neg_def)


@dataclass(frozen=True)
class Grid:
    """Uniform node grid x_j = j/m on [0, 1] with a CFL-limited time step."""

    m: int
    cfl: float = 0.9
    max_speed: float = 1.0

    def __post_init__(self):
        errors = []
        if int(self.m) != self.m or self.m < 8:
            errors.append(("m", "grid needs m >= 8 cells"))
        if not 0 < self.cfl <= 1:
            errors.append(("cfl", "cfl must lie in (0, 1]"))
        if not self.max_speed > 0:
            errors.append(("max_speed", "max_speed must be positive"))
        if errors:
            raise ConfigError(errors)

    @classmethod
    def for_plant(cls, cfg, m, cfl=0.9):
        return cls(m=m, cfl=cfl, max_speed=cfg.max_speed)

    @property
    def dx(self):
        return 1.0 / self.m

    @property
    def dt(self):
        return self.cfl * self.dx / self.max_speed

    @property
    def x(self):
        return np.linspace(0.0, 1.0, self.m + 1)


@dataclass(frozen=True, eq=False)
class StateSnapshot:
    t: float
    u: np.ndarray
    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        p = np.array(self.p, dtype=float)
        v = np.array(self.v, dtype=float, ndmin=2)
        if u.ndim != 1 or p.shape != u.shape or v.shape[1] != u.size:
            raise ValueError(
                f"inconsistent state shapes u{u.shape} p{p.shape} v{v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise ValueError(f"state at t={self.t} has non-finite entries")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v", v)

    @property
    def m(self):
        return self.u.size - 1

    @property
    def n(self):
        return self.v.shape[0]


_PRESET_RE = re.compile(r"^\s*(\w+)\s*(?:\((.*)\))?\s*$")


def parse_preset(text):
    """Split ``"sine(1,1,1)"`` into ``("sine", ["1", "1", "1"])``."""
    match = _PRESET_RE.match(text)
    if not match:
        raise ValueError(f"cannot parse initial-condition preset {text!r}")
    name, args = match.group(1), match.group(2)
    args = [a.strip() for a in args.split(",")] if args else []
    return name, args


def initial_condition(preset, grid, n, *params):
    """Build the t=0 snapshot from a named preset.

    Presets: ``zero``; ``constant(c_u, c_p, c_v)``; ``sine(k_u, k_p, k_v)``
    giving sin(2*pi*k*x) on each field; ``samples(path)`` reading a CSV with
    columns u, p, v_1..v_n and one row per node. ``preset`` may also be the
    textual form, e.g. ``"sine(1,1,1)"``.
    """
    if not params and "(" in preset:
        preset, params = parse_preset(preset)
    x = grid.x
    size = x.size
    if preset == "zero":
        return StateSnapshot(0.0, np.zeros(size), np.zeros(size), np.zeros((n, size)))
    if preset == "constant":
        cu, cp, cv = (float(a) for a in (tuple(params) + (0.0, 0.0, 0.0))[:3])
        return StateSnapshot(0.0, np.full(size, cu), np.full(size, cp), np.full((n, size), cv))
    if preset == "sine":
        ku, kp, kv = (float(a) for a in (tuple(params) + (1.0, 1.0, 1.0))[:3])
        v = np.tile(np.sin(2 * np.pi * kv * x), (n, 1))
        return StateSnapshot(0.0, np.sin(2 * np.pi * ku * x), np.sin(2 * np.pi * kp * x), v)
    if preset == "samples":
        if not params:
            raise ValueError("samples preset needs a file path")
        return _read_samples(str(params[0]), size, n)
    raise ValueError(f"unknown initial-condition preset {preset!r}")


def _read_samples(path, size, n):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != size:
        raise ValueError(f"sample file {path} has {len(rows)} rows, grid needs {size}")
    try:
        u = np.array([float(r["u"]) for r in rows])
        p = np.array([float(r["p"]) for r in rows])
        v = np.array([[float(r[f"v_{k + 1}"]) for r in rows] for k in range(n)])
    except KeyError as exc:
        raise ValueError(f"sample file {path} lacks column {exc.args[0]}") from None
    return StateSnapshot(0.0, u, p, v)


def random_smooth_state(grid, n, rng, modes=4):
    """Random sum of low sine/cosine modes on every field, used for roundtrip checks."""
    x = grid.x

    def field_():
        a = rng.normal(size=modes) / np.arange(1, modes + 1)
        b = rng.normal(size=modes) / np.arange(1, modes + 1)
        k = np.arange(1, modes + 1)[:, None]
        return a @ np.sin(np.pi * k * x) + b @ np.cos(np.pi * k * x)

    return StateSnapshot(0.0, field_(), field_(), np.array([field_() for _ in range(n)]))
