"""Problem data for the three experiments: manufactured flow on the unit square,
channel flow past a cylinder, and the forced flow between offset circles."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .mesh import CYLINDER, INFLOW, INNER_CIRCLE, OUTER_CIRCLE, OUTFLOW, WALLS
from .spaces import DirichletBc

TWO_PI = 2.0 * math.pi
GROWTH = 0.01  # amplitude grows as 1 + GROWTH * t


# -- manufactured solution ---------------------------------------------------

def mms_velocity(x, y, t):
    a = 1.0 + GROWTH * t
    return a * np.sin(TWO_PI * y), a * np.cos(TWO_PI * x)


def mms_velocity_grad(x, y, t):
    """``G[c][d] = d u_c / d x_d``."""
    a = 1.0 + GROWTH * t
    zero = np.zeros_like(np.asarray(x, dtype=float))
    return [[zero, a * TWO_PI * np.cos(TWO_PI * y)],
            [-a * TWO_PI * np.sin(TWO_PI * x), zero]]


def mms_pressure(x, y, t):
    return np.asarray(x, dtype=float) + y


def mms_force(nu: float) -> Callable:
    """Body force making the manufactured pair an exact Navier-Stokes solution."""
    k2 = TWO_PI ** 2

    def f(x, y, t):
        a = 1.0 + GROWTH * t
        sx, cx = np.sin(TWO_PI * x), np.cos(TWO_PI * x)
        sy, cy = np.sin(TWO_PI * y), np.cos(TWO_PI * y)
        f1 = GROWTH * sy + nu * a * k2 * sy + a * a * TWO_PI * cx * cy + 1.0
        f2 = GROWTH * cx + nu * a * k2 * cx - a * a * TWO_PI * sx * sy + 1.0
        return f1, f2

    return f


def mms_strong_residual(nu: float, n_points: int = 20, seed: int = 0) -> float:
    """Largest pointwise momentum/continuity residual of the manufactured data.

    The residual ``u_t + (u.grad)u + grad p - nu lap u - f`` is built
    symbolically from the exact fields, so it checks the hand-derived force
    independently.
    """
    import sympy as sp

    X, Y, T = sp.symbols("x y t", real=True)
    a = 1 + sp.Rational(1, 100) * T
    u = sp.Matrix([a * sp.sin(2 * sp.pi * Y), a * sp.cos(2 * sp.pi * X)])
    p = X + Y
    strong = []
    for c in range(2):
        conv = u[0] * sp.diff(u[c], X) + u[1] * sp.diff(u[c], Y)
        lap = sp.diff(u[c], X, 2) + sp.diff(u[c], Y, 2)
        strong.append(sp.diff(u[c], T) + conv + sp.diff(p, (X, Y)[c]) - nu * lap)
    div = sp.diff(u[0], X) + sp.diff(u[1], Y)
    g = sp.lambdify((X, Y, T), [strong[0], strong[1], div], "numpy")

    rng = np.random.default_rng(seed)
    x, y = rng.random(n_points), rng.random(n_points)
    t = rng.random(n_points)
    s1, s2, d = (np.broadcast_to(np.asarray(v, dtype=float), x.shape) for v in g(x, y, t))
    f1, f2 = mms_force(nu)(x, y, t)
    return float(max(np.max(np.abs(s1 - f1)), np.max(np.abs(s2 - f2)), np.max(np.abs(d))))


def mms_boundary() -> list[DirichletBc]:
    return [DirichletBc([1], mms_velocity)]


# -- cylinder in a channel ---------------------------------------------------

CHANNEL_PEAK = 6.0 / 0.41 ** 2


def channel_profile(x, y, t):
    u1 = CHANNEL_PEAK * math.sin(math.pi * t / 8.0) * y * (0.41 - y)
    return u1, np.zeros_like(u1)


def no_slip(x, y, t):
    z = np.zeros_like(np.asarray(x, dtype=float))
    return z, z


def channel_boundary() -> list[DirichletBc]:
    """Parabolic profile at both ends, no-slip on walls and obstacle."""
    return [DirichletBc([INFLOW, OUTFLOW], channel_profile), DirichletBc([WALLS, CYLINDER], no_slip)]


# -- offset circles ----------------------------------------------------------

def rotating_force(x, y, t):
    r = 1.0 - x * x - y * y
    return -4.0 * y * r, 4.0 * x * r


def annulus_boundary() -> list[DirichletBc]:
    return [DirichletBc([OUTER_CIRCLE, INNER_CIRCLE], no_slip)]
