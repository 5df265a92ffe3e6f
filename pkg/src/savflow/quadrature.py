"""Quadrature on the reference triangle {(x, y): x, y >= 0, x + y <= 1}."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric ``points`` (nq, 3) ordered (l0, l1, l2) with l1 = x, l2 = y;
    ``weights`` sum to the reference area 1/2."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def reference_xy(self) -> np.ndarray:
        return self.points[:, 1:]

    def __len__(self):
        return len(self.weights)


def _bary(xy) -> np.ndarray:
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    return np.column_stack([1.0 - xy[:, 0] - xy[:, 1], xy[:, 0], xy[:, 1]])


def _orbit3(a: float) -> list[tuple[float, float, float]]:
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)]


def _radon7() -> QuadratureRule:
    s15 = math.sqrt(15.0)
    a1, a2 = (6 - s15) / 21, (6 + s15) / 21
    w1, w2 = (155 - s15) / 2400, (155 + s15) / 2400
    pts = [(1 / 3, 1 / 3, 1 / 3)] + _orbit3(a1) + _orbit3(a2)
    wts = [9 / 80] + [w1] * 3 + [w2] * 3
    return QuadratureRule(np.array(pts), np.array(wts), 5)


def collapsed_gauss(degree: int) -> QuadratureRule:
    """Duffy-collapsed tensor Gauss rule, exact for total degree ``degree``."""
    m = max(1, math.ceil((degree + 1) / 2))
    a, wa = roots_legendre(m)
    b, wb = roots_jacobi(m, 1.0, 0.0)
    A, B = np.meshgrid(a, b, indexing="ij")
    W = np.outer(wa, wb) / 8.0
    x = (1 + A) * (1 - B) / 4
    y = (1 + B) / 2
    return QuadratureRule(_bary(np.column_stack([x.ravel(), y.ravel()])), W.ravel(), 2 * m - 1)


@lru_cache(maxsize=None)
def get_rule(degree: int) -> QuadratureRule:
    """Smallest available rule integrating polynomials of total degree ``degree`` exactly."""
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if degree <= 1:
        rule = QuadratureRule(np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([0.5]), 1)
    elif degree == 2:
        rule = QuadratureRule(np.array(_orbit3(1 / 6)), np.full(3, 1 / 6), 2)
    elif degree <= 5:
        rule = _radon7()
    else:
        rule = collapsed_gauss(degree)
    check_exactness(rule)
    return rule


def monomial_integral(a: int, b: int) -> float:
    """Exact integral of x^a y^b over the reference triangle."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def check_exactness(rule: QuadratureRule, tol: float = 1e-13) -> None:
    x, y = rule.reference_xy.T
    for total in range(rule.degree + 1):
        for a in range(total + 1):
            b = total - a
            approx = float(np.dot(rule.weights, x ** a * y ** b))
            exact = monomial_integral(a, b)
            if abs(approx - exact) > tol * max(1.0, exact):
                raise AssertionError(f"rule of declared degree {rule.degree} fails on x^{a} y^{b}")
