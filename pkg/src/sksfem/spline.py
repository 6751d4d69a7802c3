"""Uniform periodic B-spline spaces on ``[0, L)``.

Basis function ``i`` is the cardinal B-spline of order ``r`` (degree
``r - 1``) shifted to start at knot ``i``, so its support covers elements
``i, i+1, ..., i+r-1`` (indices modulo ``N``).  On element ``e`` the active
functions are ``(e - j) % N`` for ``j = 0..r-1``, each contributing its
``j``-th polynomial piece.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np

__all__ = [
    "QuadratureRule",
    "SplineSpace",
    "build_space",
    "cardinal_bspline",
    "eval_basis",
    "function_eval",
    "mean_value",
    "enforce_zero_mean",
    "refine_coefficients",
]


def cardinal_bspline(s, order: int, deriv: int = 0):
    """Cardinal B-spline of the given order (support ``[0, order)``) and its derivatives.

    Pieces are right-continuous at the integer knots.
    """
    s = np.asarray(s, dtype=float)
    if deriv > 0:
        if order == 1:
            return np.zeros_like(s)
        return cardinal_bspline(s, order - 1, deriv - 1) - cardinal_bspline(s - 1.0, order - 1, deriv - 1)
    if order == 1:
        return ((s >= 0.0) & (s < 1.0)).astype(float)
    k = order
    return (s * cardinal_bspline(s, k - 1) + (k - s) * cardinal_bspline(s - 1.0, k - 1)) / (k - 1)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on the unit element ``[0, 1]``."""

    nodes: np.ndarray
    weights: np.ndarray
    exactness: int

    @classmethod
    def gauss_legendre(cls, points: int) -> "QuadratureRule":
        x, w = np.polynomial.legendre.leggauss(points)
        return cls(nodes=0.5 * (x + 1.0), weights=0.5 * w, exactness=2 * points - 1)

    @property
    def points_per_element(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class SplineSpace:
    L: float
    N: int
    r: int
    origin: float = 0.0
    quad_points: int = field(default=0)

    def __post_init__(self):
        if self.quad_points == 0:
            object.__setattr__(self, "quad_points", math.ceil((3 * self.r - 2) / 2))

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def degree(self) -> int:
        return self.r - 1

    @property
    def bandwidth(self) -> int:
        return self.r - 1

    @cached_property
    def quadrature(self) -> QuadratureRule:
        return QuadratureRule.gauss_legendre(self.quad_points)

    @cached_property
    def weights(self) -> np.ndarray:
        """Physical quadrature weights per element (``h * w_q``)."""
        return self.h * self.quadrature.weights

    @cached_property
    def points(self) -> np.ndarray:
        """Physical quadrature nodes, shape ``(N, nq)``."""
        e = np.arange(self.N)[:, None]
        return self.origin + self.h * (e + self.quadrature.nodes[None, :])

    def piece_table(self, deriv: int) -> np.ndarray:
        """``table[j, q]``: derivative ``deriv`` of piece ``j`` at node ``q`` (physical scaling)."""
        return self._tables[deriv]

    @cached_property
    def _tables(self) -> tuple:
        t = self.quadrature.nodes
        j = np.arange(self.r)[:, None]
        return tuple(
            np.ascontiguousarray(cardinal_bspline(j + t[None, :], self.r, d) / self.h**d)
            for d in range(self.r)
        )

    def describe(self) -> dict:
        return {"L": self.L, "N": self.N, "r": self.r, "h": self.h, "origin": self.origin,
                "quad_points": self.quad_points}


def build_space(L: float, N: int, r: int, origin: float = 0.0) -> SplineSpace:
    if r < 4:
        raise ValueError(f"order r={r} is too low: H2-conforming elements need r >= 4")
    if N < r:
        raise ValueError(f"element count N={N} must be at least the order r={r}")
    if not L > 0:
        raise ValueError(f"domain length L={L} must be positive")
    return SplineSpace(L=float(L), N=int(N), r=int(r), origin=float(origin))


def _locate(space: SplineSpace, x):
    s = np.mod((np.asarray(x, dtype=float) - space.origin) / space.h, space.N)
    e = np.floor(s)
    t = s - e
    # mod can round up to N for tiny negative inputs
    e = e.astype(int) % space.N
    return e, t


def eval_basis(space: SplineSpace, x: float, deriv: int = 0) -> list[tuple[int, float]]:
    """Nonzero basis values at ``x`` as ``(index, value)`` pairs, ordered by increasing index offset."""
    e, t = _locate(space, x)
    e = int(e)
    out = []
    for j in range(space.r - 1, -1, -1):
        val = float(cardinal_bspline(j + t, space.r, deriv)) / space.h**deriv
        out.append(((e - j) % space.N, val))
    return out


def function_eval(space: SplineSpace, c, x, deriv: int = 0):
    """Evaluate ``sum_i c_i d^deriv B_i`` at ``x`` (scalar or array)."""
    c = np.asarray(c, dtype=float)
    e, t = _locate(space, x)
    out = np.zeros(np.shape(e))
    for j in range(space.r):
        out = out + c[(e - j) % space.N] * cardinal_bspline(j + t, space.r, deriv)
    out = out / space.h**deriv
    return float(out) if np.ndim(out) == 0 else out


def mean_value(space: SplineSpace, c) -> float:
    # every uniform periodic B-spline integrates to h
    return float(np.sum(c)) * space.h / space.L


def enforce_zero_mean(space: SplineSpace, c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    return c - mean_value(space, c)


def refine_coefficients(space: SplineSpace, c, factor: int) -> np.ndarray:
    """Exact coefficients of the same spline on the mesh refined ``factor`` times (a power of two).

    ``c`` may carry leading batch axes; the last axis indexes basis functions.
    """
    c = np.asarray(c, dtype=float)
    if factor < 1 or factor & (factor - 1):
        raise ValueError(f"refinement factor {factor} is not a power of two")
    r = space.r
    mask = np.array([math.comb(r, m) for m in range(r + 1)], dtype=float) / 2.0 ** (r - 1)
    while factor > 1:
        n = c.shape[-1]
        fine = np.zeros(c.shape[:-1] + (2 * n,))
        for m in range(r + 1):
            # targets are distinct for fixed m, so plain fancy-index accumulation is safe
            fine[..., (2 * np.arange(n) + m) % (2 * n)] += mask[m] * c
        c = fine
        factor //= 2
    return c
