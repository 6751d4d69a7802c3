"""Discrete operators on a periodic spline space.

All bilinear forms are integrated element by element with the space's
Gauss rule, which is exact for the products involved, so the identities the
energy argument relies on (e.g. ``c . N(c) = 0``) hold to rounding error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .spline import SplineSpace

__all__ = [
    "PeriodicBandMatrix",
    "SingularSystemError",
    "assemble_mass",
    "assemble_bending",
    "assemble_gradient",
    "assemble_form",
    "assemble_load",
    "l2_project",
    "convection_vector",
    "convection_jacobian",
    "solve_linear",
    "quad_values",
]


class SingularSystemError(ArithmeticError):
    """A direct solve hit a (numerically) zero pivot."""


@dataclass(frozen=True)
class PeriodicBandMatrix:
    """Square matrix with nonzeros only where ``(j - i) mod N`` lies in ``[-b, b]``.

    ``bands[i, d + b]`` holds the coefficient coupling row ``i`` to column
    ``(i + d) % N``.  When ``N < 2b + 1`` several offsets map to the same
    column and their coefficients add.
    """

    bands: np.ndarray

    @property
    def size(self) -> int:
        return self.bands.shape[0]

    @property
    def half_bandwidth(self) -> int:
        return (self.bands.shape[1] - 1) // 2

    def entry(self, i: int, j: int) -> float:
        n, b = self.size, self.half_bandwidth
        return float(sum(self.bands[i, d + b] for d in range(-b, b + 1) if (i + d - j) % n == 0))

    def to_dense(self) -> np.ndarray:
        n, b = self.size, self.half_bandwidth
        out = np.zeros((n, n))
        rows = np.arange(n)
        for d in range(-b, b + 1):
            np.add.at(out, (rows, (rows + d) % n), self.bands[:, d + b])
        return out

    def matvec(self, x) -> np.ndarray:
        return kernels.band_matvec(self.bands, np.ascontiguousarray(x, dtype=float))

    __matmul__ = matvec

    def __add__(self, other: "PeriodicBandMatrix") -> "PeriodicBandMatrix":
        return PeriodicBandMatrix(self.bands + other.bands)

    def __sub__(self, other: "PeriodicBandMatrix") -> "PeriodicBandMatrix":
        return PeriodicBandMatrix(self.bands - other.bands)

    def __mul__(self, scalar: float) -> "PeriodicBandMatrix":
        return PeriodicBandMatrix(scalar * self.bands)

    __rmul__ = __mul__

    @classmethod
    def identity(cls, n: int, b: int) -> "PeriodicBandMatrix":
        bands = np.zeros((n, 2 * b + 1))
        bands[:, b] = 1.0
        return cls(bands)

    def triplets(self) -> list[tuple[int, int, float]]:
        dense = self.to_dense()
        rows, cols = np.nonzero(dense)
        return [(int(i), int(j), float(dense[i, j])) for i, j in zip(rows, cols)]

    def dump(self, path) -> None:
        """Write ``row col value`` triplets, one per line, for debugging."""
        with open(path, "w") as fh:
            for i, j, v in self.triplets():
                fh.write(f"{i} {j} {v!r}\n")


def quad_values(space: SplineSpace, c, deriv: int = 0) -> np.ndarray:
    """Values of ``d^deriv v`` at every quadrature node, shape ``(N, nq)``."""
    return kernels.quad_values(np.ascontiguousarray(c, dtype=float), space.piece_table(deriv))


def assemble_form(space: SplineSpace, deriv_test: int, deriv_trial: int) -> PeriodicBandMatrix:
    """Matrix of ``(d^deriv_trial B_j, d^deriv_test B_i)`` in row ``i``, column ``j``."""
    r, b = space.r, space.bandwidth
    w = space.quadrature.weights * space.h
    phi_i = space.piece_table(deriv_test)
    phi_j = space.piece_table(deriv_trial)
    # local[a, l]: test piece a (row (e-a)), trial piece l (column (e-l)), offset a - l
    local = np.einsum("q,aq,lq->al", w, phi_i, phi_j)
    row = np.zeros(2 * b + 1)
    for a in range(r):
        for l in range(r):
            row[a - l + b] += local[a, l]
    return PeriodicBandMatrix(np.tile(row, (space.N, 1)))


def assemble_mass(space: SplineSpace) -> PeriodicBandMatrix:
    return assemble_form(space, 0, 0)


def assemble_bending(space: SplineSpace) -> PeriodicBandMatrix:
    return assemble_form(space, 2, 2)


def assemble_gradient(space: SplineSpace) -> PeriodicBandMatrix:
    return assemble_form(space, 1, 1)


def _element_values(space: SplineSpace, f) -> np.ndarray:
    pts = space.points
    vals = f(pts)
    return np.ascontiguousarray(np.broadcast_to(np.asarray(vals, dtype=float), pts.shape))


def load_from_values(space: SplineSpace, g) -> np.ndarray:
    """``(g, B_i)`` for ``g`` given at the quadrature nodes."""
    return kernels.load_vector(np.ascontiguousarray(g, dtype=float), space.piece_table(0),
                               space.weights)


def assemble_load(space: SplineSpace, f) -> np.ndarray:
    """``(f, B_i)`` for a vectorized callable ``f``."""
    return load_from_values(space, _element_values(space, f))


def l2_project(space: SplineSpace, f, mass: PeriodicBandMatrix | None = None) -> np.ndarray:
    if mass is None:
        mass = assemble_mass(space)
    return solve_linear(mass, assemble_load(space, f))


def convection_vector(space: SplineSpace, c) -> np.ndarray:
    """``(v v', B_i)`` with ``v`` the spline with coefficients ``c``."""
    vec, _ = kernels.convection(np.ascontiguousarray(c, dtype=float), space.piece_table(0),
                                space.piece_table(1), space.weights, False)
    return vec


def convection_jacobian(space: SplineSpace, c) -> PeriodicBandMatrix:
    return PeriodicBandMatrix(convection_with_jacobian(space, c)[1].bands)


def convection_with_jacobian(space: SplineSpace, c) -> tuple[np.ndarray, PeriodicBandMatrix]:
    vec, band = kernels.convection(np.ascontiguousarray(c, dtype=float), space.piece_table(0),
                                   space.piece_table(1), space.weights, True)
    return vec, PeriodicBandMatrix(band)


def solve_linear(K, rhs) -> np.ndarray:
    """Direct solve of ``K x = rhs`` for a band matrix or a dense array.

    Band matrices with ``N >= 4b`` go through the cyclic band kernel; smaller
    ones and dense arrays use pivoted LU.
    """
    rhs = np.ascontiguousarray(rhs, dtype=float)
    if isinstance(K, PeriodicBandMatrix):
        if K.size >= 4 * K.half_bandwidth and K.half_bandwidth > 0:
            try:
                x = kernels.cyclic_band_solve(np.ascontiguousarray(K.bands), rhs)
            except (ZeroDivisionError, np.linalg.LinAlgError) as exc:
                raise SingularSystemError(f"cyclic band solve failed: {exc}") from exc
            if not np.all(np.isfinite(x)):
                raise SingularSystemError("cyclic band solve produced non-finite values")
            return x
        K = K.to_dense()
    K = np.asarray(K, dtype=float)
    try:
        return np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError as exc:
        diag = np.abs(np.linalg.qr(K, mode="r").diagonal())
        raise SingularSystemError(
            f"dense solve failed ({exc}); smallest R pivot {diag.min():.3e} at {int(diag.argmin())}"
        ) from exc
