"""Implicit Euler-Maruyama time stepping with a Newton solve per step.

One step finds ``c`` with

    F(c) = (M + k nu A - k G) c + k N(c) - M c_n - s_n = 0,

where ``M``, ``A``, ``G`` are the mass, bending and gradient matrices,
``N`` the convection vector and ``s_n`` the noise load
``(B(u_n) dW_n, B_i)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, asdict
import json
import math

import numpy as np

from . import _pykernels
from ._backend import BACKEND, kernels
from .assembly import (
    PeriodicBandMatrix,
    assemble_bending,
    assemble_gradient,
    assemble_mass,
    l2_project,
    solve_linear,
)
from .noise import RNG_ALGORITHM, DiffusionModel, WienerPath, diffusion_load, increments_at
from .spline import SplineSpace, enforce_zero_mean

__all__ = [
    "NewtonDivergence",
    "SchemeParams",
    "Operators",
    "Trajectory",
    "assemble_operators",
    "initial_state",
    "step",
    "newton_solve",
    "run_path",
    "run_increments",
]


class NewtonDivergence(RuntimeError):
    """Newton's method failed to reach the residual tolerance within the iteration budget."""

    def __init__(self, message, *, step_index=None, residuals=None, seed=None, M=None):
        super().__init__(message)
        self.step_index = step_index
        self.residuals = list(residuals or [])
        self.seed = seed
        self.M = M

    def details(self) -> dict:
        return {"error": "NewtonDivergence", "message": str(self), "step_index": self.step_index,
                "residuals": self.residuals, "seed": self.seed, "M": self.M}


@dataclass(frozen=True)
class SchemeParams:
    nu: float
    T: float
    M: int
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    damping: float = 0.5
    linearized: bool = False

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"viscosity nu={self.nu} must be positive")
        if not self.T > 0:
            raise ValueError(f"horizon T={self.T} must be positive")
        if self.M < 1:
            raise ValueError(f"step count M={self.M} must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping={self.damping} must lie in (0, 1]")

    @property
    def k(self) -> float:
        return self.T / self.M


@dataclass(frozen=True)
class Operators:
    space: SplineSpace
    mass: PeriodicBandMatrix
    bending: PeriodicBandMatrix
    gradient: PeriodicBandMatrix
    system: PeriodicBandMatrix  # M + k nu A - k G
    k: float


def assemble_operators(space: SplineSpace, params: SchemeParams) -> Operators:
    mass = assemble_mass(space)
    bending = assemble_bending(space)
    gradient = assemble_gradient(space)
    k = params.k
    system = PeriodicBandMatrix(mass.bands + (k * params.nu) * bending.bands - k * gradient.bands)
    return Operators(space, mass, bending, gradient, system, k)


def initial_state(space: SplineSpace, u0, mass=None) -> np.ndarray:
    """Mean-free L2 projection of ``u0`` (a vectorized callable)."""
    return enforce_zero_mean(space, l2_project(space, u0, mass))


def _dual_norm(space: SplineSpace, f: np.ndarray) -> float:
    # Euclidean norm of a load vector scaled to match L2 norms of functions
    return math.sqrt(float(f @ f) / space.h)


def newton_solve(ops: Operators, params: SchemeParams, rhs: np.ndarray, guess: np.ndarray):
    """Solve ``F(c) = 0`` for the step right-hand side ``rhs = M c_n + s_n``.

    Newton's method with the analytic Jacobian, starting from ``guess``;
    a step that does not reduce the residual is shortened by ``damping``.
    Returns ``(c, residual_history)`` and raises ``NewtonDivergence``.
    """
    space = ops.space
    tol = params.newton_tol * (1.0 + _dual_norm(space, rhs))
    args = (np.ascontiguousarray(ops.system.bands), np.ascontiguousarray(rhs, dtype=float),
            np.ascontiguousarray(guess, dtype=float), space.piece_table(0), space.piece_table(1),
            space.weights, ops.k, space.h, tol, params.newton_max_iter, params.damping,
            params.linearized)
    try:
        if space.N >= 4 * space.bandwidth:
            c, history = kernels.newton_solve(*args)
        else:
            c, history = _pykernels.newton_solve(*args, solver=_dense_band_solve, kern=kernels)
    except ZeroDivisionError as exc:
        raise NewtonDivergence(f"singular Newton system: {exc}") from exc
    if not history[-1] <= tol:
        raise NewtonDivergence(
            f"Newton residual {history[-1]:.3e} above tolerance {tol:.3e} "
            f"after {len(history) - 1} iterations",
            residuals=history,
        )
    return c, history


def _dense_band_solve(bands, rhs):
    return solve_linear(PeriodicBandMatrix(bands), rhs)


def step(space: SplineSpace, ops: Operators, params: SchemeParams, model: DiffusionModel,
         c_n, dW: float) -> np.ndarray:
    c_n = np.asarray(c_n, dtype=float)
    rhs = ops.mass.matvec(c_n)
    if dW != 0.0 and model.id != "zero":
        rhs = rhs + dW * diffusion_load(model, space, c_n)
    c, _ = newton_solve(ops, params, rhs, c_n)
    return c


@dataclass
class Trajectory:
    states: np.ndarray  # shape (M + 1, N)
    T: float
    newton_iterations: np.ndarray
    final_residuals: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.states.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.M + 1)

    def export(self, csv_path, json_path=None) -> None:
        n = self.states.shape[1]
        with open(csv_path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["n", "t_n"] + [f"coefficient_{i}" for i in range(n)])
            for idx, (t, row) in enumerate(zip(self.times, self.states)):
                out.writerow([idx, repr(float(t))] + [repr(float(v)) for v in row])
        if json_path is not None:
            meta = dict(self.metadata)
            meta["newton_iterations"] = [int(v) for v in self.newton_iterations]
            meta["final_residuals"] = [float(v) for v in self.final_residuals]
            with open(json_path, "w") as fh:
                json.dump(meta, fh, indent=2, sort_keys=True)


def run_increments(space: SplineSpace, params: SchemeParams, model: DiffusionModel, c0,
                   dW: np.ndarray, ops: Operators | None = None) -> Trajectory:
    """Iterate the scheme over the given increments starting from coefficients ``c0``."""
    if len(dW) != params.M:
        raise ValueError(f"expected {params.M} increments, got {len(dW)}")
    if ops is None:
        ops = assemble_operators(space, params)
    states = np.empty((params.M + 1, space.N))
    states[0] = c0
    iters = np.zeros(params.M, dtype=int)
    finals = np.zeros(params.M)
    noisy = model.id != "zero"
    for n in range(params.M):
        c_n = states[n]
        rhs = ops.mass.matvec(c_n)
        if noisy:
            rhs += dW[n] * diffusion_load(model, space, c_n)
        try:
            c, hist = newton_solve(ops, params, rhs, c_n)
        except NewtonDivergence as exc:
            exc.step_index = n
            exc.M = params.M
            raise
        states[n + 1] = c
        iters[n] = len(hist) - 1
        finals[n] = hist[-1]
    meta = {"params": asdict(params), "model": model.describe(), "space": space.describe(),
            "backend": BACKEND}
    return Trajectory(states, params.T, iters, finals, meta)


def run_path(space: SplineSpace, params: SchemeParams, model: DiffusionModel, u0,
             path: WienerPath, ops: Operators | None = None) -> Trajectory:
    """Run one path; ``u0`` is a vectorized callable or an initial coefficient vector."""
    if abs(params.T - path.T) > 1e-12 * params.T:
        raise ValueError(f"path horizon {path.T} differs from scheme horizon {params.T}")
    dW = increments_at(path, params.M)
    if ops is None:
        ops = assemble_operators(space, params)
    c0 = initial_state(space, u0, ops.mass) if callable(u0) else np.asarray(u0, dtype=float)
    try:
        traj = run_increments(space, params, model, c0, dW, ops)
    except NewtonDivergence as exc:
        exc.seed = list(path.seed)
        raise
    traj.metadata.update({"seed": list(path.seed), "rng_algorithm": RNG_ALGORITHM})
    return traj
