"""Scalar Wiener paths with dyadic coarsening, and Nemytskii diffusion models."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
import math

import numpy as np

from .assembly import assemble_mass, load_from_values, quad_values, solve_linear
from .spline import SplineSpace

__all__ = [
    "RNG_ALGORITHM",
    "WienerPath",
    "sample_path",
    "increments_at",
    "path_seed",
    "DiffusionModel",
    "make_model",
    "diffusion_load",
    "apply_diffusion",
    "diffusion_l2_norm",
    "lipschitz_probe",
]

RNG_ALGORITHM = "numpy.random.PCG64 via SeedSequence(entropy=seed, spawn_key=stream); standard_normal (ziggurat)"


def path_seed(master_seed: int, *stream: int) -> np.random.SeedSequence:
    """Derive the seed sequence for one stream, e.g. ``(experiment_code, path_index)``."""
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(s) for s in stream))


@dataclass(frozen=True)
class WienerPath:
    """Brownian increments on ``[0, T]`` stored at every dyadic level.

    ``levels[l]`` has ``2**l`` increments; each is the exact floating point
    sum of its two children on level ``l + 1``.
    """

    seed: tuple
    T: float
    max_level: int
    levels: tuple = field(repr=False)

    @property
    def finest(self) -> np.ndarray:
        return self.levels[self.max_level]

    @property
    def terminal_value(self) -> float:
        return float(self.levels[0][0])

    def export_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["level", "index", "value"])
            for lev, incs in enumerate(self.levels):
                for n, v in enumerate(incs):
                    out.writerow([lev, n, repr(float(v))])


def sample_path(seed, T: float, max_level: int) -> WienerPath:
    """Sample a path; ``seed`` is an int or a ``SeedSequence``."""
    if not T > 0:
        raise ValueError(f"horizon T={T} must be positive")
    if not 0 <= max_level <= 24:
        raise ValueError(f"max_level={max_level} must lie in [0, 24]")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    gen = np.random.Generator(np.random.PCG64(ss))
    fine = math.sqrt(T / 2**max_level) * gen.standard_normal(2**max_level)
    levels = [fine]
    for _ in range(max_level):
        prev = levels[-1]
        levels.append(prev[0::2] + prev[1::2])
    levels.reverse()
    for arr in levels:
        arr.setflags(write=False)
    key = (ss.entropy, *ss.spawn_key)
    return WienerPath(seed=key, T=float(T), max_level=max_level, levels=tuple(levels))


def increments_at(path: WienerPath, M: int) -> np.ndarray:
    """The ``M`` increments of ``path`` on the uniform grid with step ``T / M``."""
    if M < 1 or M & (M - 1) or M > 2**path.max_level:
        raise ValueError(f"M={M} is not a power-of-two divisor of 2**{path.max_level}")
    return path.levels[M.bit_length() - 1]


# Nemytskii models: (pointwise map, derivative bound, pointwise bound or None)
_MODELS = {
    "zero": (lambda u, lam: np.zeros_like(u), lambda lam: 0.0, 0.0),
    "sin": (lambda u, lam: np.sin(u), lambda lam: 1.0, 1.0),
    "cos": (lambda u, lam: np.cos(u), lambda lam: 1.0, 1.0),
    "rational": (lambda u, lam: u * u / (1.0 + u * u), lambda lam: 3.0 * math.sqrt(3.0) / 8.0, 1.0),
    "linear": (lambda u, lam: lam * u, lambda lam: abs(lam), None),
}


@dataclass(frozen=True)
class DiffusionModel:
    """Diffusion ``B(u)(x) = b(u(x))`` with its growth constants.

    ``L0`` bounds ``||B(u)||_{L^2}`` (``None`` for unbounded models) and
    ``C_B`` is the Lipschitz constant in ``L^2``.  Images are always made
    mean free before they enter the scheme.
    """

    id: str
    lam: float = 0.0
    L0: float | None = None
    C_B: float = 0.0
    zero_mean_corrected: bool = True

    @property
    def bounded(self) -> bool:
        return self.L0 is not None

    def pointwise(self, u):
        return _MODELS[self.id][0](np.asarray(u, dtype=float), self.lam)

    def describe(self) -> dict:
        return {"id": self.id, "lam": self.lam, "L0": self.L0, "C_B": self.C_B,
                "bounded": self.bounded, "zero_mean_corrected": self.zero_mean_corrected}


def make_model(model_id: str, L: float, lam: float = 0.5) -> DiffusionModel:
    if model_id not in _MODELS:
        raise ValueError(f"unknown diffusion model {model_id!r}; choose from {sorted(_MODELS)}")
    _, lip, bound = _MODELS[model_id]
    L0 = None if bound is None else bound * math.sqrt(L)
    return DiffusionModel(id=model_id, lam=float(lam) if model_id == "linear" else 0.0,
                          L0=L0, C_B=lip(lam))


def diffusion_load(model: DiffusionModel, space: SplineSpace, c) -> np.ndarray:
    """Load vector ``(B(v) - mean B(v), B_i)`` for the spline ``v`` with coefficients ``c``."""
    if model.id == "zero":
        return np.zeros(space.N)
    g = model.pointwise(quad_values(space, c))
    mean = float(np.sum(g * space.weights)) / space.L
    return load_from_values(space, g) - mean * space.h


def apply_diffusion(model: DiffusionModel, space: SplineSpace, c, mass=None) -> np.ndarray:
    """Coefficients of the L2 projection of the mean-corrected image ``B(v)``."""
    if mass is None:
        mass = assemble_mass(space)
    return solve_linear(mass, diffusion_load(model, space, c))


def diffusion_l2_norm(model: DiffusionModel, space: SplineSpace, c) -> float:
    """``||B(v) - mean||_{L^2}`` by quadrature (before projection)."""
    g = model.pointwise(quad_values(space, c))
    g = g - float(np.sum(g * space.weights)) / space.L
    return math.sqrt(float(np.sum(g * g * space.weights)))


def lipschitz_probe(model: DiffusionModel, space: SplineSpace, trials: int, seed: int = 0,
                    scale: float = 2.0) -> float:
    """Largest sampled ratio ``||B(u) - B(v)|| / ||u - v||`` over random zero-mean states."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    mass = assemble_mass(space)
    gen = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        u, v = scale * gen.standard_normal((2, space.N))
        u -= u.mean()
        v -= v.mean()
        d = u - v
        den = math.sqrt(float(d @ mass.matvec(d)))
        db = apply_diffusion(model, space, u, mass) - apply_diffusion(model, space, v, mass)
        num = math.sqrt(max(float(db @ mass.matvec(db)), 0.0))
        worst = max(worst, num / den)
    return worst
