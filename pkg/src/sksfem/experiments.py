"""Monte Carlo experiments: strong convergence rates, moment bounds, Hölder quotients.

The exact solution is replaced by a fine reference computed on the same
Brownian path (self-convergence).  Every path is an independent work item
seeded by ``(master seed, experiment code, path index)``; per-path results
are reduced in path order so aggregates are bit-reproducible.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy import stats

from .assembly import (PeriodicBandMatrix, assemble_bending, assemble_gradient, assemble_mass,
                       l2_project)
from .config import RunConfig, u0_function
from .noise import DiffusionModel, increments_at, make_model, path_seed, sample_path
from .spline import SplineSpace, build_space, function_eval, refine_coefficients
from .stepper import NewtonDivergence, SchemeParams, assemble_operators, initial_state, run_increments

__all__ = [
    "EXPERIMENT_CODES",
    "InvariantViolation",
    "ExpMomentOverflow",
    "Embedding",
    "ErrorReport",
    "RateReport",
    "RateStudy",
    "MomentReport",
    "HolderTable",
    "ExpMomentReport",
    "LocalizedReport",
    "fit_rate",
    "quad_form",
    "path_errors",
    "error_norms",
    "projection_rate",
    "temporal_rate",
    "spatial_rate",
    "localized_error",
    "localization_radius",
    "stability_stats",
    "holder_quotients",
    "exp_moment_stats",
    "kappa_threshold",
    "theorem_hypotheses",
    "model_from_config",
]

EXPERIMENT_CODES = {"simulate": 0, "convergence-time": 1, "convergence-space": 2, "stability": 3,
                    "holder": 4, "exp-moment": 5, "localized": 6, "gronwall-check": 7}


class InvariantViolation(AssertionError):
    """An internal consistency check failed (e.g. broken path coupling)."""


class ExpMomentOverflow(OverflowError):
    """The exponential functional overflowed: kappa is too large for this configuration."""


def model_from_config(cfg: RunConfig) -> DiffusionModel:
    model = make_model(cfg.model, cfg.L, cfg.lam)
    if cfg.L0 is not None or cfg.C_B is not None:
        model = replace(model, L0=cfg.L0 if cfg.L0 is not None else model.L0,
                        C_B=cfg.C_B if cfg.C_B is not None else model.C_B)
    return model


def _map(fn, cfg: RunConfig, count: int, *args) -> list:
    if cfg.workers > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(fn, [cfg] * count, range(count), *[[a] * count for a in args]))
    return [fn(cfg, i, *args) for i in range(count)]


def _check_coupling(path, resolutions) -> None:
    for M in resolutions:
        if 2 * M > 2**path.max_level:
            continue
        coarse, fine = increments_at(path, M), increments_at(path, 2 * M)
        if not np.array_equal(coarse, fine[0::2] + fine[1::2]):
            raise InvariantViolation(f"coarse increments at M={M} are not sums of the M={2 * M} ones")


def _moment_se(x: np.ndarray, p: float):
    """``(mean x^p)^(1/p)`` and its delta-method standard error."""
    xp = x**p
    m = float(np.mean(xp))
    if len(x) < 2 or m == 0.0:
        return m ** (1.0 / p), 0.0
    se_m = float(np.std(xp, ddof=1)) / math.sqrt(len(x))
    return m ** (1.0 / p), se_m * m ** (1.0 / p - 1.0) / p


# --------------------------------------------------------------------------- error norms


@dataclass(frozen=True)
class Embedding:
    """Coarse space nested in a reference space, with reference-space norms."""

    coarse: SplineSpace
    reference: SplineSpace
    mass: PeriodicBandMatrix
    bending: PeriodicBandMatrix

    @classmethod
    def build(cls, coarse: SplineSpace, reference: SplineSpace) -> "Embedding":
        if reference.N % coarse.N or reference.r != coarse.r or reference.L != coarse.L:
            raise ValueError("reference space does not contain the coarse space")
        return cls(coarse, reference, assemble_mass(reference), assemble_bending(reference))

    @property
    def factor(self) -> int:
        return self.reference.N // self.coarse.N

    def lift(self, states: np.ndarray) -> np.ndarray:
        if self.factor == 1:
            return states
        return refine_coefficients(self.coarse, states, self.factor)


def quad_form(A: PeriodicBandMatrix, X: np.ndarray) -> np.ndarray:
    """Row-wise ``x^T A x`` for the rows of ``X``."""
    b = A.half_bandwidth
    AX = np.zeros_like(X)
    for d in range(-b, b + 1):
        AX += A.bands[:, d + b] * np.roll(X, -d, axis=-1)
    return np.einsum("ni,ni->n", X, AX)


def path_errors(coarse_states: np.ndarray, ref_states: np.ndarray, embedding: Embedding,
                nu: float, k: float) -> dict:
    """Per-path error quantities on the coarse time grid.

    Returns ``l2_sq[n] = ||e^n||^2``, ``sup_l2 = max_n ||e^n||`` and
    ``h2 = nu k sum_{n>=1} ||d_xx e^n||^2``.
    """
    M = coarse_states.shape[0] - 1
    M_ref = ref_states.shape[0] - 1
    if M < 1 or M_ref % M:
        raise ValueError(f"incompatible time grids: {M} steps vs {M_ref} reference steps")
    e = embedding.lift(coarse_states) - ref_states[:: M_ref // M]
    l2_sq = quad_form(embedding.mass, e)
    h2_sq = quad_form(embedding.bending, e[1:])
    l2_sq = np.maximum(l2_sq, 0.0)
    return {"l2_sq": l2_sq, "sup_l2": float(np.sqrt(l2_sq.max())),
            "h2": float(nu * k * np.maximum(h2_sq, 0.0).sum())}


@dataclass
class ErrorReport:
    """Per-path error arrays and their Monte Carlo aggregates.

    ``weights`` is the localization indicator (all ones when unlocalized).
    """

    sup_l2: np.ndarray
    h2: np.ndarray
    l2_sq: np.ndarray  # (paths, M + 1)
    q_list: tuple = (0.5, 0.75)
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.ones(len(self.sup_l2))

    @property
    def samples(self) -> int:
        return len(self.sup_l2)

    def sup_moment(self, p: float):
        """``(E[1_Omega max_n ||e^n||^p])^(1/p)`` and its standard error."""
        return _moment_se(self.weights ** (1.0 / p) * self.sup_l2, p)

    def h2_error(self):
        return _moment_se(np.sqrt(self.weights * self.h2), 2.0)

    def max_mean_l2(self) -> float:
        """``(max_n E[1_Omega ||e^n||^2])^(1/2)``."""
        return float(np.sqrt(np.max(np.mean(self.weights[:, None] * self.l2_sq, axis=0))))

    def aggregates(self) -> dict:
        out = {}
        for q in self.q_list:
            out[f"sup_l2_2q[q={q:g}]"] = self.sup_moment(2 * q)
        out["sup_l2_4q[q=0.5]"] = self.sup_moment(2.0)
        out["h2"] = self.h2_error()
        out["max_mean_l2"] = (self.max_mean_l2(), float("nan"))
        return out


def error_norms(coarse, reference, embedding: Embedding, q_list, nu: float, k: float,
                weights=None) -> ErrorReport:
    """Aggregate errors of coarse trajectories (state arrays) against their references."""
    per = [path_errors(np.asarray(c), np.asarray(r), embedding, nu, k)
           for c, r in zip(coarse, reference)]
    return ErrorReport(sup_l2=np.array([p["sup_l2"] for p in per]),
                       h2=np.array([p["h2"] for p in per]),
                       l2_sq=np.array([p["l2_sq"] for p in per]),
                       q_list=tuple(q_list),
                       weights=None if weights is None else np.asarray(weights, dtype=float))


# --------------------------------------------------------------------------- rate fits


@dataclass(frozen=True)
class RateReport:
    quantity: str
    abscissae: np.ndarray
    errors: np.ndarray
    std_errors: np.ndarray
    slope: float
    intercept: float
    residual: float
    ci_halfwidth: float


def fit_rate(abscissae, errors, std_errors=None, quantity: str = "error") -> RateReport:
    """Least-squares slope of ``log(error)`` against ``log(abscissa)``.

    Abscissae must be at least three, strictly decreasing by factors of two.
    """
    x = np.asarray(abscissae, dtype=float)
    y = np.asarray(errors, dtype=float)
    if len(x) < 3:
        raise ValueError(f"a rate fit needs at least 3 abscissae, got {len(x)}")
    ratios = x[:-1] / x[1:]
    if not np.allclose(ratios, 2.0, rtol=1e-9):
        raise ValueError("abscissae must decrease dyadically")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("errors must be positive and finite for a log-log fit")
    fit = stats.linregress(np.log(x), np.log(y))
    pred = fit.intercept + fit.slope * np.log(x)
    resid = float(np.sqrt(np.mean((np.log(y) - pred) ** 2)))
    half = float(stats.t.ppf(0.975, len(x) - 2) * fit.stderr) if len(x) > 2 else float("nan")
    se = np.zeros_like(y) if std_errors is None else np.asarray(std_errors, dtype=float)
    return RateReport(quantity, x, y, se, float(fit.slope), float(fit.intercept), resid, half)


@dataclass
class RateStudy:
    """Errors at every resolution of a convergence study and the fitted rates."""

    kind: str
    abscissa_name: str
    resolutions: list
    abscissae: np.ndarray
    reports: list  # ErrorReport per resolution
    rates: dict = field(default_factory=dict)
    primary: str = "sup_l2_2q[q=0.5]"
    extra: dict = field(default_factory=dict)

    @property
    def rate(self) -> RateReport:
        return self.rates[self.primary]

    def table_rows(self):
        """Rows ``(quantity, resolution, abscissa, error, std_error, slope, intercept, residual, ci)``."""
        for name, rep in self.rates.items():
            for res, x, err, se in zip(self.resolutions, rep.abscissae, rep.errors, rep.std_errors):
                yield (name, res, float(x), float(err), float(se), rep.slope, rep.intercept,
                       rep.residual, rep.ci_halfwidth)

    def raw_rows(self):
        """Rows ``(path, resolution, sup_l2, h2)``."""
        for res, rep in zip(self.resolutions, self.reports):
            for i in range(rep.samples):
                yield (i, res, float(rep.sup_l2[i]), float(rep.h2[i]))


def _fit_all(study: RateStudy) -> RateStudy:
    names = list(study.reports[0].aggregates())
    for name in names:
        if name == "max_mean_l2":
            continue
        vals = [rep.aggregates()[name] for rep in study.reports]
        study.rates[name] = fit_rate(study.abscissae, [v[0] for v in vals], [v[1] for v in vals],
                                     quantity=name)
    return study


def projection_rate(L: float, r: int, N_list, f=None) -> RateReport:
    """L2 projection error of ``f`` (default ``sin(2 pi x / L)``) under mesh refinement."""
    if f is None:
        f = lambda x: np.sin(2 * np.pi * x / L)
    errs, hs = [], []
    for N in N_list:
        space = build_space(L, N, r)
        c = l2_project(space, f)
        # dense Gauss rule on each element
        x, w = np.polynomial.legendre.leggauss(12)
        pts = (np.arange(N)[:, None] + 0.5 * (x[None, :] + 1)) * space.h
        diff = function_eval(space, c, pts.ravel()).reshape(pts.shape) - f(pts)
        errs.append(math.sqrt(float(np.sum(diff**2 * (0.5 * space.h * w)[None, :]))))
        hs.append(space.h)
    return fit_rate(hs, errs, quantity="projection_l2")


# --------------------------------------------------------------------------- temporal


def _space(cfg: RunConfig, N=None) -> SplineSpace:
    return build_space(cfg.L, cfg.N if N is None else N, cfg.r)


def _params(cfg: RunConfig, M: int) -> SchemeParams:
    return SchemeParams(nu=cfg.nu, T=cfg.T, M=M, newton_tol=cfg.newton_tol,
                        newton_max_iter=cfg.newton_max_iter)


def _run(space, cfg, model, M, dW, c0=None):
    params = _params(cfg, M)
    ops = assemble_operators(space, params)
    if c0 is None:
        c0 = initial_state(space, u0_function(cfg), ops.mass)
    return run_increments(space, params, model, c0, dW, ops).states


def _with_context(exc, cfg, i, M):
    if isinstance(exc, NewtonDivergence):
        exc.seed = [cfg.seed, EXPERIMENT_CODES[cfg.kind], i]
        exc.M = M
    return exc


def _temporal_path(cfg: RunConfig, i: int):
    space = _space(cfg)
    model = model_from_config(cfg)
    path = sample_path(path_seed(cfg.seed, EXPERIMENT_CODES["convergence-time"], i), cfg.T,
                       cfg.M_ref.bit_length() - 1)
    _check_coupling(path, sorted(set(cfg.M_list)))
    emb = Embedding.build(space, space)
    M = cfg.M_ref
    try:
        ref = _run(space, cfg, model, M, increments_at(path, M))
        out = []
        for M in cfg.M_list:
            states = _run(space, cfg, model, M, increments_at(path, M))
            out.append(path_errors(states, ref, emb, cfg.nu, cfg.T / M))
    except Exception as exc:
        raise _with_context(exc, cfg, i, M)
    return out


def _collect(per_path, n_res, q_list, weights=None):
    reports = []
    for j in range(n_res):
        rows = [p[j] for p in per_path]
        reports.append(ErrorReport(sup_l2=np.array([r["sup_l2"] for r in rows]),
                                   h2=np.array([r["h2"] for r in rows]),
                                   l2_sq=np.array([r["l2_sq"] for r in rows]),
                                   q_list=tuple(q_list),
                                   weights=None if weights is None else weights[j]))
    return reports


def temporal_rate(cfg: RunConfig) -> RateStudy:
    """Strong error in the step size ``k = T / M`` against an ``M_ref`` reference on each path."""
    cfg = cfg.with_(kind="convergence-time")
    M_list = list(cfg.M_list)
    if len(M_list) < 3:
        raise ValueError("temporal rate needs at least 3 step counts")
    if sorted(M_list) != M_list or len(set(M_list)) != len(M_list):
        raise ValueError("step counts must be strictly increasing")
    if cfg.M_ref < 8 * max(M_list) or cfg.M_ref % max(M_list):
        raise ValueError("M_ref must be a multiple of, and at least 8x, the largest M")
    per_path = _map(_temporal_path, cfg, cfg.mc)
    study = RateStudy(kind="convergence-time", abscissa_name="k", resolutions=M_list,
                      abscissae=np.array([cfg.T / M for M in M_list]),
                      reports=_collect(per_path, len(M_list), cfg.q))
    return _fit_all(study)


# --------------------------------------------------------------------------- spatial


def _spatial_mc(cfg: RunConfig) -> int:
    return 1 if cfg.model == "zero" else cfg.mc


def _spatial_path(cfg: RunConfig, i: int):
    model = model_from_config(cfg)
    path = sample_path(path_seed(cfg.seed, EXPERIMENT_CODES[cfg.kind], i), cfg.T,
                       cfg.M.bit_length() - 1)
    dW = increments_at(path, cfg.M)
    ref_space = _space(cfg, cfg.N_ref)
    out = []
    try:
        ref = _run(ref_space, cfg, model, cfg.M, dW)
        for N in cfg.N_list:
            space = _space(cfg, N)
            states = _run(space, cfg, model, cfg.M, dW)
            out.append(path_errors(states, ref, Embedding.build(space, ref_space), cfg.nu,
                                   cfg.T / cfg.M))
    except Exception as exc:
        raise _with_context(exc, cfg, i, cfg.M)
    ref_sup = float(quad_form(assemble_mass(ref_space), ref).max())
    return out, ref_sup


def _check_ladder(cfg: RunConfig):
    N_list = list(cfg.N_list)
    if len(N_list) < 3:
        raise ValueError("spatial rate needs at least 3 element counts")
    if sorted(N_list) != N_list or len(set(N_list)) != len(N_list):
        raise ValueError("element counts must be strictly increasing")
    for N in N_list:
        ratio = cfg.N_ref // N
        if cfg.N_ref % N or ratio & (ratio - 1):
            raise ValueError(f"N={N} is not nested in N_ref={cfg.N_ref}")
    if cfg.N_ref < 4 * max(N_list):
        raise ValueError("N_ref must be at least 4x the largest N")
    return N_list


def spatial_rate(cfg: RunConfig) -> RateStudy:
    """Strong error in the mesh size against an ``N_ref`` reference at fixed ``M``."""
    cfg = cfg.with_(kind="convergence-space")
    N_list = _check_ladder(cfg)
    results = _map(_spatial_path, cfg, _spatial_mc(cfg))
    study = RateStudy(kind="convergence-space", abscissa_name="h", resolutions=N_list,
                      abscissae=np.array([cfg.L / N for N in N_list]),
                      reports=_collect([r[0] for r in results], len(N_list), cfg.q))
    study.extra["projection"] = projection_rate(cfg.L, cfg.r, N_list)
    return _fit_all(study)


# --------------------------------------------------------------------------- localization


def localization_radius(nu: float, ce: float, T: float, h: float, beta: float) -> float:
    """``rho = nu / (36 C_e^2 T) * ln(h^-beta)``."""
    return nu / (36.0 * ce**2 * T) * math.log(h ** (-beta))


@dataclass
class LocalizedReport:
    resolutions: list
    h: np.ndarray
    rho: np.ndarray
    probability: np.ndarray
    localized: list  # ErrorReport per resolution, weighted
    unlocalized: list
    ref_sup: np.ndarray  # per-path sup_n ||u_ref^n||^2

    def rows(self):
        """Rows ``(N, h, rho, P, localized max-mean L2, unlocalized, localized H2, unlocalized H2)``."""
        for j, N in enumerate(self.resolutions):
            yield (N, float(self.h[j]), float(self.rho[j]), float(self.probability[j]),
                   self.localized[j].max_mean_l2(), self.unlocalized[j].max_mean_l2(),
                   self.localized[j].h2_error()[0], self.unlocalized[j].h2_error()[0])


def localized_error(cfg: RunConfig, beta: float | None = None, ce: float | None = None,
                    rho: float | None = None) -> LocalizedReport:
    """Errors restricted to paths whose reference norm stays below ``rho(h)``.

    ``rho=None`` applies the logarithmic rule per mesh; a number fixes it for
    every rung (``inf`` recovers the unlocalized errors).
    """
    cfg = cfg.with_(kind="localized")
    beta = cfg.beta if beta is None else beta
    ce = cfg.ce if ce is None else ce
    N_list = _check_ladder(cfg)
    results = _map(_spatial_path, cfg, cfg.mc)
    ref_sup = np.array([r[1] for r in results])
    hs = np.array([cfg.L / N for N in N_list])
    rhos = np.array([localization_radius(cfg.nu, ce, cfg.T, h, beta) if rho is None else rho
                     for h in hs])
    weights = [(ref_sup <= rr).astype(float) for rr in rhos]
    per_path = [r[0] for r in results]
    return LocalizedReport(resolutions=N_list, h=hs, rho=rhos,
                           probability=np.array([w.mean() for w in weights]),
                           localized=_collect(per_path, len(N_list), cfg.q, weights),
                           unlocalized=_collect(per_path, len(N_list), cfg.q),
                           ref_sup=ref_sup)


# --------------------------------------------------------------------------- moments


@dataclass
class MomentReport:
    resolutions: list
    sup_moments: dict  # (M, p) -> (estimate, std error) of E[sup_n ||u^n||^(2^p)]
    h2_sums: dict  # M -> (estimate, std error) of k sum_n E||d_xx u^n||^2
    samples: int

    def rows(self):
        for M in self.resolutions:
            for p in (1, 2, 3):
                est, se = self.sup_moments[(M, p)]
                yield (M, f"sup_l2_pow{2**p}", est, se)
            est, se = self.h2_sums[M]
            yield (M, "k_sum_h2", est, se)


def _norms(space: SplineSpace, states: np.ndarray):
    return (np.maximum(quad_form(assemble_mass(space), states), 0.0),
            np.maximum(quad_form(assemble_bending(space), states), 0.0))


def _stability_path(cfg: RunConfig, i: int):
    space = _space(cfg)
    model = model_from_config(cfg)
    path = sample_path(path_seed(cfg.seed, EXPERIMENT_CODES["stability"], i), cfg.T,
                       (2 * cfg.M).bit_length() - 1)
    out = []
    for M in (cfg.M, 2 * cfg.M):
        try:
            states = _run(space, cfg, model, M, increments_at(path, M))
        except Exception as exc:
            raise _with_context(exc, cfg, i, M)
        l2, h2 = _norms(space, states)
        out.append((float(l2.max()), float(cfg.T / M * h2[1:].sum())))
    return out


def stability_stats(cfg: RunConfig) -> MomentReport:
    """Moments of the discrete solution at ``M`` and ``2M`` steps on coupled paths."""
    cfg = cfg.with_(kind="stability")
    per_path = _map(_stability_path, cfg, cfg.mc)
    res = [cfg.M, 2 * cfg.M]
    sup_moments, h2_sums = {}, {}
    for j, M in enumerate(res):
        sup = np.array([p[j][0] for p in per_path])
        h2 = np.array([p[j][1] for p in per_path])
        for p in (1, 2, 3):
            vals = sup ** (2 ** (p - 1))
            se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
            sup_moments[(M, p)] = (float(vals.mean()), se)
        se = float(np.std(h2, ddof=1) / math.sqrt(len(h2))) if len(h2) > 1 else 0.0
        h2_sums[M] = (float(h2.mean()), se)
    return MomentReport(res, sup_moments, h2_sums, cfg.mc)


# --------------------------------------------------------------------------- Hölder


@dataclass
class HolderTable:
    gaps: list  # in reference steps
    k: float
    quotients: dict  # (m, q) -> array over gaps

    def spread(self, m: int, q: float) -> float:
        vals = self.quotients[(m, q)]
        return float(vals.max() / vals.min())

    def rows(self):
        for (m, q), vals in self.quotients.items():
            for g, v in zip(self.gaps, vals):
                yield (m, q, g, g * self.k, float(v))


def _holder_path(cfg: RunConfig, i: int, m_list, q_list, gaps):
    space = _space(cfg)
    model = model_from_config(cfg)
    path = sample_path(path_seed(cfg.seed, EXPERIMENT_CODES["holder"], i), cfg.T,
                       cfg.M_ref.bit_length() - 1)
    try:
        states = _run(space, cfg, model, cfg.M_ref, increments_at(path, cfg.M_ref))
    except Exception as exc:
        raise _with_context(exc, cfg, i, cfg.M_ref)
    forms = {0: assemble_mass(space), 1: assemble_gradient(space), 2: assemble_bending(space)}
    out = {}
    for m in m_list:
        for g in gaps:
            d = states[g:] - states[:-g]
            sq = np.maximum(quad_form(forms[m], d), 0.0)
            for q in q_list:
                out[(m, q, g)] = sq**q
    return out


def holder_quotients(cfg: RunConfig, m_list=(0, 1, 2), q_list=(1.0,), gaps=(1, 2, 4, 8)) -> HolderTable:
    """``max_s E||d^m (u(s+g) - u(s))||^(2q) / g^q`` over gaps ``g`` (multiples of the reference step).

    The ``M_ref`` trajectory stands in for the exact solution.
    """
    cfg = cfg.with_(kind="holder")
    if any(g <= 0 for g in gaps):
        raise ValueError("gaps must be positive")
    per_path = _map(_holder_path, cfg, cfg.mc, tuple(m_list), tuple(q_list), tuple(gaps))
    k = cfg.T / cfg.M_ref
    quotients = {}
    for m in m_list:
        for q in q_list:
            row = []
            for g in gaps:
                mean = np.mean([p[(m, q, g)] for p in per_path], axis=0)
                row.append(float(mean.max()) / (g * k) ** q)
            quotients[(m, q)] = np.array(row)
    return HolderTable(list(gaps), k, quotients)


# --------------------------------------------------------------------------- exponential moment


def kappa_threshold(model: DiffusionModel) -> float:
    """Admissible exponential-moment parameter ``1 / (16 L0^2)`` for a bounded model."""
    if not model.bounded:
        raise ValueError(f"model {model.id!r} is unbounded; exponential moments need a bound L0")
    return math.inf if model.L0 == 0 else 1.0 / (16.0 * model.L0**2)


@dataclass
class ExpMomentReport:
    kappa: float
    threshold: float
    mean: float
    std_error: float
    mean_half: float
    std_error_half: float
    difference_se: float
    samples: int
    exponents: np.ndarray

    @property
    def stable(self) -> bool:
        return abs(self.mean - self.mean_half) <= 3.0 * self.difference_se


def _exp_path(cfg: RunConfig, i: int):
    space = _space(cfg)
    model = model_from_config(cfg)
    path = sample_path(path_seed(cfg.seed, EXPERIMENT_CODES["exp-moment"], i), cfg.T,
                       cfg.M.bit_length() - 1)
    try:
        states = _run(space, cfg, model, cfg.M, increments_at(path, cfg.M))
    except Exception as exc:
        raise _with_context(exc, cfg, i, cfg.M)
    l2, h2 = _norms(space, states)
    return float(l2[-1]), float(cfg.T / cfg.M * h2[1:].sum())


def exp_moment_stats(cfg: RunConfig, kappa: float | None = None) -> ExpMomentReport:
    """MC mean of ``exp(kappa ||u_h(T)||^2 + kappa/2 nu k sum ||d_xx u_h^n||^2)``.

    Uses ``2 * mc`` paths and compares against the first ``mc``.
    """
    cfg = cfg.with_(kind="exp-moment")
    model = model_from_config(cfg)
    threshold = kappa_threshold(model)
    if kappa is None:
        kappa = cfg.kappa if cfg.kappa is not None else min(threshold, 0.05)
    per_path = _map(_exp_path, cfg, 2 * cfg.mc)
    l2 = np.array([p[0] for p in per_path])
    h2 = np.array([p[1] for p in per_path])
    expo = kappa * l2 + 0.5 * kappa * cfg.nu * h2
    if np.any(expo > 700.0) or not np.all(np.isfinite(expo)):
        raise ExpMomentOverflow(f"exponent up to {expo.max():.1f} overflows; kappa={kappa} is too large")
    vals = np.exp(expo)
    n = cfg.mc
    first, second = vals[:n], vals[n:]

    def se(v):
        return float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0

    # full mean minus first-half mean equals half the difference of the two independent halves
    return ExpMomentReport(kappa=float(kappa), threshold=threshold, mean=float(vals.mean()),
                           std_error=se(vals), mean_half=float(first.mean()),
                           std_error_half=se(first),
                           difference_se=0.5 * math.sqrt(se(first) ** 2 + se(second) ** 2),
                           samples=2 * n, exponents=expo)


def theorem_hypotheses(cfg: RunConfig) -> dict:
    """Whether the configured constants satisfy the smallness condition on ``L0`` literally."""
    model = model_from_config(cfg)
    out = {"C_e": cfg.ce, "L0": model.L0, "nu": cfg.nu}
    for q in cfg.q:
        bound = math.sqrt(cfg.nu) / (240.0 * cfg.ce * math.sqrt(q))
        out[f"L0_bound[q={q:g}]"] = bound
        out[f"L0_condition_holds[q={q:g}]"] = bool(model.L0 is not None and model.L0 < bound)
    return out
