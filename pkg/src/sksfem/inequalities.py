"""Numerical checks of discrete Gronwall-type inequalities.

The stochastic version bounds ``E[sup_{l<=n} X_l^q]`` for nonnegative adapted
sequences with

    X_n <= F_n + M_n + sum_{l<n} G_l X_l,     M a martingale, M_0 = 0,

by ``(1 + 1/(1 - alpha q))^(1/alpha) * ||prod_{l<n} (1 + G_l)^q||_{L^beta}
* (E[sup_{l<=n} F_l])^q`` for conjugate ``alpha, beta`` with ``q alpha < 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
import math

import numpy as np
from scipy.special import logsumexp

__all__ = ["GronwallInstance", "GronwallCheck", "generate_instance", "verify_bound",
           "conjugate_exponent", "deterministic_gronwall", "random_instances",
           "martingale_zscores"]


def conjugate_exponent(alpha: float) -> float:
    if alpha < 1:
        raise ValueError(f"alpha={alpha} must be >= 1")
    return math.inf if alpha == 1 else alpha / (alpha - 1.0)


@dataclass(frozen=True)
class GronwallInstance:
    """Monte Carlo samples of ``X, F, G, M``; arrays have shape ``(samples, n + 1)``."""

    n: int
    q: float
    alpha: float
    X: np.ndarray
    F: np.ndarray
    G: np.ndarray
    M: np.ndarray
    eta: np.ndarray  # (samples, n) centred unit-variance innovations driving M

    @property
    def beta(self) -> float:
        return conjugate_exponent(self.alpha)

    @property
    def samples(self) -> int:
        return self.X.shape[0]

    def scaled(self, lam: float) -> "GronwallInstance":
        """The instance with ``X``, ``F`` and ``M`` multiplied by ``lam > 0`` (still admissible)."""
        return replace(self, X=lam * self.X, F=lam * self.F, M=lam * self.M)

    def hypothesis_slack(self) -> np.ndarray:
        """``F_n + M_n + sum_{l<n} G_l X_l - X_n``; nonnegative for a valid instance."""
        acc = np.concatenate([np.zeros((self.samples, 1)),
                              np.cumsum(self.G[:, :-1] * self.X[:, :-1], axis=1)], axis=1)
        return self.F + self.M + acc - self.X


def generate_instance(seed, n: int, q: float, alpha: float, samples: int = 400,
                      g_scale: float = 0.1, zero_g: bool = False, f_scale: float = 1.0,
                      slack_min: float = 0.5) -> GronwallInstance:
    """Sample an instance that satisfies the hypothesis pathwise by construction.

    ``M`` is the martingale transform ``sum_j xi_j eta_j`` with i.i.d. standard
    normal ``eta`` and bounded predictable ``xi_j = 1 + tanh(M_j) / 2``.
    ``F_n = f_scale (1 + U_n) + max(-M_n, 0)`` keeps the right-hand side
    positive, and ``X_n`` is that right-hand side times an adapted factor in
    ``[slack_min, 1]``.
    """
    if n < 1:
        raise ValueError(f"horizon n={n} must be >= 1")
    if not 0 < q < 1:
        raise ValueError(f"q={q} must lie in (0, 1)")
    if alpha < 1 or q * alpha >= 1:
        raise ValueError(f"need alpha >= 1 and q * alpha < 1, got q={q}, alpha={alpha}")
    gen = np.random.default_rng(seed)
    eta = gen.standard_normal((samples, n))
    M = np.zeros((samples, n + 1))
    for j in range(n):
        xi = 1.0 + 0.5 * np.tanh(M[:, j])
        M[:, j + 1] = M[:, j] + xi * eta[:, j]
    F = f_scale * (1.0 + gen.uniform(size=(samples, n + 1))) + np.maximum(-M, 0.0)
    G = np.zeros((samples, n + 1)) if zero_g else g_scale * gen.uniform(size=(samples, n + 1))
    slack = gen.uniform(slack_min, 1.0, size=(samples, n + 1))
    X = np.zeros((samples, n + 1))
    acc = np.zeros(samples)
    for j in range(n + 1):
        X[:, j] = slack[:, j] * (F[:, j] + M[:, j] + acc)
        acc = acc + G[:, j] * X[:, j]
    return GronwallInstance(n=n, q=q, alpha=alpha, X=X, F=F, G=G, M=M, eta=eta)


@dataclass(frozen=True)
class GronwallCheck:
    lhs: float
    rhs: float
    holds: bool
    lhs_std_error: float
    constant: float
    product_norm: float
    sup_f_mean: float


def verify_bound(inst: GronwallInstance) -> GronwallCheck:
    """Estimate both sides of the stochastic Gronwall bound on the instance's samples."""
    q, alpha, beta = inst.q, inst.alpha, inst.beta
    sup_xq = np.max(inst.X, axis=1) ** q
    lhs = float(sup_xq.mean())
    se = float(sup_xq.std(ddof=1) / math.sqrt(inst.samples)) if inst.samples > 1 else 0.0
    const = (1.0 + 1.0 / (1.0 - alpha * q)) ** (1.0 / alpha)
    log_prod = q * np.sum(np.log1p(inst.G[:, : inst.n]), axis=1)
    if math.isinf(beta):
        prod_norm = float(np.exp(log_prod.max()))
    else:
        lme = logsumexp(beta * log_prod) - math.log(len(log_prod))
        prod_norm = float(np.exp(lme / beta))
    sup_f = float(np.max(inst.F, axis=1).mean())
    rhs = const * prod_norm * sup_f**q
    rel = se / lhs if lhs > 0 else 0.0
    return GronwallCheck(lhs=lhs, rhs=rhs, holds=lhs <= rhs * (1.0 + 3.0 * rel),
                         lhs_std_error=se, constant=const, product_norm=prod_norm,
                         sup_f_mean=sup_f)


def martingale_zscores(inst: GronwallInstance, depth: int = 3) -> np.ndarray:
    """z-scores of ``E[M_{j+1} - M_j | signs of eta_{j-depth..j-1}]`` over all cells and steps.

    Under the martingale property each is approximately standard normal.
    """
    out = []
    for j in range(inst.n):
        inc = inst.M[:, j + 1] - inst.M[:, j]
        lo = max(0, j - depth)
        codes = (inst.eta[:, lo:j] > 0).astype(int) @ (1 << np.arange(j - lo))
        for code in np.unique(codes):
            cell = inc[codes == code]
            if len(cell) < 30:
                continue
            out.append(cell.mean() / (cell.std(ddof=1) / math.sqrt(len(cell))))
    return np.array(out)


def random_instances(seed, count: int, max_n: int = 64, q_values=(0.3, 0.5, 0.7),
                     samples: int = 400):
    """Yield ``count`` instances with random horizon, exponent and admissible ``alpha``.

    ``seed`` is an int or a ``SeedSequence``; instance ``i`` uses its ``i``-th child.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    for child in ss.spawn(count):
        gen = np.random.default_rng(child)
        n = int(gen.integers(1, max_n + 1))
        q = float(gen.choice(q_values))
        alpha = 1.0 + float(gen.uniform(0.0, 0.95)) * (1.0 / q - 1.0)
        yield generate_instance(child, n, q, alpha, samples=samples,
                                g_scale=float(gen.uniform(0.0, 0.5)),
                                zero_g=bool(gen.uniform() < 0.1),
                                f_scale=float(gen.uniform(0.1, 10.0)))


def deterministic_gronwall(a0: float, rates, sources) -> np.ndarray:
    """Majorant for ``y_n <= a0 + sum_{j<n} s_j + sum_{l<n} rho_l y_l``, ``n = 0..len(rates)``.

    Returns ``(a0 + sum_{j<n} s_j) * prod_{l<n} (1 + rho_l)``.
    """
    rates = np.asarray(rates, dtype=float)
    sources = np.asarray(sources, dtype=float)
    if a0 < 0 or np.any(rates < 0) or np.any(sources < 0):
        raise ValueError("deterministic Gronwall inputs must be nonnegative")
    if len(rates) != len(sources):
        raise ValueError("rates and sources must have equal length")
    cum = a0 + np.concatenate([[0.0], np.cumsum(sources)])
    growth = np.concatenate([[1.0], np.cumprod(1.0 + rates)])
    return cum * growth
