"""Pure numpy/scipy implementations of the hot kernels.

Array conventions shared with the compiled module:

* ``phi`` tables have shape ``(r, nq)``: piece ``j`` of a basis function at
  quadrature node ``q`` of an element; the function active on element ``e``
  through piece ``j`` has global index ``(e - j) % N``.
* ``w`` holds physical weights ``h * w_q``.
* Cyclic band storage ``band[i, d + b]`` is the entry at column
  ``(i + d) % N``; offsets that coincide modulo ``N`` are summed.
"""
import numpy as np
from scipy.linalg import solve_banded

NAME = "numpy"


def _index_table(n, r):
    return (np.arange(n)[:, None] - np.arange(r)[None, :]) % n


def quad_values(c, phi):
    c = np.asarray(c, dtype=float)
    return c[_index_table(len(c), phi.shape[0])] @ phi


def load_vector(g, phi, w):
    n = g.shape[0]
    loc = (g * w) @ phi.T
    return np.bincount(_index_table(n, phi.shape[0]).ravel(), loc.ravel(), minlength=n)


def convection(c, phi0, phi1, w, jacobian=True):
    c = np.asarray(c, dtype=float)
    n = len(c)
    r = phi0.shape[0]
    b = r - 1
    idx = _index_table(n, r)
    coef = c[idx]
    v = coef @ phi0
    vp = coef @ phi1
    vec = load_vector(v * vp, phi0, w)
    if not jacobian:
        return vec, None
    loc = (np.einsum("eq,aq,lq->eal", vp * w, phi0, phi0)
           + np.einsum("eq,aq,lq->eal", v * w, phi0, phi1))
    rows = np.broadcast_to(idx[:, :, None], loc.shape)
    offs = np.arange(r)[:, None] - np.arange(r)[None, :] + b
    cols = np.broadcast_to(offs[None, :, :], loc.shape)
    flat = rows * (2 * b + 1) + cols
    band = np.bincount(flat.ravel(), loc.ravel(), minlength=n * (2 * b + 1))
    return vec, band.reshape(n, 2 * b + 1)


def band_matvec(band, x):
    x = np.asarray(x, dtype=float)
    b = (band.shape[1] - 1) // 2
    y = np.zeros_like(x)
    for d in range(-b, b + 1):
        y += band[:, d + b] * np.roll(x, -d)
    return y


def cyclic_band_solve(band, rhs):
    """Solve a cyclically banded system by a Schur complement on the last ``b`` unknowns."""
    n = band.shape[0]
    b = (band.shape[1] - 1) // 2
    ni = n - b
    ab = np.zeros((2 * b + 1, ni))
    coupling = np.zeros((ni, b))
    lower = np.zeros((b, ni))
    corner = np.zeros((b, b))
    for d in range(-b, b + 1):
        col = band[:, d + b]
        rows = np.arange(ni)
        j = rows + d
        inner = (j >= 0) & (j < ni)
        # ab[b + i - j, j] = A[i, j]
        ab[b - d, j[inner]] = col[rows[inner]]
        outer = ~inner
        np.add.at(coupling, (rows[outer], (j[outer] % n) - ni), col[rows[outer]])
        trows = np.arange(ni, n)
        tj = (trows + d) % n
        tail = tj >= ni
        np.add.at(corner, (trows[tail] - ni, tj[tail] - ni), col[trows[tail]])
        np.add.at(lower, (trows[~tail] - ni, tj[~tail]), col[trows[~tail]])
    rhs = np.asarray(rhs, dtype=float)
    z = solve_banded((b, b), ab, np.column_stack([coupling, rhs[:ni]]))
    schur = corner - lower @ z[:, :b]
    y_tail = np.linalg.solve(schur, rhs[ni:] - lower @ z[:, b])
    return np.concatenate([z[:, b] - z[:, :b] @ y_tail, y_tail])


def newton_solve(system, rhs, guess, phi0, phi1, w, k, h, tol, max_iter, damping, linearized,
                 solver=cyclic_band_solve, kern=None):
    """Damped Newton iteration for one implicit step; returns ``(c, residual_history)``.

    ``kern`` optionally supplies ``band_matvec`` and ``convection`` from another backend.
    """
    matvec = band_matvec if kern is None else kern.band_matvec
    conv = convection if kern is None else kern.convection

    def residual(x):
        F = matvec(system, x) - rhs
        if linearized:
            return F, None
        nv, jac = conv(x, phi0, phi1, w, True)
        nv, jac = np.asarray(nv), np.asarray(jac)
        return F + k * nv, jac

    def norm(f):
        return np.sqrt(f @ f / h)

    c = np.array(guess, dtype=float)
    F, jac = residual(c)
    res = norm(F)
    history = [res]
    for _ in range(max_iter):
        if res <= tol:
            break
        K = system if linearized else system + k * jac
        delta = solver(K, -F)
        lam = 1.0
        while True:
            trial = c + lam * delta
            F_t, jac_t = residual(trial)
            res_t = norm(F_t)
            if res_t < res or lam < 1e-3:
                break
            lam *= damping
        if not res_t < res:
            break
        c, F, jac, res = trial, F_t, jac_t, res_t
        history.append(res)
    return c, history
