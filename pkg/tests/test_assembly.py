import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import BSpline

from sksfem.assembly import (
    PeriodicBandMatrix,
    SingularSystemError,
    assemble_bending,
    assemble_gradient,
    assemble_load,
    assemble_mass,
    convection_jacobian,
    convection_vector,
    convection_with_jacobian,
    l2_project,
    quad_values,
    solve_linear,
)
from sksfem.spline import SplineSpace, build_space, function_eval

SPACES = [(N, r) for N in (8, 16, 32) for r in (4, 5)]


def autocorrelation(r, deriv):
    """``t -> int N_r^(a)(x) N_r^(a)(x - t) dx`` as derivative ``2a`` of ``N_2r(r + t)``, signed."""
    ref = BSpline.basis_element(np.arange(2 * r + 1), extrapolate=False)
    d = ref.derivative(2 * deriv) if deriv else ref
    sign = (-1) ** deriv
    return lambda t: sign * np.nan_to_num(d(r + np.asarray(t, dtype=float)))


@pytest.mark.parametrize("r", [4, 5, 6])
@pytest.mark.parametrize("which, deriv", [(assemble_mass, 0), (assemble_gradient, 1),
                                          (assemble_bending, 2)])
def test_forms_match_bspline_autocorrelation(r, which, deriv):
    N, L = 4 * r, 3.0
    space = build_space(L, N, r)
    A = which(space).to_dense()
    R = autocorrelation(r, deriv)
    for d in range(-(r - 1), r):
        expected = space.h ** (1 - 2 * deriv) * float(R(d))
        assert A[2 * r, 2 * r + d] == pytest.approx(expected, rel=1e-11, abs=1e-11 * abs(A).max())


def test_cubic_mass_row_values():
    # integer autocorrelation of the cubic B-spline, in units of h / 5040
    space = build_space(1.0, 16, 4)
    row = assemble_mass(space).to_dense()[5, 2:9] / space.h * 5040
    np.testing.assert_allclose(row, [1, 120, 1191, 2416, 1191, 120, 1], rtol=1e-12)


@pytest.mark.parametrize("N, r", SPACES)
def test_mass_spd_and_kernels(N, r):
    space = build_space(2 * math.pi, N, r)
    Mm = assemble_mass(space).to_dense()
    np.testing.assert_allclose(Mm, Mm.T, atol=1e-15)
    assert np.linalg.eigvalsh(Mm).min() > 0
    ones = np.ones(N)
    for A in (assemble_gradient(space), assemble_bending(space)):
        dense = A.to_dense()
        np.testing.assert_allclose(dense, dense.T, atol=1e-12 * abs(dense).max())
        assert np.abs(A.matvec(ones)).max() <= 1e-12 * np.abs(dense).max() * N
        ev = np.linalg.eigvalsh(dense)
        # a single zero eigenvalue: the kernel is exactly the constants
        assert abs(ev[0]) < 1e-10 * ev[-1] and ev[1] > 1e-8 * ev[-1]


@pytest.mark.parametrize("N, r", SPACES)
def test_convection_skew(N, r):
    space = build_space(2 * math.pi, N, r)
    gen = np.random.default_rng(N * r)
    for _ in range(5):
        c = gen.standard_normal(N)
        scale = float(np.sum(np.abs(c)) ** 3) / N
        assert abs(c @ convection_vector(space, c)) <= 1e-10 * scale


@pytest.mark.parametrize("N, r", SPACES)
def test_convection_against_refined_quadrature(N, r):
    space = build_space(2.0, N, r)
    dense_rule = SplineSpace(L=2.0, N=N, r=r, quad_points=4 * space.quad_points)
    c = np.random.default_rng(7).standard_normal(N)
    np.testing.assert_allclose(convection_vector(space, c), convection_vector(dense_rule, c),
                               atol=1e-12 * np.abs(c).max() ** 2)
    np.testing.assert_allclose(assemble_mass(space).bands,
                               assemble_mass(dense_rule).bands, atol=1e-15)


@pytest.mark.parametrize("N, r", SPACES)
def test_jacobian_finite_difference_ratio(N, r):
    space = build_space(2 * math.pi, N, r)
    gen = np.random.default_rng(11)
    c, d = gen.standard_normal(N), gen.standard_normal(N)
    J = convection_jacobian(space, c)
    base = convection_vector(space, c)

    def remainder(eps):
        return np.linalg.norm(convection_vector(space, c + eps * d) - base - eps * J.matvec(d))

    # quadratic nonlinearity: the remainder is exactly quadratic in eps
    ratio = remainder(1e-2) / remainder(5e-3)
    assert ratio == pytest.approx(4.0, rel=1e-4)
    vec, J2 = convection_with_jacobian(space, c)
    np.testing.assert_array_equal(vec, base)
    np.testing.assert_array_equal(J2.bands, J.bands)


@pytest.mark.parametrize("N, r", SPACES)
def test_projection_idempotent(N, r):
    space = build_space(2 * math.pi, N, r)
    c = np.random.default_rng(5).standard_normal(N)
    again = l2_project(space, lambda x: function_eval(space, c, x))
    np.testing.assert_allclose(again, c, atol=1e-11)


def test_load_of_constant():
    space = build_space(3.0, 12, 4)
    np.testing.assert_allclose(assemble_load(space, lambda x: np.ones_like(x)), space.h, rtol=1e-14)


def test_quad_values_match_pointwise_eval():
    space = build_space(2.0, 10, 5)
    c = np.random.default_rng(6).standard_normal(10)
    for deriv in (0, 1, 2):
        expected = function_eval(space, c, space.points.ravel(), deriv).reshape(space.points.shape)
        np.testing.assert_allclose(quad_values(space, c, deriv), expected, atol=1e-10)


def random_band(n, b, seed, dominance=4.0):
    gen = np.random.default_rng(seed)
    bands = gen.standard_normal((n, 2 * b + 1))
    bands[:, b] += dominance * (2 * b + 1)
    return PeriodicBandMatrix(bands)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 40), st.integers(0, 10**6))
def test_band_solve_matches_dense_lu(b, extra, seed):
    n = 4 * b + extra
    K = random_band(n, b, seed, dominance=0.5)
    rhs = np.random.default_rng(seed + 1).standard_normal(n)
    dense = K.to_dense()
    if np.linalg.cond(dense) > 1e8:
        return
    x = solve_linear(K, rhs)
    np.testing.assert_allclose(dense @ x, rhs, atol=1e-9 * np.abs(rhs).max())
    np.testing.assert_allclose(x, np.linalg.solve(dense, rhs), rtol=1e-7, atol=1e-9)


def test_band_matrix_aliasing_small_n():
    # with n < 2b + 1 several offsets hit the same column and must add up
    bands = np.arange(1.0, 8.0)[None, :].repeat(4, axis=0)
    K = PeriodicBandMatrix(bands)
    dense = K.to_dense()
    assert dense[0, 1] == 5.0 + 1.0  # offsets +1 and -3
    x = np.random.default_rng(0).standard_normal(4)
    np.testing.assert_allclose(K.matvec(x), dense @ x)
    np.testing.assert_allclose(K @ x, dense @ x)


def test_band_matrix_algebra_and_triplets(tmp_path):
    A, B = random_band(10, 2, 1), random_band(10, 2, 2)
    np.testing.assert_allclose((A + B).to_dense(), A.to_dense() + B.to_dense())
    np.testing.assert_allclose((A - B).to_dense(), A.to_dense() - B.to_dense())
    np.testing.assert_allclose((A * 3.0).to_dense(), 3.0 * A.to_dense())
    assert PeriodicBandMatrix.identity(6, 2).to_dense().tolist() == np.eye(6).tolist()
    rebuilt = np.zeros((10, 10))
    for i, j, v in A.triplets():
        rebuilt[i, j] += v
    np.testing.assert_array_equal(rebuilt, A.to_dense())
    A.dump(tmp_path / "A.txt")
    data = np.loadtxt(tmp_path / "A.txt")
    assert data.shape[1] == 3 and len(data) == len(A.triplets())


def test_singular_system_reported():
    with pytest.raises(SingularSystemError):
        solve_linear(PeriodicBandMatrix(np.zeros((16, 7))), np.ones(16))
    with pytest.raises(SingularSystemError, match="pivot"):
        solve_linear(PeriodicBandMatrix(np.zeros((6, 7))), np.ones(6))


@pytest.mark.parametrize("r", [4, 5])
def test_projection_converges_at_order_r(r):
    f = lambda x: np.sin(x)
    errs = []
    for N in (16, 32):
        space = build_space(2 * math.pi, N, r)
        c = l2_project(space, f)
        x = np.linspace(0, 2 * math.pi, 2001)
        errs.append(np.abs(function_eval(space, c, x) - f(x)).max())
    assert math.log2(errs[0] / errs[1]) == pytest.approx(r, abs=0.3)
