import os
import subprocess
import sys

import numpy as np
import pytest

from sksfem import _pykernels
from sksfem.spline import build_space
from sksfem.stepper import SchemeParams, assemble_operators

kern = pytest.importorskip("sksfem._kernels")


@pytest.fixture(params=[(16, 4), (33, 5), (64, 6)])
def setup(request):
    N, r = request.param
    space = build_space(2.0, N, r)
    ops = assemble_operators(space, SchemeParams(nu=1.0, T=0.1, M=4))
    c = np.random.default_rng(N).standard_normal(N)
    return space, ops, c


def test_quad_values_and_load(setup):
    space, _, c = setup
    phi = space.piece_table(1)
    a, b = kern.quad_values(c, phi), _pykernels.quad_values(c, phi)
    np.testing.assert_allclose(a, b, atol=1e-12)
    g = np.ascontiguousarray(np.asarray(b))
    np.testing.assert_allclose(kern.load_vector(g, space.piece_table(0), space.weights),
                               _pykernels.load_vector(g, space.piece_table(0), space.weights),
                               atol=1e-13)


def test_convection(setup):
    space, _, c = setup
    args = (c, space.piece_table(0), space.piece_table(1), space.weights, True)
    va, ja = kern.convection(*args)
    vb, jb = _pykernels.convection(*args)
    np.testing.assert_allclose(va, vb, atol=1e-12)
    np.testing.assert_allclose(ja, jb, atol=1e-12)


def test_matvec_and_solve(setup):
    space, ops, c = setup
    band = np.ascontiguousarray(ops.system.bands)
    np.testing.assert_allclose(kern.band_matvec(band, c), _pykernels.band_matvec(band, c), atol=1e-12)
    np.testing.assert_allclose(kern.cyclic_band_solve(band, c),
                               _pykernels.cyclic_band_solve(band, c), rtol=1e-10, atol=1e-12)


def test_newton(setup):
    space, ops, c = setup
    band = np.ascontiguousarray(ops.system.bands)
    rhs = ops.mass.matvec(c)
    args = (band, rhs, c, space.piece_table(0), space.piece_table(1), space.weights, ops.k,
            space.h, 1e-11, 30, 0.5, False)
    ca, ha = kern.newton_solve(*args)
    cb, hb = _pykernels.newton_solve(*args)
    np.testing.assert_allclose(ca, cb, atol=1e-10)
    assert len(ha) == len(hb)


def test_zero_pivot_raises():
    with pytest.raises(ZeroDivisionError):
        kern.cyclic_band_solve(np.zeros((16, 7)), np.ones(16))


def test_pure_python_switch():
    env = dict(os.environ, SKSFEM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import sksfem; print(sksfem.BACKEND)"], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
