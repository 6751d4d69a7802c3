"""Compare the compiled kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py [--N 64 --M 256]``.  Kernel timings
are per call; the trajectory timing runs each backend in a fresh interpreter
so that backend selection at import time is honoured.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from sksfem import _pykernels
from sksfem.assembly import assemble_mass
from sksfem.spline import build_space
from sksfem.stepper import SchemeParams, assemble_operators

try:
    from sksfem import _kernels
except ImportError:
    _kernels = None

TRAJECTORY = """
import time, math
import numpy as np
from sksfem import BACKEND, build_space, make_model, sample_path, run_path, SchemeParams
space = build_space(2 * math.pi, {N}, 4)
params = SchemeParams(nu=1.0, T=0.25, M={M})
path = sample_path(7, 0.25, ({M}).bit_length() - 1)
t0 = time.perf_counter()
run_path(space, params, make_model("sin", space.L), np.sin, path)
print(BACKEND, time.perf_counter() - t0)
"""


def per_call(fn, repeat=5, number=200):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, default=64)
    ap.add_argument("--M", type=int, default=256)
    args = ap.parse_args()

    space = build_space(2 * np.pi, args.N, 4)
    ops = assemble_operators(space, SchemeParams(nu=1.0, T=0.25, M=args.M))
    c = np.ascontiguousarray(np.random.default_rng(0).standard_normal(args.N))
    phi0, phi1, w = space.piece_table(0), space.piece_table(1), space.weights
    band = np.ascontiguousarray(ops.system.bands)
    rhs = assemble_mass(space).matvec(c)

    backends = [("numpy", _pykernels)] + ([("cython", _kernels)] if _kernels else [])
    print(f"{'kernel':<24}" + "".join(f"{name:>14}" for name, _ in backends) + "   speedup")
    cases = {
        "convection+jacobian": lambda k: (lambda: k.convection(c, phi0, phi1, w, True)),
        "band_matvec": lambda k: (lambda: k.band_matvec(band, c)),
        "cyclic_band_solve": lambda k: (lambda: k.cyclic_band_solve(band, rhs)),
        "newton_solve": lambda k: (lambda: k.newton_solve(band, rhs, c, phi0, phi1, w, ops.k,
                                                          space.h, 1e-10, 30, 0.5, False)),
    }
    for name, make in cases.items():
        times = [per_call(make(k)) for _, k in backends]
        speed = f"{times[0] / times[-1]:9.1f}x" if len(times) > 1 else ""
        print(f"{name:<24}" + "".join(f"{t * 1e6:12.1f}us" for t in times) + speed)

    code = TRAJECTORY.format(N=args.N, M=args.M)
    for env_value in ("1", "0"):
        env = dict(os.environ, SKSFEM_PURE_PYTHON=env_value)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                             check=True).stdout.split()
        print(f"trajectory N={args.N} M={args.M} [{out[0]}]: {float(out[1]):.3f}s")


if __name__ == "__main__":
    main()
