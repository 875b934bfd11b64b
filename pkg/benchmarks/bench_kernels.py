"""Time the numba and numpy kernel paths side by side.

    python3 benchmarks/bench_kernels.py [--sizes 64 128 256] [--repeat 5] [--solve]

Kernel timings call both implementations in one process.  ``--solve``
also times a full solve of configs/twophase_2d.json in a subprocess per
backend, switching with EXPFB_DISABLE_NUMBA.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from expfb import _kernels
from expfb.grid import build_mesh, rectangle

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def _cases(n, seed=0):
    mesh = build_mesh(rectangle(), (n, n))
    rng = np.random.default_rng(seed)
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    U = 0.5 * np.sin(3 * x) * np.cos(2 * y) + 0.01 * rng.standard_normal(mesh.n_nodes)
    dU = 1e-3 * rng.standard_normal(mesh.n_nodes)
    el = np.ascontiguousarray(mesh.elements)
    G = np.ascontiguousarray(mesh.shape_grads)
    m = np.ascontiguousarray(mesh.measures)
    vals = np.ascontiguousarray(U[el])
    inf = _kernels.INF_ORDER
    return {
        "dirichlet+grad": (
            lambda: _kernels._nb_dirichlet(U, el, G, m, inf, 700.0, True),
            lambda: _kernels.np_dirichlet(U, el, G, m, inf, 700.0, True)),
        "dirichlet_delta": (
            lambda: _kernels._nb_dirichlet_delta(U, dU, el, G, m, inf, 700.0),
            lambda: _kernels.np_dirichlet_delta(U, dU, el, G, m, inf, 700.0)),
        "band_measure": (
            lambda: _kernels._nb_band_measure(vals, m, -0.05, 0.05, True),
            lambda: _kernels.np_band_measure(vals, m, -0.05, 0.05, True)),
    }


def bench_kernels(sizes, repeat):
    print(f"{'kernel':<18}{'n':>6}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for n in sizes:
        for name, (nb, npf) in _cases(n).items():
            nb()   # compile outside the timing
            t_nb = min(timeit.repeat(nb, number=1, repeat=repeat)) * 1e3
            t_np = min(timeit.repeat(npf, number=1, repeat=repeat)) * 1e3
            print(f"{name:<18}{n:>6}{t_nb:>12.3f}{t_np:>12.3f}{t_np / t_nb:>10.1f}")


def bench_solve():
    code = ("import time;from expfb import BACKEND,load_config,solve;"
            f"s=load_config({os.path.join(ROOT, 'configs', 'twophase_2d.json')!r});"
            "t=time.perf_counter();r=solve(s);"
            "print(BACKEND, f'{time.perf_counter()-t:.2f}', r.converged)")
    for flag in ("0", "1"):
        env = {**os.environ, "EXPFB_DISABLE_NUMBA": flag}
        out = subprocess.run([sys.executable, "-c", code], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"solve twophase_2d 64x64  backend={out[0]:<6} {out[1]} s  converged={out[2]}")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--solve", action="store_true", help="also time a full solve per backend")
    args = p.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        sys.exit("numba is unavailable or disabled; nothing to compare")
    bench_kernels(args.sizes, args.repeat)
    if args.solve:
        bench_solve()


if __name__ == "__main__":
    main()
