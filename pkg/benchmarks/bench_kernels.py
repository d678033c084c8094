"""Timing of the element kernels, numpy path versus numba path.

    python3 benchmarks/bench_kernels.py [--n 256] [--repeat 5]

Both paths are imported directly, so the MSDS_NUMBA flag does not matter
here; it only selects which one the package uses.
"""

import argparse
import time

import numpy as np

from msds import _accel, _kernels
from msds.mesh import build_uniform_mesh


def best_of(func, args, repeat):
    func(*args)  # warm up (and compile)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        func(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def cases(n, m, gpc):
    mesh = build_uniform_mesh(n)
    xy, tri = mesh.vertices, mesh.triangles
    rng = np.random.default_rng(0)
    T = tri.shape[0]
    coef = 0.5 + rng.random((m, T))
    values = rng.standard_normal((xy.shape[0], gpc))
    gmats = rng.standard_normal((m, gpc, gpc))
    gmats = gmats + gmats.transpose(0, 2, 1)
    fmid = rng.standard_normal((T, 3))
    z = rng.uniform(-1.0, 1.0, size=200_000)
    return {
        "stiffness_values": (xy, tri, coef),
        "mass_values": (xy, tri),
        "load_values": (xy, tri, fmid),
        "triangle_gradients": (xy, tri, values),
        "triangle_energy": (xy, tri, values, coef, gmats),
        "legendre_table": (z, 8),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=256, help="fine mesh cells per side")
    ap.add_argument("--terms", type=int, default=4, help="coefficient terms")
    ap.add_argument("--gpc", type=int, default=15, help="chaos basis size")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; only the numpy path can run")
    print(f"mesh n={args.n}, terms={args.terms}, |J|={args.gpc}, active backend: {_kernels.BACKEND}")
    print(f"{'kernel':<20} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>8} {'max diff':>10}")
    for name, kargs in cases(args.n, args.terms, args.gpc).items():
        f_np = getattr(_kernels, name + "_np")
        t_np = best_of(f_np, kargs, args.repeat)
        if not _accel.HAVE_NUMBA:
            print(f"{name:<20} {1e3 * t_np:12.2f}")
            continue
        f_nb = getattr(_kernels, name + "_nb")
        t_nb = best_of(f_nb, kargs, args.repeat)
        diff = np.max(np.abs(np.asarray(f_np(*kargs)) - np.asarray(f_nb(*kargs))))
        print(f"{name:<20} {1e3 * t_np:12.2f} {1e3 * t_nb:12.2f} {t_np / t_nb:8.2f} {diff:10.1e}")


if __name__ == "__main__":
    main()
