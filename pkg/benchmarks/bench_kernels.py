"""Compare the compiled ray kernels against the pure-numpy fallback.

Times the two backend routines on production-shaped inputs (the moment
assembly for one wavevector uses n_rays = n_polar * n_azimuth rays over
the n_z-level grid) and reports the speedup plus the max deviation
between the implementations.  With --end-to-end it also times a full
moment_operators call in a subprocess for each backend, since the
backend is frozen at import time.

Usage:
    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --n-z 257 --repeat 5 --end-to-end
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def _timeit(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_kernels(n_z, n_rays, n_g, n_c, repeat, rng):
    from photoconv import _kernels_py

    try:
        from photoconv import _kernels
    except ImportError:
        print("compiled kernels not built; nothing to compare")
        return 1

    n_up = n_rays // 2
    f = rng.standard_normal((n_rays, n_z)) + 1j * rng.standard_normal((n_rays, n_z))
    decay = np.exp(-rng.uniform(0.01, 2.0, (n_rays, n_z - 1))
                   - 1j * rng.uniform(0, 1, (n_rays, n_z - 1)))
    w_s = rng.uniform(0, 0.1, (n_rays, n_z - 1)).astype(complex)
    w_e = rng.uniform(0, 0.1, (n_rays, n_z - 1)).astype(complex)
    init = rng.standard_normal(n_rays - n_up).astype(complex)
    lw = rng.standard_normal((n_g, n_rays))
    coefs = rng.standard_normal((n_c, n_rays, n_z)) \
        + 1j * rng.standard_normal((n_c, n_rays, n_z))

    print(f"shapes: {n_rays} rays x {n_z} levels, {n_g} weight x {n_c} "
          f"coefficient families, best of {repeat}")
    rows = [
        ("ray_sweep",
         lambda: _kernels.ray_sweep(f, decay, w_s, w_e, n_up, init),
         lambda: _kernels_py.ray_sweep(f, decay, w_s, w_e, n_up, init)),
        ("fold_propagation",
         lambda: _kernels.fold_propagation(decay, w_s, w_e, lw, coefs, n_up),
         lambda: _kernels_py.fold_propagation(decay, w_s, w_e, lw, coefs, n_up)),
    ]
    for name, f_ext, f_py in rows:
        t_ext, out_ext = _timeit(f_ext, repeat)
        t_py, out_py = _timeit(f_py, repeat)
        dev = np.max(np.abs(np.asarray(out_ext) - np.asarray(out_py)))
        print(f"  {name:<18} compiled {t_ext * 1e3:8.2f} ms   numpy "
              f"{t_py * 1e3:8.2f} ms   speedup {t_py / t_ext:5.1f}x   "
              f"max dev {dev:.2e}")
    return 0


_E2E_SNIPPET = """
import time
import numpy as np
from photoconv._backend import HAVE_EXTENSION
from photoconv.basestate import PhototaxisCurve, SuspensionParams, solve_base_state
from photoconv.radiative import solve_basic_radiation
from photoconv.perturb import angular_quadrature, moment_operators

p = SuspensionParams(Sc=20.0, Vc=15.0, tauH=0.5, omega=0.4, A1=0.4, B=0.26,
                     theta_i_deg=40.0, curve=PhototaxisCurve())
rad = solve_basic_radiation(p.tauH, p.omega, A1=p.A1, B=p.B, theta0=p.theta0)
bs = solve_base_state(p, rad, n_z={n_z})
quad = angular_quadrature()
moment_operators(bs, quad, 1.3, 0.9)   # warm caches
t0 = time.perf_counter()
moment_operators(bs, quad, 0.9, 1.3)
dt = time.perf_counter() - t0
print(f"extension={{HAVE_EXTENSION}} moment_operators {{dt * 1e3:.1f}} ms")
"""


def bench_end_to_end(n_z):
    print("end-to-end moment_operators (one wavevector):")
    for no_ext in ("0", "1"):
        env = dict(os.environ, PHOTOCONV_NO_EXTENSION=no_ext)
        if no_ext == "0":
            env.pop("PHOTOCONV_NO_EXTENSION")
        out = subprocess.run([sys.executable, "-c",
                              _E2E_SNIPPET.format(n_z=n_z)],
                             env=env, capture_output=True, text=True)
        line = out.stdout.strip() or out.stderr.strip()
        print(f"  {line}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-z", type=int, default=129, help="grid levels")
    ap.add_argument("--n-rays", type=int, default=384,
                    help="rays (polar x azimuthal ordinates)")
    ap.add_argument("--families", type=int, default=4,
                    help="weight/coefficient families")
    ap.add_argument("--repeat", type=int, default=3, help="best-of repeats")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--end-to-end", action="store_true",
                    help="also time a full moment assembly per backend")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    rc = bench_kernels(args.n_z, args.n_rays, args.families, args.families,
                       args.repeat, rng)
    if rc == 0 and args.end_to_end:
        bench_end_to_end(args.n_z)
    return rc


if __name__ == "__main__":
    sys.exit(main())
