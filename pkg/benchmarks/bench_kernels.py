"""Time the numba kernels against the numpy fallback on random coordinates.

    python3 benchmarks/bench_kernels.py --n 2000 --m 5000 --repeat 5
"""

import argparse
import time

import numpy as np

from fairpoi.kernels import _numba, _numpy


def _coords(rng, n):
    return rng.uniform(30.0, 50.0, n), rng.uniform(-110.0, -90.0, n)


def _best(fn, args, repeat):
    fn(*args)  # warm-up (and JIT compile for numba)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=1000, help="query points")
    ap.add_argument("--m", type=int, default=4000, help="reference points")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    alat, alon = _coords(rng, args.n)
    blat, blon = _coords(rng, args.m)
    w = rng.uniform(0.5, 2.0, args.m)
    cases = {
        "distance_matrix": (alat, alon, blat, blon),
        "min_distance": (alat, alon, blat, blon),
        "kde_log_density": (alat, alon, blat, blon, w, 5.0),
        "mean_log_distance": (alat, alon, blat, blon, 0.01),
        "pairwise_within": (blat[: min(args.m, 3000)], blon[: min(args.m, 3000)]),
    }
    print(f"{'kernel':<20}{'numpy s':>12}{'numba s':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, case in cases.items():
        t_np, r_np = _best(getattr(_numpy, name), case, args.repeat)
        t_nb, r_nb = _best(getattr(_numba, name), case, args.repeat)
        diff = float(np.max(np.abs(np.asarray(r_np) - np.asarray(r_nb)))) if np.size(r_np) else 0.0
        print(f"{name:<20}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.2f}{diff:>14.3e}")


if __name__ == "__main__":
    main()
