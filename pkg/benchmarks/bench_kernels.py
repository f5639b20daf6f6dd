"""Compare the numba and numpy tail-scan backends on a synthetic portfolio.

    python3 benchmarks/bench_kernels.py --loans 20000 --repeat 5

Times one full sweep of the 24 default thresholds per backend (best of
``--repeat``) and checks that both backends return the same detections.
"""

import argparse
import time

import numpy as np

from truend import DEFAULT_THRESHOLDS, SynthParams, generate
from truend import _kernels


def sweep(p):
    return [_kernels.scan_tails(p.balance, p.offsets, b, 6, 1) for b in DEFAULT_THRESHOLDS]


def best_time(p, backend, repeat):
    with _kernels.use_backend(backend):
        sweep(p)  # warm-up (includes JIT compilation for numba)
        times = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            out = sweep(p)
            times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--loans", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    p, _ = generate(SynthParams(n_loans=args.loans, seed=args.seed))
    print(f"{p.N} loans, {p.n_records} records, {len(DEFAULT_THRESHOLDS)} thresholds")
    if not _kernels.HAVE_NUMBA:
        print("numba not installed; numpy backend only")

    results = {}
    for backend in ("numpy", "numba"):
        if backend == "numba" and not _kernels.HAVE_NUMBA:
            continue
        t, out = best_time(p, backend, args.repeat)
        results[backend] = (t, out)
        rate = p.n_records * len(DEFAULT_THRESHOLDS) / t / 1e6
        print(f"{backend:>6}: {t * 1e3:9.2f} ms per sweep  ({rate:7.1f} M records/s)")

    if len(results) == 2:
        (t_np, a), (t_nb, b) = results["numpy"], results["numba"]
        for x, y in zip(a, b):
            assert np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1])
            np.testing.assert_allclose(x[2], y[2], rtol=1e-12, equal_nan=True)
            np.testing.assert_allclose(x[3], y[3], rtol=1e-12)
        print(f"speed-up numba/numpy: {t_np / t_nb:.1f}x (threads: {_kernels.numba.get_num_threads()})")


if __name__ == "__main__":
    main()
