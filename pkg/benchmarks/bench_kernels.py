"""Compare the compiled kernels with the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times the neighborhood scan, the greedy swap scoring and a full LBF run on
the affine 2^2inR4 and 10^2inR15 settings under both backends, and checks
that the two backends agree.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from lbflats import kernels
from lbflats.data import SETTINGS, SyntheticSpec, generate
from lbflats.lbf import LbfConfig, lbf_cluster


def _cases():
    for name in ("2^2inR4", "10^2inR15"):
        dims, D = SETTINGS[name]
        lc = generate(SyntheticSpec(dims, D, outlier_fraction=0.05, kind="affine", seed=7))
        yield name, dims, lc.points


def _time(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    backends = kernels.available_backends()
    if "native" not in backends:
        print("compiled extension not built; only the numpy fallback is available")
    rng = np.random.default_rng(0)
    rows = []
    for name, dims, X in _cases():
        d, K = max(dims), len(dims)
        centers = X[rng.integers(0, X.shape[0], 70 * K)]
        dist = rng.random((X.shape[0], 70 * K))
        base = rng.random(X.shape[0])
        scans, results = {}, {}
        for be in backends:
            kernels.set_backend(be)
            t_scan = _time(lambda: kernels.scan_neighborhoods(X, centers, d, True, d + 2, 2, X.shape[0]), args.repeat)
            t_swap = _time(lambda: kernels.swap_scores(dist, base), args.repeat)
            cfg = LbfConfig(d=d, K=K, seed=1)
            t_lbf = _time(lambda: lbf_cluster(X, cfg), args.repeat)
            scans[be] = kernels.scan_neighborhoods(X, centers, d, True, d + 2, 2, X.shape[0])
            results[be] = lbf_cluster(X, cfg)
            rows.append((name, be, t_scan, t_swap, t_lbf))
        if len(backends) == 2:
            same_scan = all(a[1] == b[1] and np.array_equal(a[2], b[2]) for a, b in zip(scans["native"], scans["python"]))
            same_labels = np.array_equal(results["native"].labels, results["python"].labels)
            print(f"{name}: backends agree on scans={same_scan} labels={same_labels}")
    kernels.set_backend("auto")

    print(f"{'setting':<11} {'backend':<7} {'scan [ms]':>10} {'swap [ms]':>10} {'lbf [ms]':>10}")
    for name, be, a, b, c in rows:
        print(f"{name:<11} {be:<7} {1e3 * a:10.2f} {1e3 * b:10.3f} {1e3 * c:10.2f}")
    if len(backends) == 2:
        by = {(r[0], r[1]): r for r in rows}
        for name in sorted({r[0] for r in rows}):
            nat, py = by[(name, "native")], by[(name, "python")]
            print(f"{name}: speedup scan x{py[2] / nat[2]:.1f}, swap x{py[3] / nat[3]:.1f}, lbf x{py[4] / nat[4]:.1f}")


if __name__ == "__main__":
    main()
