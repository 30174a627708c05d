"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--columns 200]

Times LASSO (path warm start + coordinate descent) and OMP on the same
problems with both backends and checks that the results agree.
"""
import argparse
import time

import numpy as np

from msc import kernels

PROBLEMS = [
    # (N, K, lambda, sparsity)
    (16, 32, 0.1, 4),
    (32, 300, 0.05, 8),
    (64, 128, 0.2, 5),
]


def _problem(N, K, cols, seed):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((N, K))
    D /= np.linalg.norm(D, axis=0)
    X = rng.standard_normal((N, cols))
    G = D.T @ D
    return D, G, X


def _lasso(be, G, C, lam):
    Y = np.zeros((G.shape[0], C.shape[1]))
    be.lasso_path_batch(G, C, lam, Y)
    be.lasso_cd_batch(G, C, lam, Y, 1000, 1e-10)
    return Y


def _omp(be, D, G, X, S):
    return [be.omp(D, G, X[:, j].copy(), S, 1e-10)[1] for j in range(X.shape[1])]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--columns", type=int, default=200)
    args = ap.parse_args(argv)
    py = kernels.get_backend("python")
    try:
        cy = kernels.get_backend("cython")
    except ImportError:
        print("compiled backend not built; only the python backend is available")
        cy = None
    print(f"{'kernel':<6} {'N':>4} {'K':>4} {'python ms/col':>14} {'cython ms/col':>14} "
          f"{'speedup':>8} {'max diff':>9}")
    for N, K, lam, S in PROBLEMS:
        D, G, X = _problem(N, K, args.columns, N * K)
        C = D.T @ X
        # the python backend is slow at large K; time it on fewer columns
        ncol = max(10, args.columns // 10) if K > 100 else args.columns
        rows = [("lasso", lambda be, n: _lasso(be, G, C[:, :n], lam)),
                ("omp", lambda be, n: _omp(be, D, G, X[:, :n], S))]
        for name, fn in rows:
            tp, outp = best_of(lambda: fn(py, ncol), args.repeat)
            line = f"{name:<6} {N:>4} {K:>4} {1e3 * tp / ncol:>14.3f}"
            if cy is not None:
                tc, outc = best_of(lambda: fn(cy, ncol), args.repeat)
                if name == "lasso":
                    diff = float(np.max(np.abs(outp - outc)))
                else:
                    diff = max(float(np.max(np.abs(a - b))) for a, b in zip(outp, outc))
                line += f" {1e3 * tc / ncol:>14.3f} {tp / tc:>7.1f}x {diff:>9.1e}"
            print(line)


if __name__ == "__main__":
    main()
