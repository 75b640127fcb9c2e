"""Compare the compiled and pure-Python kernels on a desk-scale graph.

    python3 benchmarks/bench_kernels.py            # 20k x 32d, about a minute
    python3 benchmarks/bench_kernels.py --smoke    # tiny, a few seconds

Both backends must give identical traces; the script checks that before
reporting timings.
"""
import argparse
import json
import time

import numpy as np

from annscope import _backend
from annscope.dataset import generate_synthetic, split_queries
from annscope.graph import build_graph


def timed(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--K", type=int, default=20)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--L", type=int, nargs="+", default=[20, 100])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--smoke", action="store_true", help="tiny sizes, one repeat")
    args = p.parse_args(argv)
    if args.smoke:
        args.n, args.dim, args.queries, args.L, args.repeat = 1000, 8, 10, [10], 1

    backends = {"python": _backend.python_kernels}
    if _backend.compiled_kernels is not None:
        backends["cython"] = _backend.compiled_kernels
    else:
        print("compiled kernels not built; timing the fallback only")

    full = generate_synthetic("gaussian_clusters", args.n + args.queries, args.dim,
                              seed=0, clusters=max(1, args.n // 200), spread=0.3)
    data, queries = split_queries(full, args.queries)
    t0 = time.perf_counter()
    g = build_graph(data, args.K, "undirected", 70)
    print(f"graph: n={g.n} edges={g.n_edges} built in {time.perf_counter() - t0:.1f} s")
    sym = g.symmetrized()
    rng = np.random.default_rng(1)
    entries = rng.integers(0, data.n, size=len(queries))

    results = []
    for L in args.L:
        traces = {}
        for name, kern in backends.items():
            def run(kern=kern):
                return [kern.beam_search(g.indptr, g.indices, data.vectors, q, int(e), L)
                        for q, e in zip(queries, entries)]
            sec, traces[name] = timed(run, args.repeat)
            results.append({"kernel": "beam_search", "L": L, "backend": name,
                            "ms_per_query": 1000 * sec / len(queries)})
        ref = traces["python"]
        for name, tr in traces.items():
            for a, b in zip(ref, tr):
                if not all(np.array_equal(x, y) for x, y in zip(a, b)):
                    raise SystemExit(f"{name} beam_search disagrees with the fallback at L={L}")

    counts = {}
    for name, kern in backends.items():
        sec, counts[name] = timed(lambda kern=kern: kern.neighbor_pair_counts(sym.indptr, sym.indices),
                                  args.repeat)
        results.append({"kernel": "neighbor_pair_counts", "backend": name, "seconds": sec})
    if any(not np.array_equal(counts["python"], c) for c in counts.values()):
        raise SystemExit("neighbor_pair_counts disagree")

    for r in results:
        print(json.dumps(r, sort_keys=True))
    if "cython" in backends:
        for L in args.L:
            py, cy = (next(r["ms_per_query"] for r in results
                           if r.get("L") == L and r["backend"] == b) for b in ("python", "cython"))
            print(f"beam_search L={L}: speedup {py / cy:.1f}x")
        py, cy = (next(r["seconds"] for r in results
                       if r["kernel"] == "neighbor_pair_counts" and r["backend"] == b)
                  for b in ("python", "cython"))
        print(f"neighbor_pair_counts: speedup {py / cy:.1f}x")


if __name__ == "__main__":
    main()
