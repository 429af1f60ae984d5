"""Timing comparison of the kernel backends.

Runs the two hot kernels on synthetic workloads for every available
backend and prints median runtimes plus the compiled-over-reference
speedup.  Doubles as a parity smoke check: geometry outputs must agree
to 1e-12 and grown trees must be bit-identical.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 9 --tree-sizes 200,800
"""

import argparse
import importlib
import sys
import time

import numpy as np

from vru_intent.features import layout_for
from vru_intent.kernels import available_backends
from vru_intent.rng import tree_stream_seed
from vru_intent.skeleton import PEDESTRIAN_SCHEMA


def _module(name):
    return importlib.import_module(f"vru_intent.kernels._{name}")


def _median_time(fn, repeats):
    best = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best.append(time.perf_counter() - t0)
    return float(np.median(best))


def bench_frame_blocks(backends, frame_counts, repeats):
    layout = layout_for(PEDESTRIAN_SCHEMA)
    idx = layout.index_arrays()
    K = layout.schema.K
    g = np.random.Generator(np.random.PCG64(1))
    print(f"frame_blocks: K={K}, {layout.per_frame} features/frame")
    for T in frame_counts:
        xy = g.uniform(0.0, 200.0, size=(T, K, 2))
        times = {}
        outs = {}
        for name in backends:
            mod = _module(name)
            outs[name] = mod.frame_blocks(xy, *idx)
            times[name] = _median_time(lambda m=mod: m.frame_blocks(xy, *idx), repeats)
        if len(backends) == 2:
            err = float(np.max(np.abs(outs["python"] - outs["native"])))
            assert err <= 1e-12, f"backend mismatch: {err}"
        _row(f"T={T}", times)


def bench_build_tree(backends, sample_counts, repeats):
    d = layout_for(PEDESTRIAN_SCHEMA).per_frame
    mtry = int(np.sqrt(d))
    g = np.random.Generator(np.random.PCG64(2))
    print(f"build_tree: d={d}, mtry={mtry}, depth 15, min_leaf 1")
    for n in sample_counts:
        X = g.normal(size=(n, d))
        y = (X @ g.normal(size=d) > 0.0).astype(np.int32)
        args = (X, y, 2, 15, mtry, 1, tree_stream_seed(7, 0))
        times = {}
        outs = {}
        for name in backends:
            mod = _module(name)
            outs[name] = mod.build_tree(*args)
            times[name] = _median_time(lambda m=mod: m.build_tree(*args), repeats)
        if len(backends) == 2:
            for a, b in zip(outs["python"], outs["native"]):
                assert np.array_equal(a, b), "backends grew different trees"
        _row(f"n={n}", times)


def _row(label, times):
    cells = [f"{name} {1e3 * t:9.3f} ms" for name, t in times.items()]
    if len(times) == 2:
        cells.append(f"speedup x{times['python'] / times['native']:.1f}")
    print(f"  {label:<8} " + "   ".join(cells))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5, help="timing repeats, median kept")
    ap.add_argument("--frame-counts", default="100,1000,10000",
                    help="comma list of frame counts for the geometry kernel")
    ap.add_argument("--tree-sizes", default="200,800,3200",
                    help="comma list of sample counts for tree growth")
    args = ap.parse_args(argv)

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    if "native" not in backends:
        print("note: compiled extension not built, timing the reference only")
    bench_frame_blocks(backends, [int(s) for s in args.frame_counts.split(",")], args.repeats)
    bench_build_tree(backends, [int(s) for s in args.tree_sizes.split(",")], args.repeats)
    return 0


if __name__ == "__main__":
    sys.exit(main())
