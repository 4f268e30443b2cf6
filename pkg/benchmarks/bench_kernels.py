"""Compare the compiled kernels against the numpy reference.

Run ``python3 benchmarks/bench_kernels.py``.  Every kernel is first
checked for identical output on both backends, then timed.
"""

import argparse
import time

import numpy as np

from xrtraffic import _kernels_py as py
from xrtraffic.fvr import as_matrix, vectorize_trace
from xrtraffic.synth import generate, preset_suite

try:
    from xrtraffic import _kernels as cy
except ImportError:
    cy = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--trees", type=int, default=50)
    args = ap.parse_args(argv)
    if cy is None:
        print("compiled extension not built; only the reference backend is available")
        return 1

    traces = [generate(p, i + 1).trace for i, p in enumerate(preset_suite(duration=20))]
    vec = [v for t in traces for v in vectorize_trace(t, 500)]
    X, y = as_matrix(vec)
    X = np.ascontiguousarray(X)
    classes, y_pos = np.unique(y, return_inverse=True)
    rng = np.random.default_rng(0)
    samples = [rng.integers(0, len(y), len(y)) for _ in range(args.trees)]
    t = traces[0]

    def trees(k):
        return lambda: [k.build_tree(X, y_pos.astype(np.intp), s, len(classes), 4, -1, 1, i)
                        for i, s in enumerate(samples)]

    forest = trees(py)()
    flat = []
    offset = 0
    for f, th, lft, rgt, cnt in forest:
        leaf = f < 0
        flat.append((f, th, np.where(leaf, -1, lft + offset), np.where(leaf, -1, rgt + offset),
                     np.argmax(cnt, axis=1), offset))
        offset += len(f)
    fe = np.concatenate([a[0] for a in flat]).astype(np.int32)
    th = np.concatenate([a[1] for a in flat])
    le = np.concatenate([a[2] for a in flat]).astype(np.int32)
    ri = np.concatenate([a[3] for a in flat]).astype(np.int32)
    lc = np.concatenate([a[4] for a in flat]).astype(np.int64)
    roots = np.array([a[5] for a in flat], dtype=np.int64)
    Xq = np.repeat(X, 4, axis=0)

    cases = {
        f"build_tree x{args.trees} ({len(y)} rows)": trees,
        f"forest_votes ({len(Xq)} rows, {len(roots)} trees)":
            lambda k: lambda: k.forest_votes(fe, th, le, ri, roots, lc, Xq, len(classes)),
        f"frame_runs ({len(t)} packets)":
            lambda k: lambda: k.frame_runs(t.length, t.downlink, t.iat, 350, 0.005, 2),
    }
    print(f"{'kernel':<44}{'python (s)':>12}{'cython (s)':>12}{'speedup':>9}  identical")
    for name, make in cases.items():
        tp, out_p = best_of(make(py), args.repeat)
        tc, out_c = best_of(make(cy), args.repeat)
        if isinstance(out_p, list):
            ok = all(same(a, b) for a, b in zip(out_p, out_c))
        else:
            ok = same(out_p, out_c)
        print(f"{name:<44}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}  {ok}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
