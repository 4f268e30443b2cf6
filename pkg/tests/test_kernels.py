import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xrtraffic import _backend, _kernels_py

cy = pytest.importorskip("xrtraffic._kernels")


def test_xorshift_reference_values():
    a, b = _kernels_py.XorShift64(42), _kernels_py.XorShift64(42)
    seq = [a.next() for _ in range(5)]
    assert seq == [b.next() for _ in range(5)]
    assert len(set(seq)) == 5
    assert all(0 <= v < 2**64 for v in seq)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 60), st.integers(1, 4), st.integers(1, 13), st.integers(0, 2**31),
       st.sampled_from([-1, 1, 3]), st.integers(1, 3), st.booleans())
def test_build_tree_identical(n, n_classes, mtry, seed, max_depth, min_leaf, ties):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 13))
    if ties:
        X = np.round(X)  # many equal values exercise threshold handling
    y = rng.integers(0, n_classes, n).astype(np.intp)
    sample = rng.integers(0, n, n)
    a = _kernels_py.build_tree(X, y, sample, n_classes, mtry, max_depth, min_leaf, seed)
    b = cy.build_tree(X, y, sample, n_classes, mtry, max_depth, min_leaf, seed)
    for u, v in zip(a, b):
        assert u.dtype == v.dtype
        assert np.array_equal(u, v)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_forest_votes_identical(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 13))
    y = rng.integers(0, 3, 40).astype(np.intp)
    feats, thrs, lefts, rights, leaf, roots = [], [], [], [], [], []
    off = 0
    for i in range(5):
        f, t, l, r, c = _kernels_py.build_tree(X, y, rng.integers(0, 40, 40), 3, 4, -1, 1, seed + i)
        roots.append(off)
        feats.append(f)
        thrs.append(t)
        lefts.append(np.where(f < 0, -1, l + off))
        rights.append(np.where(f < 0, -1, r + off))
        leaf.append(np.argmax(c, axis=1))
        off += len(f)
    args = (np.concatenate(feats).astype(np.int32), np.concatenate(thrs),
            np.concatenate(lefts).astype(np.int32), np.concatenate(rights).astype(np.int32),
            np.array(roots, dtype=np.int64), np.concatenate(leaf).astype(np.int64))
    Q = rng.normal(scale=2, size=(30, 13))
    assert np.array_equal(_kernels_py.forest_votes(*args, Q, 3), cy.forest_votes(*args, Q, 3))


def test_env_var_forces_python_backend():
    code = "import xrtraffic; print(xrtraffic.BACKEND)"
    env = dict(os.environ, XRTRAFFIC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env.pop("XRTRAFFIC_PURE_PYTHON")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "cython"
    assert _backend.compiled_available()
