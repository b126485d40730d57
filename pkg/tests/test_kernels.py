import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lbflats import _pykernels, kernels

native = pytest.importorskip("lbflats._ckernels")


def _cloud(seed, n=300, D=4, round_to=None):
    rng = np.random.default_rng(seed)
    X = np.r_[rng.standard_normal((n // 2, 2)) @ np.eye(2, D),
              rng.standard_normal((n - n // 2, 2)) @ np.eye(2, D, 2) + 0.5]
    X += 0.03 * rng.standard_normal(X.shape)
    if round_to is not None:
        X = np.round(X, round_to)
    return np.ascontiguousarray(X)


@pytest.mark.parametrize("round_to", [None, 1])
@pytest.mark.parametrize("affine, allow", [(True, False), (False, False), (True, True)])
def test_scan_neighborhoods_backends_agree(round_to, affine, allow):
    X = _cloud(0, round_to=round_to)
    centers = np.ascontiguousarray(X[::7])
    d, start, step = 2, 4 if affine else 3, 2
    stop = start + step * ((len(X) - start) // step)
    a = _pykernels.scan_neighborhoods(X, centers, d, affine, start, step, stop, allow)
    b = native.scan_neighborhoods(X, centers, d, affine, start, step, stop, allow)
    for (ba, sa, oa), (bb, sb, ob) in zip(a, b):
        assert sa == sb
        np.testing.assert_array_equal(oa, ob)
        np.testing.assert_allclose(ba, bb, atol=1e-10)


def test_beta2_scan_backends_agree():
    X = _cloud(1)
    c = X[3]
    sq = ((X - c) ** 2).sum(axis=1)
    order = np.argsort(sq, kind="stable")
    P, S = np.ascontiguousarray(X[order]), np.ascontiguousarray(sq[order])
    for step in (1, 2, 5):
        stop = 4 + step * ((len(X) - 4) // step)
        a = _pykernels.beta2_scan(P, S, c, 2, True, 4, step, stop, False)
        b = native.beta2_scan(P, S, c, 2, True, 4, step, stop, False)
        assert a[1] == b[1]
        np.testing.assert_allclose(a[0], b[0], atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6), st.integers(1, 3))
def test_random_scans_agree(seed, D, step):
    rng = np.random.default_rng(seed)
    X = np.ascontiguousarray(np.round(rng.standard_normal((60, D)), 1))
    d = int(rng.integers(0, D))
    start = d + 2 if d + 2 <= 60 else d + 1
    stop = start + step * ((60 - start) // step)
    centers = np.ascontiguousarray(X[rng.integers(0, 60, 5)])
    a = _pykernels.scan_neighborhoods(X, centers, d, True, start, step, stop, bool(seed % 2))
    b = native.scan_neighborhoods(X, centers, d, True, start, step, stop, bool(seed % 2))
    for (ba, sa, oa), (bb, sb, ob) in zip(a, b):
        assert sa == sb and np.array_equal(oa, ob)
        np.testing.assert_allclose(ba, bb, atol=1e-9)


def test_swap_scores_agree_with_definition():
    rng = np.random.default_rng(2)
    dist = rng.random((200, 30))
    base = rng.random(200)
    expected = np.array([sum(min(base[i], dist[i, j]) for i in range(200)) for j in range(30)])
    np.testing.assert_allclose(_pykernels.swap_scores(dist, base), expected, rtol=1e-13)
    np.testing.assert_allclose(native.swap_scores(dist, base), expected, rtol=1e-13)
    inf = np.full(200, np.inf)
    np.testing.assert_allclose(native.swap_scores(dist, inf), dist.sum(axis=0), rtol=1e-13)


def test_backend_switching():
    assert set(kernels.available_backends()) == {"native", "python"}
    prev = kernels.set_backend("python")
    try:
        assert kernels.backend() == "python"
        with pytest.raises(ValueError, match="unavailable"):
            kernels.set_backend("gpu")
    finally:
        kernels.set_backend(prev)


def test_environment_selects_fallback():
    env = dict(os.environ, LBF_KERNELS="python")
    out = subprocess.run([sys.executable, "-c", "from lbflats import kernels; print(kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
