import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dash_ensemble.errors import NumericError, ParameterError, ShapeError
from dash_ensemble.tensor import Rng, check_finite, l2_norm, matmul, softmax


def test_matmul_identity_and_forced_case():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(a, np.eye(2)), a)
    np.testing.assert_array_equal(matmul([[1.0, 2.0]], [[3.0], [4.0]]), [[11.0]])


def test_matmul_triple_loop_oracle():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 3))
    ref = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            for k in range(7):
                ref[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(matmul(a, b), ref, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_distributes_over_addition():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b, c = rng.normal(size=(4, 3)), rng.normal(size=(3, 5)), rng.normal(size=(3, 5))
        np.testing.assert_allclose(matmul(a, b + c), matmul(a, b) + matmul(a, c), atol=1e-10)


def test_softmax_examples():
    np.testing.assert_allclose(softmax([[0.0, 0.0, 0.0]]), [[1 / 3] * 3], atol=1e-15)
    e = math.e
    np.testing.assert_allclose(softmax([[1.0, 0.0]]), [[e / (e + 1), 1 / (e + 1)]], atol=1e-15)
    np.testing.assert_allclose(softmax([[1.0, 0.0]]), [[0.73106, 0.26894]], atol=1e-5)
    out = softmax([[1000.0, 0.0]])
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-300)


def test_softmax_rejects_nonpositive_temperature():
    with pytest.raises(ParameterError):
        softmax([[1.0, 2.0]], 0.0)
    with pytest.raises(ParameterError):
        softmax([[1.0, 2.0]], -1.0)


rows = arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)),
              elements=st.floats(-50, 50, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(rows, st.floats(-100, 100), st.floats(0.05, 20))
def test_softmax_shift_and_temperature_invariance(x, c, tau):
    p = softmax(x, tau)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(p >= 0)
    np.testing.assert_allclose(softmax(x + c, tau), p, atol=1e-12)
    np.testing.assert_allclose(softmax(x / tau, 1.0), p, atol=1e-12)


def test_l2_norm():
    assert l2_norm(np.zeros(5)) == 0.0
    assert l2_norm([3.0, 4.0]) == 5.0
    v = np.random.default_rng(2).normal(size=101)
    assert abs(l2_norm(v) - math.sqrt(sum(float(t) ** 2 for t in v))) < 1e-14 * max(1.0, l2_norm(v))


def test_check_finite_raises():
    with pytest.raises(NumericError):
        check_finite(np.array([1.0, np.nan]))
    with pytest.raises(NumericError):
        matmul([[1e308]], [[1e10]])


def test_rng_same_seed_same_stream():
    a, b = Rng(7), Rng(7)
    np.testing.assert_array_equal(a.uniform(size=10), b.uniform(size=10))
    assert Rng(7).child(3).bytes(32) == Rng(7).child(3).bytes(32)
    assert Rng(7).child(3).bytes(32) != Rng(7).child(4).bytes(32)


def test_rng_rejects_bad_seed():
    with pytest.raises(ParameterError):
        Rng(-1)
    with pytest.raises(ParameterError):
        Rng(2**64)


def test_rng_stream_identical_across_processes():
    code = "from dash_ensemble.tensor import Rng; import sys; sys.stdout.write(Rng(12345).bytes(64).hex())"
    outs = [subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout
            for _ in range(2)]
    assert outs[0] == outs[1] == Rng(12345).bytes(64).hex()
