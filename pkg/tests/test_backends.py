"""Parity of the compiled kernels with the pure-numpy fallback."""

import importlib
import os
import subprocess
import sys

import numpy as np
import pytest

from ebsurv import _kernels_py, backend


def _modules():
    mods = [("python", _kernels_py)]
    try:
        mods.append(("cython", importlib.import_module("ebsurv._kernels")))
    except ImportError:
        pass
    return mods


MODULES = _modules()
HAS_COMPILED = len(MODULES) == 2


def _each_module(test):
    return pytest.mark.parametrize("name,K", MODULES, ids=[n for n, _ in MODULES])(test)


@_each_module
@pytest.mark.parametrize("trans_a", [False, True])
@pytest.mark.parametrize("trans_b", [False, True])
def test_matmul_all_transpose_flags(name, K, trans_a, trans_b):
    rng = np.random.default_rng(11)
    for m, k, n in [(1, 1, 1), (3, 4, 5), (17, 8, 2), (6, 1, 9)]:
        a = rng.standard_normal((k, m) if trans_a else (m, k))
        b = rng.standard_normal((n, k) if trans_b else (k, n))
        ref = (a.T if trans_a else a) @ (b.T if trans_b else b)
        got = K.matmul(np.ascontiguousarray(a), np.ascontiguousarray(b),
                       trans_a, trans_b)
        np.testing.assert_allclose(got, ref, atol=1e-12)


@_each_module
def test_matmul_zero_sized(name, K):
    a = np.zeros((0, 3))
    b = np.zeros((3, 4))
    assert K.matmul(a, b, False, False).shape == (0, 4)
    assert K.matmul(np.zeros((2, 0)), np.zeros((0, 5)), False, False).shape == (2, 5)
    np.testing.assert_array_equal(
        K.matmul(np.zeros((2, 0)), np.zeros((0, 5)), False, False), np.zeros((2, 5)))


@_each_module
def test_affine_matches_numpy(name, K):
    rng = np.random.default_rng(7)
    x = rng.standard_normal((9, 4))
    w = rng.standard_normal((4, 6))
    b = rng.standard_normal(6)
    np.testing.assert_allclose(K.affine(x, w, b), x @ w + b, atol=1e-12)


@_each_module
def test_relu_and_backward(name, K):
    rng = np.random.default_rng(3)
    x = rng.standard_normal((8, 5))
    g = rng.standard_normal((8, 5))
    np.testing.assert_array_equal(K.relu(x), np.maximum(x, 0.0))
    np.testing.assert_array_equal(K.relu_backward(g, x), np.where(x > 0, g, 0.0))
    assert K.relu_backward(g, np.zeros_like(x)).sum() == 0.0


@_each_module
def test_col_sum(name, K):
    rng = np.random.default_rng(5)
    g = rng.standard_normal((12, 3))
    np.testing.assert_allclose(K.col_sum(g), g.sum(axis=0), atol=1e-12)


@_each_module
def test_logsumexp_rows_is_shift_stable(name, K):
    rng = np.random.default_rng(9)
    x = rng.standard_normal((6, 7))
    ref = np.log(np.exp(x).sum(axis=1))
    np.testing.assert_allclose(K.logsumexp_rows(x), ref, atol=1e-12)
    big = x + 800.0
    np.testing.assert_allclose(K.logsumexp_rows(big), ref + 800.0, atol=1e-9)
    assert np.all(np.isfinite(K.logsumexp_rows(big)))


@_each_module
def test_softmax_rows(name, K):
    rng = np.random.default_rng(13)
    x = rng.standard_normal((5, 6))
    lse = K.logsumexp_rows(x)
    p = K.softmax_rows(x, lse)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    ref = np.exp(x) / np.exp(x).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(p, ref, atol=1e-12)


@pytest.mark.skipif(not HAS_COMPILED, reason="compiled extension not built")
def test_backends_agree_bitwise_on_small_inputs():
    rng = np.random.default_rng(21)
    x = rng.standard_normal((16, 8))
    w = rng.standard_normal((8, 8))
    b = rng.standard_normal(8)
    py, cy = MODULES[0][1], MODULES[1][1]
    np.testing.assert_allclose(py.affine(x, w, b), cy.affine(x, w, b), rtol=1e-14)
    np.testing.assert_allclose(py.logsumexp_rows(x), cy.logsumexp_rows(x), rtol=1e-14)


def test_active_backend_reports_a_known_name():
    assert backend.active_backend() in ("python", "cython")


def test_env_var_forces_python_fallback():
    code = ("import ebsurv; print(ebsurv.active_backend())")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={**os.environ, "EBSURV_BACKEND": "python"})
    assert out.returncode == 0
    assert out.stdout.strip() == "python"


def test_env_var_rejects_unknown_backend():
    code = "import ebsurv"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={**os.environ, "EBSURV_BACKEND": "fortran"})
    assert out.returncode != 0
