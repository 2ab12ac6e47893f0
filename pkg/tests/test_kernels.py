import os
import subprocess
import sys

import numpy as np
import pytest

from transmc import kernels
from _oracles import loss_double_loop

RNG = np.random.default_rng(7)


def random_instance(m1=8, m2=6, n=40, duplicates=True):
    rows = RNG.integers(0, m1, size=n)
    cols = RNG.integers(0, m2, size=n)
    if duplicates:
        rows[1] = rows[0]
        cols[1] = cols[0]
    values = RNG.standard_normal(n)
    A = RNG.standard_normal((m1, m2))
    return A, rows, cols, values


def test_active_backend_matches_numpy_reference():
    A, rows, cols, values = random_instance()
    got = kernels.loss_value(A, rows, cols, values)
    ref = kernels.loss_value_numpy(A, rows, cols, values)
    assert got == pytest.approx(ref, rel=1e-13)

    out = np.empty_like(A)
    got_g = np.array(kernels.loss_gradient(A, rows, cols, values, out))
    ref_g = kernels.loss_gradient_numpy(A, rows, cols, values, np.empty_like(A))
    assert np.allclose(got_g, ref_g, atol=1e-13)

    assert np.allclose(kernels.predict(A, rows, cols), A[rows, cols])


def test_loss_value_matches_double_loop():
    A, rows, cols, values = random_instance()
    assert kernels.loss_value(A, rows, cols, values) == pytest.approx(
        loss_double_loop(A, rows, cols, values), rel=1e-13
    )


def test_gradient_accumulates_duplicates():
    A = np.zeros((2, 2))
    rows = np.array([0, 0, 1])
    cols = np.array([0, 0, 1])
    values = np.array([1.0, 3.0, 2.0])
    g = np.array(kernels.loss_gradient(A, rows, cols, values, np.empty((2, 2))))
    # (2/3) * ((0-1) + (0-3)) at (0,0), (2/3) * (0-2) at (1,1)
    assert g[0, 0] == pytest.approx(-8.0 / 3.0)
    assert g[1, 1] == pytest.approx(-4.0 / 3.0)
    assert g[0, 1] == 0.0 and g[1, 0] == 0.0


def test_gradient_zero_at_interpolant():
    A, rows, cols, _ = random_instance(duplicates=False)
    values = A[rows, cols]
    g = np.array(kernels.loss_gradient(A, rows, cols, values, np.empty_like(A)))
    assert np.allclose(g, 0.0)
    assert kernels.loss_value(A, rows, cols, values) == 0.0


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, TRANSMC_NUMBA="0")
    code = "from transmc import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_default_backend_is_numba_when_available():
    pytest.importorskip("numba")
    env = {k: v for k, v in os.environ.items() if k != "TRANSMC_NUMBA"}
    code = "from transmc import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"
