"""Hot numeric kernels for masked squared losses.

Every solver iteration gathers predictions at the observed coordinates and
scatter-adds residuals back into a dense gradient, so these inner loops are
compiled with numba by default. Setting the environment variable
``TRANSMC_NUMBA=0`` (before import) selects a pure-numpy fallback; the
fallback is also used automatically when numba is not importable.

Both backends accumulate in observation order, so repeated coordinates add
their contributions deterministically. Results agree across backends to
floating-point roundoff, not bit-for-bit.
"""

import os

import numpy as np


def _numba_enabled() -> bool:
    flag = os.environ.get("TRANSMC_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


# ---------------------------------------------------------------------------
# pure-numpy reference implementations
# ---------------------------------------------------------------------------

def loss_value_numpy(A, rows, cols, values):
    """Mean squared residual (1/n) * sum (y_i - A[r_i, c_i])^2."""
    d = values - A[rows, cols]
    return float(d @ d) / rows.size


def loss_gradient_numpy(A, rows, cols, values, out):
    """Gradient (2/n) * sum (A[r_i, c_i] - y_i) e_r e_c^T, written into out."""
    out[...] = 0.0
    d = A[rows, cols] - values
    np.add.at(out, (rows, cols), d)
    out *= 2.0 / rows.size
    return out


def predict_numpy(A, rows, cols):
    return A[rows, cols]


if _numba_enabled():
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - exercised only without numba
        njit = None
else:
    njit = None

if njit is not None:
    BACKEND = "numba"

    @njit(cache=True)
    def _loss_value_nb(A, rows, cols, values):
        acc = 0.0
        for i in range(rows.size):
            d = values[i] - A[rows[i], cols[i]]
            acc += d * d
        return acc / rows.size

    @njit(cache=True)
    def _loss_gradient_nb(A, rows, cols, values, out):
        for j in range(out.shape[0]):
            for l in range(out.shape[1]):
                out[j, l] = 0.0
        scale = 2.0 / rows.size
        for i in range(rows.size):
            out[rows[i], cols[i]] += scale * (A[rows[i], cols[i]] - values[i])
        return out

    @njit(cache=True)
    def _predict_nb(A, rows, cols):
        out = np.empty(rows.size, dtype=np.float64)
        for i in range(rows.size):
            out[i] = A[rows[i], cols[i]]
        return out

    def loss_value(A, rows, cols, values):
        return float(_loss_value_nb(A, rows, cols, values))

    loss_gradient = _loss_gradient_nb
    predict = _predict_nb
else:
    BACKEND = "numpy"
    loss_value = loss_value_numpy
    loss_gradient = loss_gradient_numpy
    predict = predict_numpy
