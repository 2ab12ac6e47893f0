"""Squared-error loss oracles over masked observations.

A loss oracle exposes value(A) and gradient(A) for the solver; both must be
pure functions of A. The same oracle form covers the single-task objective,
the pooled multi-task objective (concatenated samples) and the debiasing
objective (observations re-centered by a fixed base matrix).
"""

import numpy as np

from transmc import kernels
from transmc.datasets import MaskedDataset, check_compatible, concat_observations


class MaskedSquaredLoss:
    """L(A) = (1/n) sum_i (y_i - A[r_i, c_i])^2 over fixed observations."""

    def __init__(self, m1: int, m2: int, rows, cols, values):
        self.m1 = int(m1)
        self.m2 = int(m2)
        self.rows = np.ascontiguousarray(rows, dtype=np.int64)
        self.cols = np.ascontiguousarray(cols, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        if self.rows.size == 0:
            raise ValueError("loss needs at least one observation")
        if self.rows.min() < 0 or self.rows.max() >= m1:
            raise ValueError("row index out of bounds")
        if self.cols.min() < 0 or self.cols.max() >= m2:
            raise ValueError("column index out of bounds")

    @classmethod
    def from_dataset(cls, ds: MaskedDataset) -> "MaskedSquaredLoss":
        return cls(ds.m1, ds.m2, ds.rows, ds.cols, ds.values)

    @classmethod
    def from_datasets(cls, datasets) -> "MaskedSquaredLoss":
        m1, m2 = check_compatible(datasets)
        rows, cols, values = concat_observations(datasets)
        return cls(m1, m2, rows, cols, values)

    @property
    def n(self) -> int:
        return self.rows.size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m1, self.m2)

    def value(self, A) -> float:
        return kernels.loss_value(A, self.rows, self.cols, self.values)

    def gradient(self, A, out=None) -> np.ndarray:
        if out is None:
            out = np.empty((self.m1, self.m2), dtype=np.float64)
        return kernels.loss_gradient(A, self.rows, self.cols, self.values, out)

    def predict(self, A) -> np.ndarray:
        return kernels.predict(A, self.rows, self.cols)

    def shifted(self, base) -> "MaskedSquaredLoss":
        """Loss in D for observations of base + D: values re-centered by base."""
        base = np.asarray(base, dtype=np.float64)
        if base.shape != (self.m1, self.m2):
            raise ValueError("base matrix shape mismatch")
        residual = self.values - base[self.rows, self.cols]
        return MaskedSquaredLoss(self.m1, self.m2, self.rows, self.cols, residual)

    def data_scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.values))))

    def max_multiplicity(self) -> int:
        """Largest number of samples hitting one coordinate."""
        flat = self.rows * self.m2 + self.cols
        _, counts = np.unique(flat, return_counts=True)
        return int(counts.max())

    def curvature_bound(self) -> float:
        """Lipschitz constant of the gradient: (2/n) * max coordinate multiplicity."""
        return 2.0 * self.max_multiplicity() / self.n


def squared_loss_oracle(data: MaskedDataset) -> MaskedSquaredLoss:
    """Loss oracle for one task's mean squared prediction error."""
    return MaskedSquaredLoss.from_dataset(data)
