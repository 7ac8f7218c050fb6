"""Dense 2-D float64 kernel: matmul, stable softmax, entrywise norms.

A "tensor" throughout the simulator is a 2-D C-contiguous float64
numpy array; :func:`as_tensor` coerces and validates. The heavy math
is delegated to numpy/BLAS, which is bit-deterministic for fixed
inputs on a given machine.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

__all__ = ["as_tensor", "matmul", "softmax", "p_norm_diff"]


def as_tensor(values, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce to a 2-D float64 array, optionally checking its shape."""
    t = np.ascontiguousarray(values, dtype=np.float64)
    if t.ndim == 1 and rows is not None and cols is not None:
        t = t.reshape(rows, cols)
    if t.ndim != 2:
        raise ShapeError(f"expected a 2-D tensor, got ndim={t.ndim}")
    if t.shape[0] < 1 or t.shape[1] < 1:
        raise ShapeError(f"tensor dimensions must be positive, got {t.shape}")
    if rows is not None and t.shape != (rows, cols):
        raise ShapeError(f"expected shape {(rows, cols)}, got {t.shape}")
    return t


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got ndim {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul dimension mismatch: {a.shape} x {b.shape} "
            f"(inner dims {a.shape[1]} != {b.shape[0]})"
        )
    return a @ b


def softmax(v) -> np.ndarray:
    """Softmax of a 1-D vector, computed with max-subtraction.

    Output entries are positive and sum to 1 (within 1e-12); adding a
    constant to every input leaves the result unchanged. The denominator
    accumulates in value order, so permuting the input permutes the
    output bit-for-bit.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"softmax needs a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("softmax input contains non-finite entries")
    e = np.exp(v - v.max())
    return e / np.sort(e).sum()


def p_norm_diff(a: np.ndarray, b: np.ndarray, p: int = 2) -> float:
    """Entrywise p-norm of (a - b): sum of |.| for p=1, Frobenius for p=2."""
    if a.shape != b.shape:
        raise ShapeError(f"norm of differently shaped tensors: {a.shape} vs {b.shape}")
    if p not in (1, 2):
        raise ValueError(f"norm order must be 1 or 2, got {p}")
    d = a - b
    if p == 1:
        return float(np.abs(d).sum())
    return float(np.sqrt((d * d).sum()))
