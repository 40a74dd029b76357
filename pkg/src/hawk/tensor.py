"""Dense numerical kernel.

Matrices are plain 2-D ``float64`` numpy arrays. The helpers here only add
the validation and the deterministic conventions the rest of the package
relies on: shape errors that name both operands, masked row softmax with
max-subtraction, and top-k selection with lower-index tie breaking.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import BoundError, DegenerateRowError, ShapeError

Matrix = np.ndarray

RNG_ALGORITHM = "PCG64"


def as_matrix(x, *, name: str = "matrix") -> Matrix:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator; PCG64 streams are identical across platforms."""
    if seed < 0 or seed >= 2**64:
        raise BoundError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def matmul(a: Matrix, b: Matrix) -> Matrix:
    a = as_matrix(a, name="a")
    b = as_matrix(b, name="b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax_rows(
    m: Matrix, mask: Optional[np.ndarray] = None, *, allow_empty: bool = False
) -> Matrix:
    """Row-wise softmax. ``mask`` marks entries that are *kept* (True).

    Masked entries come out exactly 0. A row with no kept entry raises
    ``DegenerateRowError`` unless ``allow_empty``, in which case the row is
    all zeros (an attention query with nothing to attend to).
    """
    m = as_matrix(m)
    if mask is None:
        shifted = m - m.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    mask = np.asarray(mask, dtype=bool)
    if mask.shape != m.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match {m.shape}")
    alive = mask.any(axis=1)
    if not alive.all() and not allow_empty:
        rows = np.flatnonzero(~alive).tolist()
        raise DegenerateRowError(f"rows {rows} are fully masked")
    filled = np.where(mask, m, -np.inf)
    row_max = filled.max(axis=1, keepdims=True)
    row_max[~alive] = 0.0
    e = np.where(mask, np.exp(filled - row_max), 0.0)
    denom = e.sum(axis=1, keepdims=True)
    denom[~alive] = 1.0
    return e / denom


def top_k_indices(v, k: int) -> np.ndarray:
    """Indices of the ``k`` largest entries, ascending; ties go to the lower index."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-D sequence, got shape {v.shape}")
    if k < 0 or k > v.size:
        raise BoundError(f"k={k} outside [0, {v.size}]")
    if not np.isfinite(v).all():
        raise BoundError("top-k input contains non-finite values")
    # stable sort on the negated values keeps equal entries in index order
    order = np.argsort(-v, kind="stable")
    return np.sort(order[:k])
