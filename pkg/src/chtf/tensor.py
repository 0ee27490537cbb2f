"""Dense tensor primitives.

Tensors are plain float64 :class:`numpy.ndarray` objects.  The canonical
linear layout is mode-0-fastest (Fortran order), so the mode-``m`` column
vectors of a matrixized tensor are swept with smaller mode indexes varying
more rapidly, and the mode-0 matrixizing is a plain reshape.  All mode
indexes are 0-based; mode 0 is the measurement mode.
"""
from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np


def as_tensor(t) -> np.ndarray:
    """Validate and convert ``t`` to a float64 array of order >= 1."""
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim == 0:
        raise ValueError("order-0 tensors are not supported")
    if any(n < 1 for n in arr.shape):
        raise ValueError(f"all extents must be positive, got {arr.shape}")
    return arr


def _check_mode(mode: int, order: int) -> int:
    if not 0 <= mode < order:
        raise ValueError(f"mode {mode} out of range for an order-{order} tensor")
    return mode


def matrixize(t, mode: int) -> np.ndarray:
    """Mode-``mode`` matrixizing.

    Returns the ``I_mode x prod(I_n, n != mode)`` matrix whose columns are
    the mode-``mode`` fibers, ordered with the remaining modes swept
    smallest-index-fastest (not the cyclic convention).
    """
    t = as_tensor(t)
    _check_mode(mode, t.ndim)
    moved = np.moveaxis(t, mode, 0)
    return np.reshape(moved, (t.shape[mode], -1), order="F")


def unmatrixize(m, mode: int, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`matrixize` for a tensor of shape ``dims``."""
    m = np.asarray(m, dtype=np.float64)
    dims = tuple(int(n) for n in dims)
    _check_mode(mode, len(dims))
    rest = dims[:mode] + dims[mode + 1:]
    expected = (dims[mode], int(np.prod(rest, dtype=np.int64)))
    if m.ndim != 2 or m.shape != expected:
        raise ValueError(f"matrix shape {m.shape} does not match {expected} for dims {dims}")
    t = np.reshape(m, (dims[mode],) + rest, order="F")
    return np.moveaxis(t, 0, mode)


def mode_product(t, mode: int, b) -> np.ndarray:
    """Mode-``mode`` product ``t x_mode b``; ``b`` is ``J x I_mode``."""
    t = as_tensor(t)
    b = np.asarray(b, dtype=np.float64)
    _check_mode(mode, t.ndim)
    if b.ndim != 2 or b.shape[1] != t.shape[mode]:
        raise ValueError(
            f"matrix with shape {b.shape} cannot multiply mode {mode} of extent {t.shape[mode]}"
        )
    out = np.tensordot(b, t, axes=(1, mode))
    return np.moveaxis(out, 0, mode)


def multi_mode_product(t, matrices, modes=None, transpose: bool = False) -> np.ndarray:
    """Apply a chain of mode products.

    ``matrices[k]`` multiplies mode ``modes[k]`` (default: mode ``k``).
    ``None`` entries are skipped.  With ``transpose=True`` each matrix is
    transposed first, which is how cores are computed from data.
    """
    out = as_tensor(t)
    if modes is None:
        modes = range(len(matrices))
    for mode, b in zip(modes, matrices):
        if b is None:
            continue
        b = np.asarray(b, dtype=np.float64)
        out = mode_product(out, mode, b.T if transpose else b)
    return out


def vectorize(t) -> np.ndarray:
    """Flatten in canonical (mode-0-fastest) order."""
    return np.reshape(as_tensor(t), -1, order="F")


def unvectorize(v, dims: Sequence[int]) -> np.ndarray:
    return np.reshape(np.asarray(v, dtype=np.float64), tuple(dims), order="F")


def kronecker(a, b) -> np.ndarray:
    """Kronecker product, ``[A (x) B]_{ik,jl} = a_ij b_kl``."""
    return np.kron(np.atleast_2d(np.asarray(a, dtype=np.float64)),
                   np.atleast_2d(np.asarray(b, dtype=np.float64)))


def kronecker_chain(matrices: Sequence) -> np.ndarray:
    """``M_0 (x) M_1 (x) ...`` in the order given."""
    return reduce(kronecker, matrices)


def khatri_rao_block(blocks_a: Sequence, blocks_b: Sequence) -> np.ndarray:
    """Block-matrix Khatri-Rao product ``[(A_1 (x) B_1) ... (A_L (x) B_L)]``.

    With single-column blocks this is the ordinary column-wise Khatri-Rao
    product.
    """
    if len(blocks_a) != len(blocks_b):
        raise ValueError(f"block counts differ: {len(blocks_a)} vs {len(blocks_b)}")
    if not blocks_a:
        raise ValueError("at least one block is required")
    return np.hstack([kronecker(a, b) for a, b in zip(blocks_a, blocks_b)])


def outer(vectors: Sequence) -> np.ndarray:
    """Outer product ``v_0 o v_1 o ...``; entry ``(i_0, ...) = prod v_c[i_c]``."""
    if len(vectors) == 0:
        raise ValueError("at least one vector is required")
    vs = [np.ravel(np.asarray(v, dtype=np.float64)) for v in vectors]
    return reduce(np.multiply.outer, vs)


def frobenius_norm(t) -> float:
    return float(np.linalg.norm(np.ravel(as_tensor(t))))
