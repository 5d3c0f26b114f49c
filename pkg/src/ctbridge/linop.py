"""Minimal matrix-free linear operator protocol.

A LinearOperator bundles a forward map, its adjoint, and the two shapes.
``supports_batch`` advertises that both maps accept arrays with one extra
leading axis; dense matrix operators do, the ray-tracing projector does not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class LinearOperator:
    forward: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    x_shape: tuple[int, ...]
    y_shape: tuple[int, ...]
    supports_batch: bool = False


def matrix_operator(matrix: np.ndarray) -> LinearOperator:
    """Dense (n, d) matrix as an operator on length-d vectors; batch-safe."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ValueError("matrix operator needs a 2-D array")
    n, d = matrix.shape
    return LinearOperator(
        forward=lambda x: x @ matrix.T,
        adjoint=lambda y: y @ matrix,
        x_shape=(d,),
        y_shape=(n,),
        supports_batch=True,
    )


def identity_operator(shape: tuple[int, ...]) -> LinearOperator:
    return LinearOperator(
        forward=lambda x: np.array(x, dtype=float, copy=True),
        adjoint=lambda y: np.array(y, dtype=float, copy=True),
        x_shape=tuple(shape),
        y_shape=tuple(shape),
        supports_batch=True,
    )


def normal_apply(op: LinearOperator, x: np.ndarray, weight: float = 0.0) -> np.ndarray:
    """Evaluate (A^T A + weight * I) x."""
    if weight < 0:
        raise ValueError("normal-equation weight must be non-negative")
    out = op.adjoint(op.forward(x))
    if weight != 0.0:
        out = out + weight * x
    return out
