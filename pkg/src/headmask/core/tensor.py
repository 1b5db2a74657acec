# src/headmask/core/tensor.py

"""
Tensor Core

Thin float64 substrate over numpy: shape-checked products, an exact-masking
softmax and a few elementwise helpers shared by the model, the tagger and the
trainers.
"""

import math
from typing import Union

import numpy as np
import numpy.typing as npt

from .errors import AllMaskedError, ShapeError

Matrix = npt.NDArray[np.float64]
Vector = npt.NDArray[np.float64]

NEG_INF = -math.inf


def as_matrix(data: Union[Matrix, list[list[float]]]) -> Matrix:
    """Build a float64 matrix, rejecting NaN and +inf entries."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {arr.shape}")
    if np.isnan(arr).any() or np.isposinf(arr).any():
        raise ShapeError("matrix entries must not be NaN or +inf")
    return arr


def as_vector(data: Union[Vector, list[float]]) -> Vector:
    """Build a float64 vector, rejecting NaN and +inf entries."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"expected a 1-d vector, got shape {arr.shape}")
    if np.isnan(arr).any() or np.isposinf(arr).any():
        raise ShapeError("vector entries must not be NaN or +inf")
    return arr


def matmul(a: npt.NDArray[np.float64], b: npt.NDArray[np.float64]) -> Matrix:
    """Matrix product with a shape check on the contracted dimension."""
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return np.matmul(a, b)


def softmax_stable(logits: Vector) -> Vector:
    """Softmax over a vector whose -inf entries map to exactly zero."""
    if np.isnan(logits).any():
        raise ShapeError("softmax input contains NaN")
    return softmax_rows(logits[np.newaxis, :])[0]


def softmax_rows(scores: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    """Row-wise softmax over the last axis.

    The finite row maximum is subtracted before exponentiation, so exp(-inf)
    contributes exactly 0 and the row sums to one. A row with no finite entry
    raises AllMaskedError.
    """
    row_max = np.max(scores, axis=-1, keepdims=True)
    if np.isneginf(row_max).any():
        raise AllMaskedError("attention row has every position masked")
    exps = np.exp(scores - row_max)
    return exps / np.sum(exps, axis=-1, keepdims=True)


def log_softmax_rows(scores: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    """Row-wise log-softmax; -inf entries stay -inf."""
    row_max = np.max(scores, axis=-1, keepdims=True)
    if np.isneginf(row_max).any():
        raise AllMaskedError("every token is masked in a logit row")
    shifted = scores - row_max
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def sigmoid(z: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    # clip keeps results strictly inside (0, 1) in float64
    return 1.0 / (1.0 + np.exp(-np.clip(z, -30.0, 30.0)))


def softplus(z: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    return np.logaddexp(0.0, z)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    """Tanh approximation of GELU."""
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x**3)))


def gelu_grad(x: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (
        1.0 + 3.0 * 0.044715 * x * x
    )


def sinusoidal_positions(n_positions: int, d_model: int) -> Matrix:
    """Fixed sinusoidal position table of shape (n_positions, d_model)."""
    positions = np.arange(n_positions, dtype=np.float64)[:, np.newaxis]
    dims = np.arange(d_model, dtype=np.float64)[np.newaxis, :]
    angles = positions / np.power(10000.0, (2.0 * np.floor(dims / 2.0)) / d_model)
    table = np.zeros((n_positions, d_model), dtype=np.float64)
    table[:, 0::2] = np.sin(angles[:, 0::2])
    table[:, 1::2] = np.cos(angles[:, 1::2])
    return table
