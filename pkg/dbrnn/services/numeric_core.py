"""Dense linear algebra, activations and seeded randomness.

Matrices are 2-D float64 numpy arrays of shape (rows, cols); column vectors
are the (n, 1) case. Batched computations put one example per column, so a
hidden state for a batch of B windows is an (hidden, B) matrix.
"""
from typing import Literal
import math

import numpy as np


class DbrnnError(Exception):
    """Base class for every error raised by the toolkit."""
    pass


class ShapeError(DbrnnError, ValueError):
    """Raised when matrix shapes do not line up."""
    pass


class NonFiniteError(DbrnnError, ValueError):
    """Raised when a NaN or infinity would leave a public operation."""
    pass


InitScheme = Literal["zeros", "uniform_scaled"]

# splitmix64 constants
_GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_2 = np.uint64(0x94D049BB133111EB)
_MASK_64 = (1 << 64) - 1


def as_matrix(values) -> np.ndarray:
    """Convert values to a float64 matrix; 1-D input becomes a column vector."""
    array = np.asarray(values, dtype=np.float64)
    if array.ndim == 0:
        array = array.reshape(1, 1)
    elif array.ndim == 1:
        array = array.reshape(-1, 1)
    elif array.ndim != 2:
        raise ShapeError(f"Expected a matrix, got an array with shape {array.shape}")
    return array


def check_finite(x: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Raise NonFiniteError unless every element of x is finite."""
    if not np.isfinite(x).all():
        raise NonFiniteError(f"Non-finite values in {what}")
    return x


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product a @ b with shape and finiteness checks."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul shape mismatch: ({a.shape[0]}x{a.shape[1]}) times "
            f"({b.shape[0]}x{b.shape[1]}); inner dimensions {a.shape[1]} != {b.shape[0]}"
        )
    return check_finite(a @ b, "matmul result")


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Element-wise logistic function, evaluated on the stable branch for each sign."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    exp_x = np.exp(x[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return out


def tanh(x: np.ndarray) -> np.ndarray:
    """Element-wise hyperbolic tangent."""
    return np.tanh(np.asarray(x, dtype=np.float64))


def softmax(x: np.ndarray) -> np.ndarray:
    """Column-wise softmax with max subtraction.

    A column vector gives a single distribution; an (n, B) matrix gives one
    distribution per column.
    """
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=0, keepdims=True)
    exp_x = np.exp(shifted)
    return exp_x / exp_x.sum(axis=0, keepdims=True)


def splitmix64(value: int) -> int:
    """One splitmix64 finalisation of a 64-bit integer."""
    z = value & _MASK_64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK_64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK_64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Derive an independent 64-bit seed from a master seed and integer keys."""
    value = seed & _MASK_64
    for key in keys:
        value = splitmix64((value + (key + 1) * 0x9E3779B97F4A7C15) & _MASK_64)
    return value


class SeededRng:
    """Counter-based splitmix64 generator.

    The k-th 64-bit draw is mix(seed + k * 0x9E3779B97F4A7C15) for k = 1, 2, ...
    so the stream is fully determined by the seed and can be reproduced by
    any language with unsigned 64-bit arithmetic. Uniform doubles take the top
    53 bits; normals use Box-Muller on consecutive uniform pairs.
    """

    def __init__(self, seed: int):
        if seed < 0 or seed > _MASK_64:
            raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self._counter = 0

    def spawn(self, key: int) -> "SeededRng":
        """Child generator whose stream depends only on (seed, key)."""
        return SeededRng(derive_seed(self.seed, key))

    def next_uint64(self, size: int) -> np.ndarray:
        """Draw `size` raw 64-bit values."""
        counters = np.arange(self._counter + 1, self._counter + size + 1, dtype=np.uint64)
        self._counter += size
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + counters * _GOLDEN_GAMMA
            z = (z ^ (z >> np.uint64(30))) * _MIX_1
            z = (z ^ (z >> np.uint64(27))) * _MIX_2
        return z ^ (z >> np.uint64(31))

    def uniform(self, size: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Uniform doubles in [low, high)."""
        unit = (self.next_uint64(size) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        return low + (high - low) * unit

    def normal(self, size: int, std: float = 1.0) -> np.ndarray:
        """Gaussian draws with mean zero."""
        pairs = (size + 1) // 2
        u1 = self.uniform(pairs)
        u2 = self.uniform(pairs)
        radius = np.sqrt(-2.0 * np.log1p(-u1))  # 1 - u1 is in (0, 1]
        angle = 2.0 * math.pi * u2
        values = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
        return std * values[:size]

    def permutation(self, n: int) -> np.ndarray:
        """Random permutation of range(n)."""
        return np.argsort(self.uniform(n), kind="stable")

    def choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), in increasing order."""
        if k > n:
            raise ValueError(f"Cannot choose {k} of {n} without replacement")
        return np.sort(self.permutation(n)[:k])

    def integers(self, size: int, high: int) -> np.ndarray:
        """Integers in [0, high)."""
        return np.minimum((self.uniform(size) * high).astype(np.int64), high - 1)


def init_weights(rows: int, cols: int, scheme: InitScheme, rng: SeededRng) -> np.ndarray:
    """Initial matrix of shape (rows, cols).

    `uniform_scaled` draws from U(-a, a) with a = sqrt(6 / (rows + cols)).
    """
    if rows < 1 or cols < 1:
        raise ShapeError(f"Weight matrices need rows, cols >= 1, got {rows}x{cols}")
    if scheme == "zeros":
        return np.zeros((rows, cols))
    if scheme == "uniform_scaled":
        bound = math.sqrt(6.0 / (rows + cols))
        return rng.uniform(rows * cols, -bound, bound).reshape(rows, cols)
    raise ValueError(f"Unknown initialization scheme: {scheme}")
