"""
Dense-matrix kernels shared by every model component.

All matrices are 2-D float64 numpy arrays. Reductions that feed oracles
(matmul) accumulate in a fixed left-to-right order so reruns and
naive reference loops agree bit for bit.
"""

from collections.abc import Callable, Sequence
from typing import Literal

import numpy as np
import numpy.typing as npt

from semalign.exceptions import ContractError, EvaluationError, ShapeError
from semalign.schemas import SgdConfig

Matrix = npt.NDArray[np.float64]

InitScheme = Literal["uniform_fan_in"]


def as_matrix(values: npt.ArrayLike) -> Matrix:
    """Return values as a 2-D float64 array (a 1-D input becomes a single row)."""
    array = np.asarray(values, dtype=np.float64)
    if array.ndim == 1:
        array = array.reshape(1, -1)
    if array.ndim != 2:
        raise ShapeError("as_matrix", array.shape)
    return array


def require_finite(name: str, matrix: Matrix) -> None:
    """Raise ContractError when a matrix holds NaN or Inf."""
    if not np.all(np.isfinite(matrix)):
        raise ContractError(f"{name} contains non-finite values")


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with inner-index accumulation in ascending order."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out


def softmax_rows(x: Matrix) -> Matrix:
    """Numerically stable row-wise softmax."""
    shifted = x - np.max(x, axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=1, keepdims=True)


def log_softmax_rows(x: Matrix) -> Matrix:
    """Row-wise log-softmax via the max-shifted log-sum-exp."""
    shifted = x - np.max(x, axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """
    Counter-based generator for (seed, *stream).
    Philox streams are identical on every platform for the same key.
    """
    if seed < 0 or any(s < 0 for s in stream):
        raise ContractError("seeds must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *stream])))


def init_matrix(
    rng: np.random.Generator, rows: int, cols: int, scheme: InitScheme = "uniform_fan_in"
) -> Matrix:
    """Draw a rows x cols matrix uniformly in +-sqrt(1/cols)."""
    if rows < 1 or cols < 1:
        raise ShapeError("init_matrix", (rows, cols))
    if scheme != "uniform_fan_in":
        raise ContractError(f"unknown init scheme '{scheme}'")
    bound = np.sqrt(1.0 / cols)
    return rng.uniform(-bound, bound, size=(rows, cols))


def sgd_step(
    params: Matrix, grads: Matrix, velocity: Matrix, cfg: SgdConfig
) -> tuple[Matrix, Matrix]:
    """Momentum SGD: v <- mu*v + g; p <- p - lr*v. Returns (params, velocity)."""
    if not (params.shape == grads.shape == velocity.shape):
        raise ShapeError("sgd_step", params.shape, grads.shape, velocity.shape)
    new_velocity = cfg.momentum * velocity + grads
    return params - cfg.learning_rate * new_velocity, new_velocity


def numerical_grad(
    f: Callable[[list[Matrix]], float], params: Sequence[Matrix], h: float = 1e-6
) -> list[Matrix]:
    """Central-difference gradient of f with respect to every entry of every parameter."""
    if h <= 0:
        raise ContractError("finite-difference step must be positive")
    base = [np.array(p, dtype=np.float64, copy=True) for p in params]
    grads = [np.zeros_like(p) for p in base]
    for index, param in enumerate(base):
        for coord in np.ndindex(param.shape):
            original = param[coord]
            param[coord] = original + h
            plus = _evaluate(f, base)
            param[coord] = original - h
            minus = _evaluate(f, base)
            param[coord] = original
            grads[index][coord] = (plus - minus) / (2.0 * h)
    return grads


def relative_error(analytic: Matrix, numeric: Matrix) -> float:
    """max |a - n| / max(1, |a|, |n|) over all coordinates."""
    if analytic.shape != numeric.shape:
        raise ShapeError("relative_error", analytic.shape, numeric.shape)
    if analytic.size == 0:
        return 0.0
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale))


def grad_check(
    f: Callable[[list[Matrix]], float],
    params: Sequence[Matrix],
    analytic: Sequence[Matrix],
    h: float = 1e-6,
) -> float:
    """Compare analytic gradients against central differences; return the max relative error."""
    if len(params) != len(analytic):
        raise ContractError("one analytic gradient is required per parameter")
    numeric = numerical_grad(f, params, h)
    return max(
        (relative_error(np.asarray(a, dtype=np.float64), n) for a, n in zip(analytic, numeric)),
        default=0.0,
    )


def _evaluate(f: Callable[[list[Matrix]], float], params: list[Matrix]) -> float:
    value = float(f(params))
    if not np.isfinite(value):
        raise EvaluationError(f"objective evaluated to {value}")
    return value
