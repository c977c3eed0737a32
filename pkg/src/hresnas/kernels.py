"""Dense numeric kernels: linear layers, ReLU, inverted dropout, and Adam
with remappable per-weight state.

Everything operates on plain numpy arrays. Weights are stored row-major as
(fan_out, fan_in) so that adding or removing a neuron is a row/column edit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NEW = -1  # remap sentinel: "this index has no predecessor"


class ShapeError(ValueError):
    """Raised when operand shapes are inconsistent."""


def _require_shape(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeError(msg)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    _require_shape(
        a.ndim == 2 and b.ndim == 2 and a.shape[1] == b.shape[0],
        f"matmul: cannot multiply {a.shape} by {b.shape}",
    )
    return a @ b


def linear_forward(weight: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Affine map y = x W^T + b for a batch of row vectors."""
    _require_shape(
        x.ndim == 2 and x.shape[1] == weight.shape[1],
        f"linear_forward: input {x.shape} does not match weight {weight.shape}",
    )
    _require_shape(
        bias.shape == (weight.shape[0],),
        f"linear_forward: bias {bias.shape} does not match weight {weight.shape}",
    )
    return x @ weight.T + bias


def linear_backward(
    weight: np.ndarray, x: np.ndarray, d_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (d_x, d_weight, d_bias) of an affine map.

    `x` is the input cached by the matching forward call and `d_out` the
    gradient of the loss with respect to the output.
    """
    _require_shape(
        d_out.shape == (x.shape[0], weight.shape[0]),
        f"linear_backward: output grad {d_out.shape} does not match "
        f"weight {weight.shape} and input {x.shape}",
    )
    d_x = d_out @ weight
    d_weight = d_out.T @ x
    d_bias = d_out.sum(axis=0)
    return d_x, d_weight, d_bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def dropout_forward(
    x: np.ndarray, p: float, training: bool, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout: kept entries are scaled by 1/(1-p) at train time.

    Returns (y, mask); mask is None when dropout was a no-op (eval mode or
    p == 0), in which case y is x itself.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, None
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = rng.random(x.shape) >= p
    return x * mask / (1.0 - p), mask


def dropout_backward(d_out: np.ndarray, mask: np.ndarray | None, p: float) -> np.ndarray:
    if mask is None:
        return d_out
    return d_out * mask / (1.0 - p)


@dataclass
class AdamState:
    """Per-tensor Adam moments. m and v always share the parameter's shape."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_param(cls, param: np.ndarray, **kwargs) -> "AdamState":
        return cls(m=np.zeros_like(param), v=np.zeros_like(param), **kwargs)

    def copy(self) -> "AdamState":
        return AdamState(
            m=self.m.copy(), v=self.v.copy(), step=self.step,
            beta1=self.beta1, beta2=self.beta2, eps=self.eps,
        )


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float) -> np.ndarray:
    """One bias-corrected Adam update, in place on param and state."""
    _require_shape(
        param.shape == grad.shape == state.m.shape,
        f"adam_step: param {param.shape}, grad {grad.shape} and state "
        f"{state.m.shape} must agree (remap the state after a morphism)",
    )
    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * np.square(grad)
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    param -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return param


def _check_index_map(index_map: np.ndarray, old_size: int, axis: str) -> None:
    old = index_map[index_map != NEW]
    if old.size and (old.min() < 0 or old.max() >= old_size):
        raise IndexError(f"remap: {axis} map references index outside [0, {old_size})")
    if np.unique(old).size != old.size:
        raise ValueError(f"remap: {axis} map must be injective on old indices")


def remap_adam_state(
    state: AdamState, row_map: np.ndarray, col_map: np.ndarray | None = None
) -> AdamState:
    """Rebuild Adam moments for a resized parameter.

    Each map sends a new index to its old index, or to NEW (-1) for entries
    that have no history; those start with zero moments. The step counter is
    preserved so bias correction keeps its schedule.
    """
    row_map = np.asarray(row_map, dtype=np.int64)
    _check_index_map(row_map, state.m.shape[0], "row")
    if col_map is None:
        shape: tuple[int, ...] = (row_map.size,)
    else:
        col_map = np.asarray(col_map, dtype=np.int64)
        _check_index_map(col_map, state.m.shape[1], "col")
        shape = (row_map.size, col_map.size)

    def gather(old: np.ndarray) -> np.ndarray:
        out = np.zeros(shape, dtype=old.dtype)
        rows = row_map != NEW
        if col_map is None:
            out[rows] = old[row_map[rows]]
        else:
            cols = col_map != NEW
            out[np.ix_(rows, cols)] = old[np.ix_(row_map[rows], col_map[cols])]
        return out

    return AdamState(
        m=gather(state.m), v=gather(state.v), step=state.step,
        beta1=state.beta1, beta2=state.beta2, eps=state.eps,
    )


def identity_map(n: int) -> np.ndarray:
    return np.arange(n, dtype=np.int64)


def extend_map(old_n: int, added: int) -> np.ndarray:
    """Map for appending `added` fresh indices after the existing ones."""
    return np.concatenate([np.arange(old_n, dtype=np.int64),
                           np.full(added, NEW, dtype=np.int64)])


def finite_diff_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of a matrix."""
    if h <= 0:
        raise ValueError("finite_diff_grad: h must be positive")
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return grad
