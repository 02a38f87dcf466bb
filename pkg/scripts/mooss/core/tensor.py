"""
Dense float64 tensors with reverse-mode differentiation.

Every operator is a module-level function registered in REGISTERED_OPS. An
operator computes its output with numpy, checks it is finite, and records a
closure mapping the output gradient to one gradient per input. Tensor.backward
walks the recorded trace in reverse topological order; gradients of
intermediate nodes live only for the duration of one backward call, leaf
gradients accumulate (+=).
"""

import contextlib
import math
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from utils.constants import ATTENTION_MASK_VALUE, LAYER_NORM_EPS
from utils.validation import ConfigError, NumericalError, UsageError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

# Operator name -> forward function
REGISTERED_OPS: Dict[str, Callable] = {}

_grad_enabled = True
_relu_trace: Optional[List[np.ndarray]] = None


def register_op(name: str):
    """Record an operator (and thereby its adjoint) in REGISTERED_OPS."""
    def wrap(fn):
        REGISTERED_OPS[name] = fn
        return fn
    return wrap


@contextlib.contextmanager
def no_grad():
    """Disable trace recording inside the block."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


@contextlib.contextmanager
def trace_relu_signs():
    """Collect the sign pattern of every relu input evaluated inside the block."""
    global _relu_trace
    previous = _relu_trace
    _relu_trace = []
    try:
        yield _relu_trace
    finally:
        _relu_trace = previous


class Tensor:
    """
    A dense n-dimensional float64 array that may take part in differentiation.

    Attributes:
        data: numpy array (row-major, float64)
        requires_grad: whether gradients flow into this tensor
        grad: accumulated gradient for leaves (None until the first backward)
        name: optional identifier
        op: name of the operator that produced this tensor ('leaf' otherwise)
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str = "", copy: bool = True):
        if copy:
            self.data = np.array(data, dtype=np.float64)
        else:
            self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.op = "leaf"
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None

    # -- introspection -------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad}{label})"

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)
    def __getitem__(self, index): return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False): return tensor_sum(self, axis, keepdims)
    def mean(self, axis=None, keepdims: bool = False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)
    def transpose(self, *axes): return transpose(self, axes if axes else None)
    def relu(self): return relu(self)
    def exp(self): return exp(self)
    def log(self): return log(self)

    # -- differentiation -----------------------------------------------------

    def backward(self) -> None:
        """
        Accumulate d(self)/d(leaf) into every reachable leaf's grad.

        Raises:
            UsageError: If self is not a scalar or records no trace
        """
        if self.data.size != 1:
            raise UsageError(f"backward requires a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise UsageError("backward called on a tensor with no recorded trace")

        order = _topological_order(self)
        pending: Dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}

        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + pg if key in pending else pg


class Parameter(Tensor):
    """A named leaf tensor whose gradient buffer always exists when trainable."""

    def __init__(self, value, name: str, requires_grad: bool = True):
        super().__init__(value, requires_grad=requires_grad, name=name)
        self.grad = np.zeros_like(self.data) if requires_grad else None

    @property
    def value(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape}, requires_grad={self.requires_grad})"


def _topological_order(root: Tensor) -> List[Tensor]:
    """Post-order over the recorded trace: every node after all its inputs."""
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _from_op(data: np.ndarray, parents: Sequence[Tensor], op: str, backward: BackwardFn) -> Tensor:
    data = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise NumericalError(f"non-finite values produced by operator '{op}'")
    needs_grad = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs_grad, copy=False)
    out.op = op
    if needs_grad:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ConfigError(f"shape mismatch in {op}: {a.shape} vs {b.shape}") from None


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ==============================================================================
# ELEMENTWISE
# ==============================================================================

@register_op("add")
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return _from_op(
        a.data + b.data, (a, b), "add",
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


@register_op("sub")
def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return _from_op(
        a.data - b.data, (a, b), "sub",
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


@register_op("neg")
def neg(a) -> Tensor:
    a = as_tensor(a)
    return _from_op(-a.data, (a,), "neg", lambda g: (-g,))


@register_op("mul")
def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return _from_op(
        a.data * b.data, (a, b), "mul",
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


@register_op("div")
def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    with np.errstate(divide='ignore', invalid='ignore'):
        out = a.data / b.data
    return _from_op(
        out, (a, b), "div",
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


@register_op("exp")
def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over='ignore'):
        out = np.exp(a.data)
    return _from_op(out, (a,), "exp", lambda g: (g * out,))


@register_op("log")
def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide='ignore', invalid='ignore'):
        out = np.log(a.data)
    return _from_op(out, (a,), "log", lambda g: (g / a.data,))


@register_op("relu")
def relu(a) -> Tensor:
    a = as_tensor(a)
    active = a.data > 0
    if _relu_trace is not None:
        _relu_trace.append(active.copy())
    return _from_op(np.where(active, a.data, 0.0), (a,), "relu", lambda g: (g * active,))


# ==============================================================================
# REDUCTIONS AND SHAPE
# ==============================================================================

def _expand_reduced(g: np.ndarray, shape: Tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        for ax in sorted(ax % len(shape) for ax in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


@register_op("sum")
def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    return _from_op(
        out, (a,), "sum",
        lambda g: (np.array(_expand_reduced(g, a.shape, axis, keepdims)),),
    )


@register_op("mean")
def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size // max(np.size(out), 1)
    return _from_op(
        out, (a,), "mean",
        lambda g: (np.array(_expand_reduced(g, a.shape, axis, keepdims)) / count,),
    )


@register_op("reshape")
def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ConfigError(f"shape mismatch in reshape: cannot view {a.shape} as {tuple(shape)}") from None
    return _from_op(out, (a,), "reshape", lambda g: (g.reshape(a.shape),))


@register_op("transpose")
def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _from_op(
        np.transpose(a.data, axes), (a,), "transpose",
        lambda g: (np.transpose(g, inverse),),
    )


def swapaxes(a, axis1: int, axis2: int) -> Tensor:
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[axis1], axes[axis2] = axes[axis2], axes[axis1]
    return transpose(a, axes)


@register_op("gather")
def getitem(a, index) -> Tensor:
    """Index or gather entries; the adjoint scatters with np.add.at."""
    a = as_tensor(a)
    try:
        out = a.data[index]
    except IndexError as e:
        raise UsageError(f"gather on shape {a.shape} failed: {e}") from None

    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _from_op(np.array(out), (a,), "gather", backward)


def gather(a, indices, axis: int = 0) -> Tensor:
    """Select entries along one axis by integer indices."""
    a = as_tensor(a)
    index = [slice(None)] * a.ndim
    index[axis] = np.asarray(indices, dtype=np.int64)
    return getitem(a, tuple(index))


@register_op("concat")
def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ConfigError(f"shape mismatch in concat: {[t.shape for t in tensors]}") from None
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _from_op(out, tensors, "concat", lambda g: tuple(np.split(g, splits, axis=axis)))


@register_op("stack")
def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ConfigError(f"shape mismatch in stack: {[t.shape for t in tensors]}") from None
    count = len(tensors)
    return _from_op(
        out, tensors, "stack",
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(count)),
    )


# ==============================================================================
# LINEAR ALGEBRA
# ==============================================================================

@register_op("matmul")
def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes with broadcast batch axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ConfigError(f"shape mismatch in matmul: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ConfigError(f"shape mismatch in matmul: {a.shape} @ {b.shape}") from None

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _from_op(np.matmul(a.data, b.data), (a, b), "matmul", backward)


def linear(x, weight, bias=None) -> Tensor:
    """x @ weight (+ bias); weight has shape (in_features, out_features)."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


@register_op("conv2d")
def conv2d(x, weight, bias=None, stride: int = 1) -> Tensor:
    """
    Valid (unpadded) 2-D cross-correlation.

    Args:
        x: (N, C, H, W)
        weight: (O, C, kh, kw)
        bias: (O,) or None
        stride: step between windows along both spatial axes
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ConfigError(f"shape mismatch in conv2d: input {x.shape} vs kernel {weight.shape}")
    if stride < 1:
        raise ConfigError(f"conv2d stride must be >= 1, got {stride}")
    _, _, H, W = x.shape
    _, _, kh, kw = weight.shape
    if kh > H or kw > W:
        raise ConfigError(f"shape mismatch in conv2d: kernel {weight.shape} larger than input {x.shape}")
    out_h = (H - kh) // stride + 1
    out_w = (W - kw) // stride + 1

    windows = sliding_window_view(x.data, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.einsum('nchwij,ocij->nohw', windows, weight.data, optimize=True)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ConfigError(f"shape mismatch in conv2d: bias {bias.shape} vs kernel {weight.shape}")
        out = out + bias.data[None, :, None, None]
        parents.append(bias)

    def backward(g):
        g_weight = np.einsum('nchwij,nohw->ocij', windows, g, optimize=True)
        g_windows = np.einsum('nohw,ocij->nchwij', g, weight.data, optimize=True)
        g_x = np.zeros_like(x.data)
        row_end = stride * (out_h - 1) + 1
        col_end = stride * (out_w - 1) + 1
        for i in range(kh):
            for j in range(kw):
                g_x[:, :, i:i + row_end:stride, j:j + col_end:stride] += g_windows[..., i, j]
        grads = [g_x, g_weight]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return _from_op(out, parents, "conv2d", backward)


# ==============================================================================
# NORMALIZATION AND SOFTMAX
# ==============================================================================

@register_op("layer_norm")
def layer_norm(x, gamma=None, beta=None, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize over the last axis, then scale by gamma and shift by beta."""
    x = as_tensor(x)
    width = x.shape[-1]
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    x_hat = centered * inv_std

    parents = [x]
    scale = np.ones(width)
    out = x_hat
    if gamma is not None:
        gamma = as_tensor(gamma)
        if gamma.shape != (width,):
            raise ConfigError(f"shape mismatch in layer_norm: gamma {gamma.shape} vs input {x.shape}")
        scale = gamma.data
        out = out * scale
        parents.append(gamma)
    if beta is not None:
        beta = as_tensor(beta)
        if beta.shape != (width,):
            raise ConfigError(f"shape mismatch in layer_norm: beta {beta.shape} vs input {x.shape}")
        out = out + beta.data
        parents.append(beta)

    def backward(g):
        g_hat = g * scale
        g_x = inv_std * (
            g_hat
            - g_hat.mean(axis=-1, keepdims=True)
            - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True)
        )
        grads = [g_x]
        if gamma is not None:
            grads.append((g * x_hat).reshape(-1, width).sum(axis=0))
        if beta is not None:
            grads.append(g.reshape(-1, width).sum(axis=0))
        return grads

    return _from_op(out, parents, "layer_norm", backward)


@register_op("softmax")
def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    probs = shifted / shifted.sum(axis=axis, keepdims=True)
    return _from_op(
        probs, (x,), "softmax",
        lambda g: (probs * (g - (g * probs).sum(axis=axis, keepdims=True)),),
    )


@register_op("logsumexp")
def logsumexp(x, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    log(sum(exp(x))) along an axis, restricted to entries where mask is True.

    Rows with no selected entry yield 0.0 and receive no gradient.
    """
    x = as_tensor(x)
    if mask is None:
        selected = np.ones(x.shape, dtype=bool)
    else:
        try:
            selected = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        except ValueError:
            raise ConfigError(f"shape mismatch in logsumexp: mask {np.shape(mask)} vs input {x.shape}") from None

    masked = np.where(selected, x.data, -np.inf)
    row_max = masked.max(axis=axis, keepdims=True)
    empty = ~np.isfinite(row_max)
    row_max = np.where(empty, 0.0, row_max)
    weights = np.where(selected, np.exp(masked - row_max), 0.0)
    totals = np.where(empty, 1.0, weights.sum(axis=axis, keepdims=True))
    out = np.where(empty, 0.0, row_max + np.log(totals))
    probs = weights / totals

    return _from_op(
        np.squeeze(out, axis=axis), (x,), "logsumexp",
        lambda g: (np.expand_dims(g, axis) * probs,),
    )


# ==============================================================================
# ATTENTION
# ==============================================================================

def causal_mask(length: int) -> np.ndarray:
    """Boolean visibility matrix: position k sees positions <= k."""
    return np.tril(np.ones((length, length), dtype=bool))


def scaled_dot_product_attention(q, k, v, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    softmax(q k^T / sqrt(d_head) + additive_mask) v over the last two axes.

    Args:
        q, k, v: (..., T, d_head)
        mask: boolean (T, T), True where attention is allowed
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    scores = matmul(q, swapaxes(k, -1, -2)) * (1.0 / math.sqrt(q.shape[-1]))
    if mask is not None:
        scores = scores + Tensor(np.where(mask, 0.0, ATTENTION_MASK_VALUE))
    return matmul(softmax(scores, axis=-1), v)


def sinusoidal_table(length: int, width: int) -> np.ndarray:
    """Absolute sinusoidal position encodings, shape (length, width)."""
    positions = np.arange(length, dtype=np.float64)[:, None]
    pair_index = np.arange(0, width, 2, dtype=np.float64)
    rates = np.exp(-math.log(10000.0) * pair_index / width)
    table = np.zeros((length, width))
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[: width // 2])
    return table


def zero_grad(params: Sequence[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def uniform_parameter(
    name: str,
    shape: Tuple[int, ...],
    fan_in: int,
    rng: Optional[np.random.Generator],
) -> Parameter:
    """Parameter drawn from U[-1/sqrt(fan_in), 1/sqrt(fan_in)] (zeros when rng is None)."""
    if rng is None:
        return Parameter(np.zeros(shape), name)
    bound = 1.0 / math.sqrt(fan_in)
    return Parameter(rng.uniform(-bound, bound, size=shape), name)
