"""
Minimal reverse-mode automatic differentiation over float64 ``numpy`` arrays.

Each differentiable op is a ``Function`` whose ``apply`` records the op
on its output tensor; ``Tape`` orders the recorded nodes reachable from an
output and runs the backward pass once per node in reverse order.

Broadcasting is limited to bias-style cases: equal shapes, a single element, a row
vector against the last axis, or a column vector against the first axis.
"""
from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from imml_lab.errors import DegenerateNorm, NonFiniteValue, NonPositiveInput, ShapeMismatch

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]

NORM_EPS = 1e-12


class Tensor:
    def __init__(self, data: ArrayLike, requires_grad: bool = False, _ctx: Optional["Function"] = None) -> None:
        self.data: np.ndarray = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._ctx = _ctx

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"<Tensor shape={self.shape} requires_grad={self.requires_grad}>"

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatch(f"item() needs a single-element tensor, got shape {self.shape}.")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed: Optional[np.ndarray] = None) -> None:
        Tape(self).backward(seed)

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return hadamard(self, other)
    def __rmul__(self, other): return hadamard(other, self)
    def __neg__(self): return scale(self, -1.0)
    def __matmul__(self, other): return matmul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("Division is only defined by a constant.")
        return scale(self, 1.0 / float(other))

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis: Optional[int] = None) -> "Tensor":
        return reduce_sum(self, axis)

    def mean(self, axis: Optional[int] = None) -> "Tensor":
        count = self.data.size if axis is None else self.data.shape[axis]
        return scale(reduce_sum(self, axis), 1.0 / count)


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class Function:
    def __init__(self, *parents: Tensor) -> None:
        self.parents = parents

    @classmethod
    def apply(cls, *inputs: Union[Tensor, ArrayLike], **kwargs) -> Tensor:
        tensors = [as_tensor(t) for t in inputs]
        ctx = cls(*tensors)
        out = ctx.forward(*[t.data for t in tensors], **kwargs)
        requires_grad = any(t.requires_grad for t in tensors)
        return Tensor(out, requires_grad=requires_grad, _ctx=ctx if requires_grad else None)

    def forward(self, *args, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        raise NotImplementedError


class Tape:
    """Recorded nodes reachable from ``output``, parents before children."""

    def __init__(self, output: Tensor) -> None:
        self.output = output
        self.nodes: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._ctx is not None:
                for parent in reversed(node._ctx.parents):
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))

    def backward(self, seed: Optional[np.ndarray] = None) -> None:
        if seed is None:
            if self.output.data.size != 1:
                raise ShapeMismatch(f"backward() without a seed needs a scalar output, got {self.output.shape}.")
            seed = np.ones_like(self.output.data)
        grads: Dict[int, np.ndarray] = {id(self.output): np.asarray(seed, dtype=np.float64)}
        for node in reversed(self.nodes):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node._ctx is None:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._ctx.parents, node._ctx.backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    big, small = (a, b) if a.ndim >= b.ndim else (b, a)
    if small.ndim == 1 and big.ndim >= 1 and small.shape[0] == big.shape[-1]:
        return
    if big.ndim == 2 and small.shape == (big.shape[0], 1):
        return
    raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} are not bias-compatible.")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Add(Function):
    def forward(self, x, y):
        _check_broadcast(x, y, "add")
        self.shapes = (x.shape, y.shape)
        return x + y

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, x, y):
        _check_broadcast(x, y, "sub")
        self.shapes = (x.shape, y.shape)
        return x - y

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, x, y):
        _check_broadcast(x, y, "hadamard")
        self.x, self.y = x, y
        return x * y

    def backward(self, grad):
        return _unbroadcast(grad * self.y, self.x.shape), _unbroadcast(grad * self.x, self.y.shape)


class Scale(Function):
    def forward(self, x, factor: float = 1.0):
        self.factor = factor
        return x * factor

    def backward(self, grad):
        return (grad * self.factor,)


class MatMul(Function):
    def forward(self, x, y):
        if x.ndim not in (1, 2) or y.ndim not in (1, 2) or x.shape[-1] != y.shape[0]:
            raise ShapeMismatch(f"matmul: cannot multiply {x.shape} by {y.shape}.")
        self.x, self.y = x, y
        return x @ y

    def backward(self, grad):
        x, y = self.x, self.y
        if x.ndim == 2 and y.ndim == 2:
            return grad @ y.T, x.T @ grad
        if x.ndim == 2:
            return np.outer(grad, y), x.T @ grad
        if y.ndim == 2:
            return y @ grad, np.outer(x, grad)
        return grad * y, grad * x


class Transpose(Function):
    def forward(self, x):
        if x.ndim != 2:
            raise ShapeMismatch(f"transpose expects a matrix, got {x.shape}.")
        return x.T

    def backward(self, grad):
        return (grad.T,)


class ReduceSum(Function):
    def forward(self, x, axis: Optional[int] = None):
        self.shape, self.axis = x.shape, axis
        return x.sum(axis=axis)

    def backward(self, grad):
        if self.axis is None:
            return (np.broadcast_to(grad, self.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(grad, self.axis), self.shape).copy(),)


class Exp(Function):
    def forward(self, x):
        self.out = np.exp(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, x):
        if np.any(x <= 0):
            raise NonPositiveInput("log is only defined for positive inputs.")
        self.x = x
        return np.log(x)

    def backward(self, grad):
        return (grad / self.x,)


class Tanh(Function):
    def forward(self, x):
        self.out = np.tanh(x)
        return self.out

    def backward(self, grad):
        return (grad * (1.0 - self.out ** 2),)


class Concat(Function):
    def forward(self, *xs, axis: int = -1):
        self.axis = axis
        self.sizes = [x.shape[axis] for x in xs]
        try:
            return np.concatenate(xs, axis=axis)
        except ValueError as e:
            raise ShapeMismatch(f"concat: {e}") from e

    def backward(self, grad):
        cuts = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, cuts, axis=self.axis))


class Take(Function):
    def forward(self, x, indices: Optional[np.ndarray] = None):
        self.shape = x.shape
        self.indices = np.asarray(indices)
        return x[self.indices]

    def backward(self, grad):
        out = np.zeros(self.shape)
        np.add.at(out, self.indices, grad)
        return (out,)


class L2Normalize(Function):
    def forward(self, x, eps: float = NORM_EPS, strict: bool = False):
        squares = np.sum(x * x, axis=-1, keepdims=True)
        if strict and np.any(np.sqrt(squares) <= NORM_EPS):
            raise DegenerateNorm("l2_normalize received a vector with norm at most 1e-12.")
        self.norm = np.sqrt(squares + eps)
        self.out = x / self.norm
        return self.out

    def backward(self, grad):
        inner = np.sum(grad * self.out, axis=-1, keepdims=True)
        return ((grad - self.out * inner) / self.norm,)


class LogSumExp(Function):
    def forward(self, x, mask: Optional[np.ndarray] = None):
        self.mask = np.ones_like(x, dtype=bool) if mask is None else np.broadcast_to(mask, x.shape)
        if not np.all(self.mask.any(axis=-1)):
            raise ValueError("logsumexp: some row has no included entries.")
        masked = np.where(self.mask, x, -np.inf)
        peak = masked.max(axis=-1, keepdims=True)
        weights = np.where(self.mask, np.exp(masked - peak), 0.0)
        total = weights.sum(axis=-1, keepdims=True)
        self.softmax = weights / total
        return (peak + np.log(total)).squeeze(-1)

    def backward(self, grad):
        return (np.expand_dims(grad, -1) * self.softmax,)


class Softmax(Function):
    def forward(self, x):
        shifted = np.exp(x - x.max(axis=-1, keepdims=True))
        self.out = shifted / shifted.sum(axis=-1, keepdims=True)
        return self.out

    def backward(self, grad):
        inner = np.sum(grad * self.out, axis=-1, keepdims=True)
        return (self.out * (grad - inner),)


class SoftmaxXent(Function):
    """Per-row cross-entropy of softmax(logits) against (soft) target rows."""

    def forward(self, logits, targets):
        if logits.shape != targets.shape:
            raise ShapeMismatch(f"softmax_xent: logits {logits.shape} vs targets {targets.shape}.")
        shifted = logits - logits.max(axis=-1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        log_probs = shifted - log_norm
        self.probs = np.exp(log_probs)
        self.targets = targets
        return -np.sum(targets * log_probs, axis=-1)

    def backward(self, grad):
        mass = self.targets.sum(axis=-1, keepdims=True)
        local = self.probs * mass - self.targets
        return np.expand_dims(grad, -1) * local, None


def add(x, y) -> Tensor: return Add.apply(x, y)
def sub(x, y) -> Tensor: return Sub.apply(x, y)
def hadamard(x, y) -> Tensor: return Mul.apply(x, y)
def scale(x, factor: float) -> Tensor: return Scale.apply(x, factor=float(factor))
def matmul(x, y) -> Tensor: return MatMul.apply(x, y)
def transpose(x) -> Tensor: return Transpose.apply(x)
def reduce_sum(x, axis: Optional[int] = None) -> Tensor: return ReduceSum.apply(x, axis=axis)
def exp(x) -> Tensor: return Exp.apply(x)
def log(x) -> Tensor: return Log.apply(x)
def tanh(x) -> Tensor: return Tanh.apply(x)
def softmax(x) -> Tensor: return Softmax.apply(x)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def take(x: Tensor, indices) -> Tensor:
    """Rows ``x[indices]`` along the first axis."""
    return Take.apply(x, indices=np.asarray(indices))


def l2_normalize(x: Tensor, eps: float = NORM_EPS, strict: bool = False) -> Tensor:
    return L2Normalize.apply(x, eps=eps, strict=strict)


def logsumexp(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    return LogSumExp.apply(x, mask=mask)


def cosine(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise cosine similarity of two equally shaped tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"cosine: {a.shape} vs {b.shape}.")
    return reduce_sum(hadamard(l2_normalize(a), l2_normalize(b)), axis=-1)


def cosine_matrix(a: Tensor, b: Tensor) -> Tensor:
    """All pairwise cosine similarities between the rows of ``a`` and ``b``."""
    return matmul(l2_normalize(a), transpose(l2_normalize(b)))


def softmax_xent(logits: Tensor, targets: ArrayLike) -> Tensor:
    return SoftmaxXent.apply(logits, np.asarray(targets, dtype=np.float64))


def mse(prediction: Tensor, targets: ArrayLike) -> Tensor:
    """Per-row mean squared error."""
    prediction = as_tensor(prediction)
    gap = sub(prediction, Tensor(np.asarray(targets, dtype=np.float64)))
    return scale(reduce_sum(hadamard(gap, gap), axis=-1), 1.0 / prediction.shape[-1])


def grad_check(
        f: Callable[..., Tensor], point: Union[Tensor, Sequence[Tensor]], h: float = 1e-5,
    ) -> float:
    """
    Largest relative disagreement between the reverse-mode gradient and
    central finite differences over every coordinate of ``point``.

    The relative error of a coordinate is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"Step h={h} is outside [1e-7, 1e-3].")
    points = [point] if isinstance(point, Tensor) else list(point)
    bases = [np.array(p.data, dtype=np.float64) for p in points]

    leaves = [Tensor(b.copy(), requires_grad=True) for b in bases]
    out = f(*leaves)
    if out.data.size != 1:
        raise ShapeMismatch(f"grad_check needs a scalar function, got shape {out.shape}.")
    if not np.isfinite(out.data).all():
        raise NonFiniteValue(f"f evaluates to {out.data} at the check point.")
    out.backward()

    def evaluate(arrays: List[np.ndarray]) -> float:
        value = f(*[Tensor(a) for a in arrays]).item()
        if not np.isfinite(value):
            raise NonFiniteValue(f"f evaluates to {value} near the check point.")
        return value

    worst = 0.0
    for k, base in enumerate(bases):
        analytic = leaves[k].grad if leaves[k].grad is not None else np.zeros_like(base)
        for index in np.ndindex(base.shape):
            shifted = [b.copy() for b in bases]
            shifted[k][index] = base[index] + h
            upper = evaluate(shifted)
            shifted[k][index] = base[index] - h
            lower = evaluate(shifted)
            numeric = (upper - lower) / (2.0 * h)
            a = float(analytic[index])
            error = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, error)
    return worst
