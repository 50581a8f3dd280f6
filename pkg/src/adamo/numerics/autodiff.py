"""Dense tensors with tape-based reverse-mode differentiation.

Every differentiable computation goes through :func:`apply_primitive`. When a
:class:`GradTape` is active and any input requires a gradient, the application
is appended to the tape; :func:`backward` then walks the tape in reverse.
Outside a tape, primitives are plain numpy calls with no bookkeeping.

Precision follows the input arrays: float64 ("wide") for gradient checks,
float32 ("standard") for training.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from adamo.errors import DomainError, ShapeError, StateError

WIDE = np.float64
STANDARD = np.float32
IGNORE_INDEX = -100


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.asarray(data, dtype=dtype)
        if requires_grad and not np.issubdtype(arr.dtype, np.floating):
            raise DomainError("only floating-point tensors can require gradients")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{tag})"

    # operator sugar over the primitive set
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


@dataclass
class Node:
    kind: str
    inputs: list[Tensor]
    output: Tensor
    ctx: Any
    attrs: dict


@dataclass
class GradTape:
    """Ordered record of primitive applications; usable once."""

    nodes: list[Node] = field(default_factory=list)
    consumed: bool = False

    def __enter__(self):
        if self.consumed:
            raise StateError("gradient tape already consumed")
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def backward(self, loss: Tensor, leaves: Sequence[Tensor] | None = None) -> None:
        backward(self, loss, leaves)


_ACTIVE: list[GradTape] = []


@dataclass(frozen=True)
class Primitive:
    forward: Callable
    backward: Callable


PRIMITIVES: dict[str, Primitive] = {}


def primitive(kind):
    def register(cls):
        PRIMITIVES[kind] = Primitive(cls.forward, cls.backward)
        return cls
    return register


def apply_primitive(kind: str, inputs: Sequence, **attrs) -> Tensor:
    try:
        prim = PRIMITIVES[kind]
    except KeyError:
        raise DomainError(f"unknown primitive {kind!r}") from None
    ts = [as_tensor(x) for x in inputs]
    out_data, ctx = prim.forward([t.data for t in ts], **attrs)
    tape = _ACTIVE[-1] if _ACTIVE else None
    if tape is not None and any(t.requires_grad for t in ts):
        out = Tensor(out_data, requires_grad=True)
        tape.nodes.append(Node(kind, ts, out, ctx, attrs))
        return out
    return Tensor(out_data)


def _accumulate(grads: dict, t: Tensor, g: np.ndarray) -> None:
    key = id(t)
    if key in grads:
        grads[key] = grads[key] + g
    else:
        grads[key] = g


def backward(tape: GradTape, loss: Tensor, leaves: Sequence[Tensor] | None = None) -> None:
    """Populate ``.grad`` on every gradient-requiring leaf reached from ``loss``.

    Tensors listed in ``leaves`` receive a zero gradient when the loss does
    not depend on them. Gradients add onto any existing ``.grad``.
    """
    if tape.consumed:
        raise StateError("gradient tape already consumed")
    if loss.size != 1:
        raise DomainError(f"backward needs a scalar loss, got shape {loss.shape}")
    produced = {id(n.output) for n in tape.nodes}
    grads = {id(loss): np.ones_like(loss.data)}
    found: dict[int, Tensor] = {}
    if id(loss) not in produced and loss.requires_grad:
        found[id(loss)] = loss
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        needs = [t.requires_grad for t in node.inputs]
        in_grads = PRIMITIVES[node.kind].backward(
            g, node.ctx, [t.data for t in node.inputs], node.output.data, needs, **node.attrs
        )
        for t, gi, need in zip(node.inputs, in_grads, needs):
            if not need or gi is None:
                continue
            _accumulate(grads, t, gi)
            if id(t) not in produced:
                found[id(t)] = t
    for t in leaves or ():
        if t.requires_grad and id(t) not in found:
            found[id(t)] = t
            grads.setdefault(id(t), np.zeros_like(t.data))
    for key, t in found.items():
        g = np.asarray(grads[key], dtype=t.dtype).reshape(t.shape)
        t.grad = g.copy() if t.grad is None else t.grad + g
    tape.nodes.clear()
    tape.consumed = True


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _shape_error(kind, *arrays):
    return ShapeError(f"{kind}: incompatible shapes " + " and ".join(str(a.shape) for a in arrays))


@primitive("matmul")
class _MatMul:
    @staticmethod
    def forward(xs):
        a, b = xs
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise _shape_error("matmul", a, b)
        try:
            return np.matmul(a, b), None
        except ValueError:
            raise _shape_error("matmul", a, b) from None

    @staticmethod
    def backward(g, ctx, xs, out, needs):
        a, b = xs
        ga = gb = None
        if needs[0]:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b, -1, -2)), a.shape)
        if needs[1]:
            if b.ndim == 2:
                gb = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a, -1, -2), g), b.shape)
        return ga, gb


@primitive("add")
class _Add:
    @staticmethod
    def forward(xs):
        a, b = xs
        try:
            return a + b, None
        except ValueError:
            raise _shape_error("add", a, b) from None

    @staticmethod
    def backward(g, ctx, xs, out, needs):
        return tuple(_unbroadcast(g, x.shape) if n else None for x, n in zip(xs, needs))


@primitive("mul")
class _Mul:
    @staticmethod
    def forward(xs):
        a, b = xs
        try:
            return a * b, None
        except ValueError:
            raise _shape_error("mul", a, b) from None

    @staticmethod
    def backward(g, ctx, xs, out, needs):
        a, b = xs
        return (
            _unbroadcast(g * b, a.shape) if needs[0] else None,
            _unbroadcast(g * a, b.shape) if needs[1] else None,
        )


@primitive("scale")
class _Scale:
    @staticmethod
    def forward(xs, factor):
        return xs[0] * factor, None

    @staticmethod
    def backward(g, ctx, xs, out, needs, factor):
        return (g * factor,)


@primitive("sum")
class _Sum:
    @staticmethod
    def forward(xs):
        return np.asarray(xs[0].sum()), None

    @staticmethod
    def backward(g, ctx, xs, out, needs):
        return (np.broadcast_to(g, xs[0].shape),)


@primitive("reshape")
class _Reshape:
    @staticmethod
    def forward(xs, shape):
        try:
            return xs[0].reshape(shape), None
        except ValueError:
            raise ShapeError(f"reshape: cannot view {xs[0].shape} as {shape}") from None

    @staticmethod
    def backward(g, ctx, xs, out, needs, shape):
        return (g.reshape(xs[0].shape),)


@primitive("transpose")
class _Transpose:
    @staticmethod
    def forward(xs, axes):
        if sorted(axes) != list(range(xs[0].ndim)):
            raise ShapeError(f"transpose: axes {axes} invalid for shape {xs[0].shape}")
        return xs[0].transpose(axes), None

    @staticmethod
    def backward(g, ctx, xs, out, needs, axes):
        return (g.transpose(np.argsort(axes)),)


_GELU_C = math.sqrt(2.0 / math.pi)


@primitive("gelu")
class _Gelu:
    # tanh approximation
    @staticmethod
    def forward(xs):
        x = xs[0]
        t = np.tanh(_GELU_C * (x + 0.044715 * x ** 3))
        return 0.5 * x * (1.0 + t), t

    @staticmethod
    def backward(g, t, xs, out, needs):
        x = xs[0]
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * dt),)


@primitive("softmax_lastdim")
class _Softmax:
    @staticmethod
    def forward(xs):
        x = xs[0]
        e = np.exp(x - x.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True), None

    @staticmethod
    def backward(g, ctx, xs, y, needs):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)


@primitive("layer_norm_lastdim")
class _LayerNorm:
    @staticmethod
    def forward(xs, eps=1e-5):
        x = xs[0]
        if len(xs) not in (1, 3):
            raise DomainError("layer_norm_lastdim takes x or (x, gain, bias)")
        if len(xs) == 3 and (xs[1].shape != x.shape[-1:] or xs[2].shape != x.shape[-1:]):
            raise _shape_error("layer_norm_lastdim", *xs)
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
        xhat = xc * rstd
        y = xhat * xs[1] + xs[2] if len(xs) == 3 else xhat
        return y, (xhat, rstd)

    @staticmethod
    def backward(g, ctx, xs, out, needs, eps=1e-5):
        xhat, rstd = ctx
        gxhat = g * xs[1] if len(xs) == 3 else g
        gx = None
        if needs[0]:
            gx = rstd * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                         - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        if len(xs) == 1:
            return (gx,)
        flat = g.reshape(-1, g.shape[-1])
        ggain = (flat * xhat.reshape(flat.shape)).sum(axis=0) if needs[1] else None
        gbias = flat.sum(axis=0) if needs[2] else None
        return gx, ggain, gbias


@primitive("embedding_lookup")
class _Embedding:
    @staticmethod
    def forward(xs):
        table, ids = xs
        if table.ndim != 2:
            raise _shape_error("embedding_lookup", table, ids)
        if not np.issubdtype(ids.dtype, np.integer):
            raise DomainError("embedding_lookup: indices must be integers")
        if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
            raise DomainError(f"embedding_lookup: index out of range for table with {table.shape[0]} rows")
        return table[ids], None

    @staticmethod
    def backward(g, ctx, xs, out, needs):
        table, ids = xs
        gt = np.zeros_like(table)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return gt, None


@primitive("cross_entropy_rows")
class _CrossEntropy:
    """Mean negative log-likelihood over rows whose target is not the ignore marker."""

    @staticmethod
    def forward(xs, ignore_index=IGNORE_INDEX):
        logits, targets = xs
        if logits.ndim != 2 or targets.shape != logits.shape[:1]:
            raise _shape_error("cross_entropy_rows", logits, targets)
        if not np.issubdtype(targets.dtype, np.integer):
            raise DomainError("cross_entropy_rows: targets must be integers")
        valid = targets != ignore_index
        tv = targets[valid]
        if tv.size and (tv.min() < 0 or tv.max() >= logits.shape[1]):
            raise DomainError(f"cross_entropy_rows: target id out of range for {logits.shape[1]} classes")
        shifted = logits - logits.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logp = shifted - logz
        count = max(int(valid.sum()), 1)
        rows = np.nonzero(valid)[0]
        loss = -logp[rows, tv].sum() / count
        return np.asarray(loss, dtype=logits.dtype), (logp, rows, tv, count)

    @staticmethod
    def backward(g, ctx, xs, out, needs, ignore_index=IGNORE_INDEX):
        logp, rows, tv, count = ctx
        p = np.exp(logp)
        grad = np.zeros_like(p)
        grad[rows] = p[rows]
        grad[rows, tv] -= 1.0
        return grad * (g / count), None


def matmul(a, b) -> Tensor:
    return apply_primitive("matmul", [a, b])


def add(a, b) -> Tensor:
    return apply_primitive("add", [a, b])


def mul(a, b) -> Tensor:
    return apply_primitive("mul", [a, b])


def scale(a, factor: float) -> Tensor:
    return apply_primitive("scale", [a], factor=factor)


def sum_all(a) -> Tensor:
    return apply_primitive("sum", [a])


def reshape(a, shape) -> Tensor:
    return apply_primitive("reshape", [a], shape=tuple(shape))


def transpose(a, axes) -> Tensor:
    return apply_primitive("transpose", [a], axes=tuple(axes))


def gelu(a) -> Tensor:
    return apply_primitive("gelu", [a])


def softmax(a) -> Tensor:
    return apply_primitive("softmax_lastdim", [a])


def layer_norm(x, gain=None, bias=None, eps: float = 1e-5) -> Tensor:
    inputs = [x] if gain is None else [x, gain, bias]
    return apply_primitive("layer_norm_lastdim", inputs, eps=eps)


def embedding(table, ids) -> Tensor:
    return apply_primitive("embedding_lookup", [table, np.asarray(ids)])


def cross_entropy(logits, targets, ignore_index: int = IGNORE_INDEX) -> Tensor:
    return apply_primitive("cross_entropy_rows", [logits, np.asarray(targets)], ignore_index=ignore_index)
