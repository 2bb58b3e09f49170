"""Small dense tensor type with reverse-mode automatic differentiation.

Every value is a float64 numpy array. Operations record a closure that maps
the output gradient onto gradients for their parents; ``Tensor.backward``
sweeps the recorded graph in reverse topological order and accumulates
gradients into leaves that require them.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

_Backward = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "parents", "backward_fn", "op")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward_fn: _Backward | None = None,
                 op: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.parents: tuple[Tensor, ...] = tuple(parents)
        self.backward_fn = backward_fn
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f", op={self.op}" if self.op else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), scale(self, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        """Populate ``.grad`` on every reachable leaf that requires it."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.backward_fn is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _result(data, parents: Iterable[Tensor], backward_fn: _Backward, op: str) -> Tensor:
    parents = tuple(parents)
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, parents=parents if needs else (),
                  backward_fn=backward_fn if needs else None, op=op)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}") from None


# ---------------------------------------------------------------- arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), back, "add")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), back, "mul")


def scale(a, factor: float) -> Tensor:
    a = as_tensor(a)
    return _result(a.data * factor, (a,), lambda g: (g * factor,), "scale")


def matmul(a, b) -> Tensor:
    """Matrix product with numpy semantics (batched over leading axes)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ValueError(f"matmul: shape mismatch {a.shape} vs {b.shape}")
    out = np.matmul(a.data, b.data)

    def back(g):
        if a.ndim >= 2 and b.ndim == 2:
            # weight-style right operand: fold leading axes instead of summing per-batch products
            ga = np.matmul(g, b.data.T)
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
        a2 = a.data[None, :] if a.ndim == 1 else a.data
        b2 = b.data[:, None] if b.ndim == 1 else b.data
        g2 = g
        if a.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        if b.ndim == 1:
            g2 = np.expand_dims(g2, -1)
        ga = np.matmul(g2, np.swapaxes(b2, -1, -2))
        gb = np.matmul(np.swapaxes(a2, -1, -2), g2)
        if a.ndim == 1:
            ga = ga[..., 0, :]
        if b.ndim == 1:
            gb = gb[..., 0]
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(out, (a, b), back, "matmul")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def reciprocal(a) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / a.data
    return _result(out, (a,), lambda g: (-g * out * out,), "reciprocal")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def silu(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.data)
    return _result(a.data * s, (a,), lambda g: (g * (s + a.data * s * (1.0 - s)),), "silu")


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    return _result(out, (a,), lambda g: (g * _sigmoid(a.data),), "softplus")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


# ------------------------------------------------------------------- shaping

def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ValueError(f"concat: shape mismatch {[t.shape for t in ts]} on axis {axis}") from None
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def back(g):
        return np.split(g, sizes, axis=axis)

    return _result(out, ts, back, "concat")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a) -> Tensor:
    """Swap the last two axes."""
    return swapaxes(a, -1, -2)


def swapaxes(a, axis1: int, axis2: int) -> Tensor:
    a = as_tensor(a)
    return _result(np.swapaxes(a.data, axis1, axis2), (a,), lambda g: (np.swapaxes(g, axis1, axis2),), "swapaxes")


def take(a, index, axis: int = 0) -> Tensor:
    """Gather slices of ``a`` along ``axis``; repeated indices accumulate on backward."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    out = np.take(a.data, index, axis=axis)

    def back(g):
        if axis == 0 and index.ndim == 1 and a.ndim == 2:
            width = a.shape[1]
            flat = (index[:, None] * width + np.arange(width)).ravel()
            return (np.bincount(flat, weights=g.ravel(), minlength=a.data.size).reshape(a.shape),)
        full = np.zeros_like(a.data)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, index, np.moveaxis(g, axis, 0) if index.ndim else g)
        return (full,)

    return _result(out, (a,), back, "take")


def segment_mean(values, segment_ids, n_segments: int) -> Tensor:
    """Mean of the rows of ``values`` sharing a segment id; empty segments are zero."""
    values = as_tensor(values)
    ids = np.asarray(segment_ids, dtype=np.int64)
    if values.ndim != 2 or ids.shape != (values.shape[0],):
        raise ValueError(f"segment_mean: shape mismatch {values.shape} vs ids {ids.shape}")
    counts = np.bincount(ids, minlength=n_segments).astype(np.float64)
    inv = np.divide(1.0, counts, out=np.zeros_like(counts), where=counts > 0)
    width = values.shape[1]
    flat = (ids[:, None] * width + np.arange(width)).ravel()
    sums = np.bincount(flat, weights=values.data.ravel(), minlength=n_segments * width)
    out = sums.reshape(n_segments, width) * inv[:, None]

    def back(g):
        return ((g * inv[:, None])[ids],)

    return _result(out, (values,), back, "segment_mean")


# ---------------------------------------------------------------- reductions

def total(a) -> Tensor:
    a = as_tensor(a)
    return _result(a.data.sum(), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),), "sum")


def mean_over_axis(a, axis: int) -> Tensor:
    a = as_tensor(a)
    n = a.shape[axis]
    return _result(a.data.mean(axis=axis), (a,),
                   lambda g: (np.repeat(np.expand_dims(g, axis), n, axis=axis) / n,), "mean")


def maxpool_over_axis(a, axis: int) -> Tensor:
    """Max over ``axis``; ties route the gradient to the first maximal entry."""
    a = as_tensor(a)
    idx = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    out = np.take_along_axis(a.data, idx, axis=axis).squeeze(axis)

    def back(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, idx, np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _result(out, (a,), back, "maxpool")


def rms_norm(a, eps: float = 1e-6) -> Tensor:
    """Scale each last-axis vector to unit root-mean-square: ``a / sqrt(mean(a^2) + eps)``."""
    a = as_tensor(a)
    r = np.sqrt(np.mean(a.data * a.data, axis=-1, keepdims=True) + eps)
    y = a.data / r

    def back(g):
        return ((g - y * np.mean(g * y, axis=-1, keepdims=True)) / r,)

    return _result(y, (a,), back, "rms_norm")


# -------------------------------------------------------------- sequence ops

def causal_conv1d(x, kernel) -> Tensor:
    """Per-channel causal convolution.

    ``x`` is ``(..., time, channels)`` and ``kernel`` is ``(width, channels)``.
    The input is left-padded with ``width - 1`` zeros so the output has the
    same length and step ``t`` only sees steps ``<= t``.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim < 2 or kernel.ndim != 2 or kernel.shape[1] != x.shape[-1]:
        raise ValueError(f"causal_conv1d: shape mismatch {x.shape} vs {kernel.shape}")
    width, steps = kernel.shape[0], x.shape[-2]
    pad = [(0, 0)] * (x.ndim - 2) + [(width - 1, 0), (0, 0)]
    xp = np.pad(x.data, pad)
    out = np.zeros_like(x.data)
    for j in range(width):
        out += kernel.data[j] * xp[..., j:j + steps, :]

    def back(g):
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(kernel.data)
        for j in range(width):
            gxp[..., j:j + steps, :] += g * kernel.data[j]
            gk[j] = (g * xp[..., j:j + steps, :]).reshape(-1, x.shape[-1]).sum(axis=0)
        return gxp[..., width - 1:, :], gk

    return _result(out, (x, kernel), back, "conv1d")


# ------------------------------------------------------------------- losses

def softmax_cross_entropy(logits, target) -> Tensor:
    """Mean cross-entropy of ``logits`` (``(K,)`` or ``(B, K)``) against class indices."""
    logits = as_tensor(logits)
    z = logits.data if logits.ndim == 2 else logits.data[None, :]
    t = np.atleast_1d(np.asarray(target, dtype=np.int64))
    if t.shape[0] != z.shape[0]:
        raise ValueError(f"softmax_cross_entropy: shape mismatch {logits.shape} vs targets {t.shape}")
    if np.any((t < 0) | (t >= z.shape[1])):
        raise ValueError(f"softmax_cross_entropy: class index out of range [0, {z.shape[1]})")
    shifted = z - z.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(z.shape[0])
    loss = -log_probs[rows, t].mean()

    def back(g):
        probs = np.exp(log_probs)
        probs[rows, t] -= 1.0
        grad = probs * (g / z.shape[0])
        return (grad if logits.ndim == 2 else grad[0],)

    return _result(loss, (logits,), back, "xent")


def dropout(a, rate: float, train: bool, rng: np.random.Generator | int | None = None) -> Tensor:
    a = as_tensor(a)
    if not train or rate == 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _result(a.data * mask, (a,), lambda g: (g * mask,), "dropout")


# ------------------------------------------------------------- verification

def numerical_gradient(fn: Callable[[], Tensor], param: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``fn()`` with respect to ``param``."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = fn().item()
        flat[i] = orig - eps
        down = fn().item()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * eps)
    return grad


def gradcheck(fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between backward() and finite differences.

    The denominator is ``max(1, |g|)`` so tiny gradients are compared
    absolutely.
    """
    for p in params:
        p.zero_grad()
    fn().backward()
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numerical_gradient(fn, p, eps)
        err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
        worst = max(worst, float(err.max(initial=0.0)))
    return worst


# --------------------------------------------------------------- checkpoints

CHECKPOINT_HEADER = "GMCKPT v1"


def save_checkpoint(path, params: dict[str, Tensor]) -> None:
    lines = [CHECKPOINT_HEADER]
    for name, t in params.items():
        lines.append(f"{name} {','.join(str(d) for d in t.shape)}")
        lines.append(" ".join(repr(float(v)) for v in t.data.reshape(-1)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_HEADER:
        raise ValueError(f"{path}: not a {CHECKPOINT_HEADER} checkpoint")
    arrays: dict[str, np.ndarray] = {}
    body = lines[1:]
    for k in range(0, len(body) - 1, 2):
        name, _, shape_csv = body[k].partition(" ")
        shape = tuple(int(s) for s in shape_csv.split(",")) if shape_csv else ()
        values = np.array([float(v) for v in body[k + 1].split()], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise ValueError(f"{path}: parameter {name!r} has {values.size} values for shape {shape}")
        arrays[name] = values.reshape(shape)
    return arrays


def load_into(params: dict[str, Tensor], arrays: dict[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into ``params`` in place, validating names and shapes."""
    for name, t in params.items():
        if name not in arrays:
            raise ValueError(f"checkpoint is missing parameter {name!r}")
        if arrays[name].shape != t.shape:
            raise ValueError(f"parameter {name!r}: checkpoint shape {arrays[name].shape} != model shape {t.shape}")
        t.data[...] = arrays[name]
    extra = sorted(set(arrays) - set(params))
    if extra:
        raise ValueError(f"checkpoint has unknown parameters {extra}")
