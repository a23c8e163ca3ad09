"""Small define-by-run reverse-mode autodiff over float64 numpy arrays.

Only the handful of row-batched operations the policy heads need are
provided. Every forward op returns a :class:`Tensor` that remembers its
parents and a closure mapping the output adjoint to input adjoints.
"""
from __future__ import annotations

from collections import OrderedDict
from typing import Callable, Mapping, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class ContractError(RuntimeError):
    """A caller violated an operation's precondition."""


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "op", "name")

    def __init__(self, data, parents: Sequence["Tensor"] = (), backward_fn: Optional[Callable] = None,
                 op: str = "leaf", name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.op = op
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor({self.op}{label}, shape={self.shape})"

    # arithmetic sugar used when composing losses
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, _as_tensor(-1.0))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, op="const")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(a.data * b.data, (a, b),
                  lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul")


def affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """``x @ W + b`` for ``x`` of shape (n,) or (batch, n)."""
    if x.shape[-1] != W.shape[0] or W.data.ndim != 2 or b.shape != (W.shape[1],):
        raise ShapeError(f"affine shape mismatch: x{x.shape} W{W.shape} b{b.shape}")

    def backward(g):
        x2 = x.data.reshape(-1, x.shape[-1])
        g2 = g.reshape(-1, W.shape[1])
        return (g @ W.data.T, x2.T @ g2, g2.sum(axis=0))

    return Tensor(x.data @ W.data + b.data, (x, W, b), backward, "affine")


def tanh_act(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis with max subtraction."""
    z = np.exp(x.data - x.data.max(axis=-1, keepdims=True))
    y = z / z.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return Tensor(y, (x,), backward, "softmax")


def log_softmax(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - logz
    p = np.exp(y)

    def backward(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return Tensor(y, (x,), backward, "log_softmax")


def columns(x: Tensor, start: int, stop: int) -> Tensor:
    """Slice ``x[..., start:stop]``."""
    def backward(g):
        full = np.zeros_like(x.data)
        full[..., start:stop] = g
        return (full,)

    return Tensor(x.data[..., start:stop], (x,), backward, "columns")


def pick(x: Tensor, index) -> Tensor:
    """Row-wise gather: ``out[i] = x[i, index[i]]`` (or ``x[index]`` for 1-D)."""
    index = np.asarray(index, dtype=np.int64)
    if x.data.ndim == 1:
        def backward1(g):
            full = np.zeros_like(x.data)
            np.add.at(full, index, g)
            return (full,)
        return Tensor(x.data[index], (x,), backward1, "pick")
    rows = np.arange(x.shape[0])

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (rows, index), g)
        return (full,)

    return Tensor(x.data[rows, index], (x,), backward, "pick")


def square(x: Tensor) -> Tensor:
    return Tensor(x.data ** 2, (x,), lambda g: (2.0 * x.data * g,), "square")


def log(x: Tensor) -> Tensor:
    return Tensor(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def total(x: Tensor) -> Tensor:
    return Tensor(x.data.sum(), (x,), lambda g: (np.full_like(x.data, g),), "sum")


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return Tensor(x.data.mean(), (x,), lambda g: (np.full_like(x.data, g / n),), "mean")


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    sizes = np.cumsum([0] + [p.shape[-1] for p in parts])

    def backward(g):
        return tuple(g[..., sizes[i]:sizes[i + 1]] for i in range(len(parts)))

    return Tensor(np.concatenate([p.data for p in parts], axis=-1), parts, backward, "concat")


class Graph:
    """Nodes reachable from a root, in topological order (inputs first)."""

    def __init__(self, root: Tensor):
        order, seen = [], set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node.parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.nodes = order
        self.root = root


def backward(loss: Tensor) -> Graph:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    graph = Graph(loss)
    adjoint = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            if node.op == "leaf":
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if parent.op == "const":
                continue
            key = id(parent)
            adjoint[key] = pg if key not in adjoint else adjoint[key] + pg
    return graph


class ParamStore:
    """Named parameter leaves; shapes are fixed at construction."""

    def __init__(self, params: Optional[Mapping[str, np.ndarray]] = None):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {n: (np.zeros_like(t.data) if t.grad is None else t.grad) for n, t in self._params.items()}

    def values(self) -> dict[str, np.ndarray]:
        return {n: t.data for n, t in self._params.items()}

    def set_values(self, values: Mapping[str, np.ndarray]) -> None:
        for name, value in values.items():
            t = self._params[name]
            value = np.asarray(value, dtype=np.float64)
            if value.shape != t.data.shape:
                raise ShapeError(f"{name}: expected shape {t.data.shape}, got {value.shape}")
            t.data = value.copy()

    def copy(self) -> "ParamStore":
        return ParamStore({n: t.data.copy() for n, t in self._params.items()})

    def assert_finite(self) -> None:
        for name, t in self._params.items():
            if not np.all(np.isfinite(t.data)):
                raise FloatingPointError(f"non-finite values in parameter {name!r}")


def init_linear(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero biases."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_global_norm(grads: Mapping[str, np.ndarray], max_norm: float = 1.0) -> dict[str, np.ndarray]:
    if max_norm <= 0:
        raise ContractError("max_norm must be positive")
    n = global_norm(grads)
    if n > max_norm:
        scale = max_norm / n
        return {k: g * scale for k, g in grads.items()}
    return dict(grads)


class RmsProp:
    """``v <- rho v + (1 - rho) g^2``; ``theta <- theta - lr g / (sqrt(v) + eps)``."""

    def __init__(self, lr: float = 1e-4, decay: float = 0.99, eps: float = 1e-8):
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.accumulators: dict[str, np.ndarray] = {}

    def step(self, params: ParamStore, grads: Mapping[str, np.ndarray]) -> None:
        for name, g in grads.items():
            t = params[name]
            if g.shape != t.data.shape:
                raise ShapeError(f"{name}: gradient {g.shape} vs parameter {t.data.shape}")
            v = self.accumulators.get(name)
            if v is None:
                v = np.zeros_like(t.data)
            v = self.decay * v + (1.0 - self.decay) * g * g
            self.accumulators[name] = v
            t.data = t.data - self.lr * g / (np.sqrt(v) + self.eps)
        params.assert_finite()


def rmsprop_step(params: ParamStore, grads: Mapping[str, np.ndarray], state: RmsProp) -> ParamStore:
    state.step(params, grads)
    return params


def sample_categorical(probs, rng: np.random.Generator) -> int:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise ContractError(f"invalid categorical distribution {p!r}")
    u = rng.random() * p.sum()
    idx = int(np.searchsorted(np.cumsum(p), u, side="right"))
    if idx >= p.size:  # rounding pushed u past the last bin
        idx = int(np.flatnonzero(p)[-1])
    return idx


def numeric_softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)
