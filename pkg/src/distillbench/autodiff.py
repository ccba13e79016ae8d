"""Define-by-run reverse-mode autodiff over float64 numpy arrays.

Every op returns a new :class:`Tensor`. When at least one input requires a
gradient, the output remembers its parents and a closure that pushes the
output adjoint back to them; otherwise no graph state is allocated at all.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DomainError, NonFiniteError


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def op(self) -> str:
        return self._op

    @property
    def parents(self) -> tuple[Tensor, ...]:
        return self._parents

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    __add__ = lambda self, other: add(self, other)  # noqa: E731
    __radd__ = lambda self, other: add(other, self)  # noqa: E731
    __sub__ = lambda self, other: sub(self, other)  # noqa: E731
    __rsub__ = lambda self, other: sub(other, self)  # noqa: E731
    __mul__ = lambda self, other: mul(self, other)  # noqa: E731
    __rmul__ = lambda self, other: mul(other, self)  # noqa: E731
    __matmul__ = lambda self, other: matmul(self, other)  # noqa: E731
    __neg__ = lambda self: scale(self, -1.0)  # noqa: E731


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64).reshape(t.shape)
    else:
        t.grad = t.grad + g


def _commit(data: np.ndarray, parents: Sequence[Tensor], op: str,
            backward_fn: Callable[[np.ndarray], tuple]) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor(data)
    out._op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _check_elementwise(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are incompatible "
                             "(only scalar broadcasting is supported)")


def _unbroadcast(g: np.ndarray, target: Tensor) -> np.ndarray:
    if g.shape == target.shape:
        return g
    return np.full(target.shape, g.sum())


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "add")

    def back(g):
        return _unbroadcast(g, a), _unbroadcast(g, b)

    return _commit(a.data + b.data, (a, b), "add", back)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "sub")

    def back(g):
        return _unbroadcast(g, a), _unbroadcast(-g, b)

    return _commit(a.data - b.data, (a, b), "sub", back)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "mul")

    def back(g):
        return _unbroadcast(g * b.data, a), _unbroadcast(g * a.data, b)

    return _commit(a.data * b.data, (a, b), "mul", back)


def scale(a, factor: float) -> Tensor:
    a = as_tensor(a)
    factor = float(factor)

    def back(g):
        return (g * factor,)

    return _commit(a.data * factor, (a,), "scale", back)


def bias_add(x, bias) -> Tensor:
    """Add a length-n bias vector to every row of an [m, n] matrix."""
    x, bias = as_tensor(x), as_tensor(bias)
    if x.data.ndim != 2 or bias.shape != (x.shape[1],):
        raise DimensionError(f"bias_add: cannot add bias of shape {bias.shape} to {x.shape}")

    def back(g):
        return g, g.sum(axis=0)

    return _commit(x.data + bias.data, (x, bias), "bias_add", back)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0.0  # relu'(0) == 0

    def back(g):
        return (g * mask,)

    return _commit(np.where(mask, a.data, 0.0), (a,), "relu", back)


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log: input contains non-positive values")

    def back(g):
        return (g / a.data,)

    return _commit(np.log(a.data), (a,), "log", back)


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)

    def back(g):
        return (g * out,)

    return _commit(out, (a,), "exp", back)


def sum(a) -> Tensor:  # noqa: A001
    a = as_tensor(a)

    def back(g):
        return (np.broadcast_to(g, a.shape),)

    return _commit(np.array(a.data.sum()), (a,), "sum", back)


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.size

    def back(g):
        return (np.broadcast_to(g / n, a.shape),)

    return _commit(np.array(a.data.mean()), (a,), "mean", back)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not chain")

    def back(g):
        return (g @ b.data.T if a.requires_grad else None,
                a.data.T @ g if b.requires_grad else None)

    with np.errstate(over="ignore", invalid="ignore"):
        out = a.data @ b.data
    return _commit(out, (a, b), "matmul", back)


def pick(x, labels) -> Tensor:
    """Entry ``x[i, labels[i]]`` of every row, as a vector."""
    x = as_tensor(x)
    labels = np.asarray(labels, dtype=np.int64)
    if x.data.ndim != 2 or labels.shape != (x.shape[0],):
        raise DimensionError(f"pick: {labels.shape[0] if labels.ndim else 0} labels for matrix {x.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= x.shape[1]):
        raise DomainError(f"pick: labels must lie in [0, {x.shape[1]})")
    rows = np.arange(x.shape[0])

    def back(g):
        out = np.zeros(x.shape)
        out[rows, labels] = g
        return (out,)

    return _commit(x.data[rows, labels], (x,), "pick", back)


def _check_rows(x: Tensor, temperature: float, op: str) -> None:
    if x.data.ndim != 2:
        raise DimensionError(f"{op}: expected a [batch, classes] matrix, got {x.shape}")
    if not temperature > 0.0:
        raise DomainError(f"{op}: temperature must be positive, got {temperature}")


def softmax_rows(x, temperature: float = 1.0) -> Tensor:
    x = as_tensor(x)
    _check_rows(x, temperature, "softmax_rows")
    z = x.data / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def back(g):
        inner = (g * s).sum(axis=1, keepdims=True)
        return (s * (g - inner) / temperature,)

    return _commit(s, (x,), "softmax_rows", back)


def log_softmax_rows(x, temperature: float = 1.0) -> Tensor:
    x = as_tensor(x)
    _check_rows(x, temperature, "log_softmax_rows")
    z = x.data / temperature
    z = z - z.max(axis=1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def back(g):
        s = np.exp(out)
        return ((g - s * g.sum(axis=1, keepdims=True)) / temperature,)

    return _commit(out, (x,), "log_softmax_rows", back)


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` that take part in differentiation, inputs first."""
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
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    if root.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    order = topological_order(root)
    # intermediate adjoints live here; only leaves ever get .grad populated
    adjoint: dict[int, np.ndarray] = {id(root): np.ones(root.shape)}
    for node in reversed(order):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            _accumulate(node, g)
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            adjoint[key] = adjoint[key] + pg if key in adjoint else pg


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None
