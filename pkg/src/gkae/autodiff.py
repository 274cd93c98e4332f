"""Dense reverse-mode automatic differentiation over 2-D float64 arrays.

Operations executed inside an active :class:`Tape` are recorded in
execution order, which is a topological order of the computation.
:meth:`Tape.backward` replays the records in reverse. Outside a tape the
same functions simply compute values.

Example
-------
>>> W = Tensor(np.ones((2, 3)), requires_grad=True)
>>> x = Tensor(np.ones((3, 1)))
>>> with Tape() as tape:
...     loss = sum_(matmul(W, x))
>>> grads = tape.backward(loss)
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .exceptions import NonFiniteError, NotScalarLoss, ShapeMismatch, ZeroVector

__all__ = [
    "Tensor",
    "Tape",
    "Adam",
    "matmul",
    "linear",
    "spmm",
    "add",
    "sub",
    "hadamard",
    "scale",
    "tanh",
    "leaky_relu",
    "mean_rows",
    "mse",
    "sum_",
    "cosine_similarity",
    "cosine_rows",
    "transpose",
    "slice_rows",
    "concat_rows",
]

_TAPES: list = []


class Tensor:
    """A 2-D float64 array that may take part in a recorded computation."""

    __slots__ = ("value", "grad", "requires_grad", "name")

    def __init__(self, value, requires_grad=False, name=None):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim == 0:
            value = value.reshape(1, 1)
        elif value.ndim == 1:
            value = value.reshape(-1, 1)
        elif value.ndim != 2:
            raise ShapeMismatch(f"tensors are 2-D, got shape {value.shape}")
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"tensor {name or ''} initialized with non-finite values")
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def rows(self):
        return self.value.shape[0]

    @property
    def cols(self):
        return self.value.shape[1]

    def item(self) -> float:
        return float(self.value[0, 0])

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.value)

    def numpy(self) -> np.ndarray:
        return self.value.copy()

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return hadamard(self, other)
        return scale(self, other)

    __rmul__ = __mul__


class Tape:
    """Ordered record of differentiable operations."""

    def __init__(self):
        self.records = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def __len__(self):
        return len(self.records)

    def backward(self, loss: Tensor) -> dict:
        """Propagate d(loss) back to every leaf tensor requiring gradients.

        Leaf gradients are accumulated into ``.grad`` and also returned as a
        mapping from tensor to gradient array.
        """
        if loss.shape != (1, 1):
            raise NotScalarLoss(f"loss must be 1x1, got {loss.shape}")
        grads = {id(loss): np.ones((1, 1))}
        produced = set()
        leaves = {}
        for out, parents, rule in reversed(self.records):
            produced.add(id(out))
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for parent, pg in zip(parents, rule(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
                leaves[key] = parent
        result = {}
        for key, tensor in leaves.items():
            if key in produced or key not in grads:
                continue
            g = grads[key]
            tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g
            result[tensor] = g
        return result


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(op, value, parents, rule) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.value = value
    out.grad = None
    out.name = None
    out.requires_grad = False
    if _TAPES and any(p.requires_grad for p in parents):
        out.requires_grad = True
        _TAPES[-1].records.append((out, parents, rule))
    return out


def matmul(A, B) -> Tensor:
    A, B = _as_tensor(A), _as_tensor(B)
    if A.cols != B.rows:
        raise ShapeMismatch(f"matmul {A.shape} @ {B.shape}")
    a, b = A.value, B.value
    return _result("matmul", a @ b, (A, B), lambda g: (g @ b.T, a.T @ g))


def linear(X, W, b=None) -> Tensor:
    """Affine map ``X W^T + b`` for a batch ``X`` (rows are samples)."""
    X, W = _as_tensor(X), _as_tensor(W)
    if X.cols != W.cols:
        raise ShapeMismatch(f"linear input {X.shape} for weight {W.shape}")
    x, w = X.value, W.value
    value = x @ w.T
    if b is None:
        return _result("linear", value, (X, W), lambda g: (g @ w, g.T @ x))
    b = _as_tensor(b)
    if b.shape != (1, W.rows):
        raise ShapeMismatch(f"bias {b.shape} for weight {W.shape}")
    return _result(
        "linear",
        value + b.value,
        (X, W, b),
        lambda g: (g @ w, g.T @ x, g.sum(axis=0, keepdims=True)),
    )


def spmm(S, A) -> Tensor:
    """Product of a constant (possibly sparse) matrix with a tensor."""
    A = _as_tensor(A)
    if S.shape[1] != A.rows:
        raise ShapeMismatch(f"spmm {S.shape} @ {A.shape}")
    ST = S.T
    value = S @ A.value
    if sp.issparse(value):
        value = value.toarray()
    return _result("spmm", np.asarray(value), (A,), lambda g: (np.asarray(ST @ g),))


def _broadcast_rule(shape):
    if shape[0] == 1:
        return lambda g: g.sum(axis=0, keepdims=True)
    return lambda g: g


def _check_same_or_row(A, B, op):
    if A.shape != B.shape and not (B.rows == 1 and B.cols == A.cols):
        raise ShapeMismatch(f"{op} {A.shape} with {B.shape}")


def add(A, B) -> Tensor:
    """Elementwise sum; ``B`` may be a 1 x cols row broadcast over rows."""
    A, B = _as_tensor(A), _as_tensor(B)
    _check_same_or_row(A, B, "add")
    red = _broadcast_rule(B.shape) if B.shape != A.shape else (lambda g: g)
    return _result("add", A.value + B.value, (A, B), lambda g: (g, red(g)))


def sub(A, B) -> Tensor:
    A, B = _as_tensor(A), _as_tensor(B)
    _check_same_or_row(A, B, "sub")
    red = _broadcast_rule(B.shape) if B.shape != A.shape else (lambda g: g)
    return _result("sub", A.value - B.value, (A, B), lambda g: (g, -red(g)))


def hadamard(A, B) -> Tensor:
    A, B = _as_tensor(A), _as_tensor(B)
    if A.shape != B.shape:
        raise ShapeMismatch(f"hadamard {A.shape} with {B.shape}")
    a, b = A.value, B.value
    return _result("hadamard", a * b, (A, B), lambda g: (g * b, g * a))


def scale(A, c: float) -> Tensor:
    A = _as_tensor(A)
    c = float(c)
    return _result("scale", A.value * c, (A,), lambda g: (g * c,))


def tanh(A) -> Tensor:
    A = _as_tensor(A)
    y = np.tanh(A.value)
    return _result("tanh", y, (A,), lambda g: (g * (1.0 - y * y),))


def leaky_relu(A, slope: float = 0.01) -> Tensor:
    A = _as_tensor(A)
    d = np.where(A.value > 0, 1.0, slope)
    return _result("leaky_relu", A.value * d, (A,), lambda g: (g * d,))


def mean_rows(A) -> Tensor:
    """Column-wise mean over rows, giving a 1 x cols tensor."""
    A = _as_tensor(A)
    n = A.rows
    return _result(
        "mean_rows",
        A.value.mean(axis=0, keepdims=True),
        (A,),
        lambda g: (np.broadcast_to(g / n, (n, g.shape[1])),),
    )


def mse(A, B) -> Tensor:
    """Mean over all elements of the squared difference."""
    A, B = _as_tensor(A), _as_tensor(B)
    if A.shape != B.shape:
        raise ShapeMismatch(f"mse {A.shape} with {B.shape}")
    d = A.value - B.value
    k = 2.0 / d.size
    return _result(
        "mse",
        np.array([[np.mean(d * d)]]),
        (A, B),
        lambda g: (g[0, 0] * k * d, -g[0, 0] * k * d),
    )


def sum_(A) -> Tensor:
    A = _as_tensor(A)
    shape = A.shape
    return _result(
        "sum", np.array([[A.value.sum()]]), (A,), lambda g: (np.full(shape, g[0, 0]),)
    )


def cosine_rows(A, B) -> Tensor:
    """Row-wise cosine similarity, giving a rows x 1 tensor."""
    A, B = _as_tensor(A), _as_tensor(B)
    if A.shape != B.shape:
        raise ShapeMismatch(f"cosine {A.shape} with {B.shape}")
    a, b = A.value, B.value
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    if np.any(na == 0) or np.any(nb == 0):
        raise ZeroVector("cosine similarity of a zero vector")
    dot = np.sum(a * b, axis=1, keepdims=True)
    cos = dot / (na * nb)

    def rule(g):
        ga = g * (b / (na * nb) - cos * a / (na * na))
        gb = g * (a / (na * nb) - cos * b / (nb * nb))
        return ga, gb

    return _result("cosine", cos, (A, B), rule)


def cosine_similarity(a, b) -> Tensor:
    """Cosine similarity of two vectors of equal length, as a 1x1 tensor."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.cols != 1:
        a = transpose(a) if a.rows == 1 else a
    if b.cols != 1:
        b = transpose(b) if b.rows == 1 else b
    return cosine_rows(transpose(a), transpose(b))


def transpose(A) -> Tensor:
    A = _as_tensor(A)
    return _result("transpose", A.value.T.copy(), (A,), lambda g: (g.T,))


def slice_rows(A, start: int, stop: int) -> Tensor:
    A = _as_tensor(A)
    shape = A.shape

    def rule(g):
        full = np.zeros(shape)
        full[start:stop] = g
        return (full,)

    return _result("slice_rows", A.value[start:stop].copy(), (A,), rule)


def concat_rows(tensors) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    bounds = np.cumsum([0] + [t.rows for t in tensors])
    value = np.concatenate([t.value for t in tensors], axis=0)
    return _result(
        "concat_rows",
        value,
        tuple(tensors),
        lambda g: tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(tensors))),
    )


class Adam:
    """Adam with bias correction.

    ``step`` reads gradients from the given mapping, or from each
    parameter's ``.grad`` when no mapping is passed. Missing gradients
    count as zero.
    """

    def __init__(self, params, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, grads=None):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            g = p.grad if grads is None else grads.get(p)
            if g is None:
                g = np.zeros_like(p.value)
            if g.shape != p.value.shape:
                raise ShapeMismatch(f"gradient {g.shape} for parameter {p.value.shape}")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.value = p.value - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
