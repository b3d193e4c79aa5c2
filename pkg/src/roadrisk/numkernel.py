"""Dense float64 numeric core: layers with explicit backward passes, loss, Adam, gradient checking.

Every layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients in ``backward``; callers zero them between
steps.  All randomness comes from an explicit ``numpy.random.Generator``
(PCG64), so a seed fixes initialisation and dropout masks bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import NumericError, ShapeMismatch


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def check_finite(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {what}")
    return x


@dataclass
class Param:
    """A trainable array and its gradient buffer; both are views shared with the owning layer."""

    name: str
    value: np.ndarray
    grad: np.ndarray


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_out, fan_in))


class Linear:
    """Y = X W^T + b with W of shape (out, in)."""

    def __init__(self, in_dim: int, out_dim: int, rng: Optional[np.random.Generator] = None,
                 bias: bool = True, name: str = "linear"):
        self.in_dim, self.out_dim, self.name = in_dim, out_dim, name
        self.W = glorot_uniform(rng, out_dim, in_dim) if rng is not None else np.zeros((out_dim, in_dim))
        self.b = np.zeros(out_dim) if bias else None
        self.grad_W = np.zeros_like(self.W)
        self.grad_b = np.zeros_like(self.b) if bias else None
        self._x: Optional[np.ndarray] = None

    def forward(self, X: np.ndarray) -> np.ndarray:
        if X.ndim != 2 or X.shape[1] != self.in_dim:
            raise ShapeMismatch(f"{self.name}: expected (batch, {self.in_dim}) input, got {X.shape}")
        self._x = X
        Y = X @ self.W.T
        if self.b is not None:
            Y = Y + self.b
        return Y

    def backward(self, dY: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise RuntimeError(f"{self.name}: backward called before forward")
        if dY.shape != (self._x.shape[0], self.out_dim):
            raise ShapeMismatch(f"{self.name}: gradient shape {dY.shape} does not match output "
                                f"{(self._x.shape[0], self.out_dim)}")
        self.grad_W += dY.T @ self._x
        if self.b is not None:
            self.grad_b += dY.sum(axis=0)
        return dY @ self.W

    def astype(self, dtype) -> None:
        """Cast parameters and gradient buffers in place (used by high-precision oracles)."""
        self.W, self.grad_W = self.W.astype(dtype), self.grad_W.astype(dtype)
        if self.b is not None:
            self.b, self.grad_b = self.b.astype(dtype), self.grad_b.astype(dtype)

    def linears(self) -> list["Linear"]:
        return [self]

    def params(self) -> list[Param]:
        out = [Param(f"{self.name}.W", self.W, self.grad_W)]
        if self.b is not None:
            out.append(Param(f"{self.name}.b", self.b, self.grad_b))
        return out


def linear_forward(layer: Linear, X: np.ndarray) -> np.ndarray:
    return layer.forward(X)


def linear_backward(layer: Linear, dY: np.ndarray) -> np.ndarray:
    return layer.backward(dY)


def relu_forward(X: np.ndarray) -> np.ndarray:
    return np.maximum(X, 0.0)


def relu_backward(dY: np.ndarray, X: np.ndarray) -> np.ndarray:
    return dY * (X > 0.0)


def dropout_forward(X: np.ndarray, p: float, rng: Optional[np.random.Generator],
                    training: bool) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout.  The returned mask holds the per-unit scale (0 or 1/(1-p))."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return X, np.ones_like(X)
    keep = rng.random(X.shape) >= p
    mask = keep / (1.0 - p)
    return X * mask, mask


def dropout_backward(dY: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dY * mask


class Mlp:
    """Linear -> ReLU -> Linear."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int,
                 rng: Optional[np.random.Generator] = None, name: str = "mlp"):
        self.fc1 = Linear(in_dim, hidden, rng, name=f"{name}.fc1")
        self.fc2 = Linear(hidden, out_dim, rng, name=f"{name}.fc2")
        self._pre: Optional[np.ndarray] = None

    def forward(self, X: np.ndarray) -> np.ndarray:
        self._pre = self.fc1.forward(X)
        return self.fc2.forward(relu_forward(self._pre))

    def backward(self, dY: np.ndarray) -> np.ndarray:
        return self.fc1.backward(relu_backward(self.fc2.backward(dY), self._pre))

    def linears(self) -> list[Linear]:
        return [self.fc1, self.fc2]

    def params(self) -> list[Param]:
        return self.fc1.params() + self.fc2.params()


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, targets: np.ndarray,
                  sample_weight: Optional[np.ndarray] = None) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient with respect to the logits.

    With ``sample_weight`` the mean is weighted: sum(w_i * l_i) / sum(w_i).
    """
    check_finite(logits, "logits")
    targets = np.asarray(targets, dtype=np.int64)
    n, c = logits.shape
    if targets.shape != (n,):
        raise ShapeMismatch(f"targets shape {targets.shape} does not match batch {n}")
    if n == 0:
        raise ShapeMismatch("cross_entropy on an empty batch")
    if targets.min() < 0 or targets.max() >= c:
        raise ShapeMismatch(f"target classes must lie in [0, {c})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    nll = logsum - z[np.arange(n), targets]
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    total = w.sum()
    loss = float((w * nll).sum() / total)
    grad = np.exp(z - logsum[:, None])
    grad[np.arange(n), targets] -= 1.0
    grad *= (w / total)[:, None]
    return loss, grad


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: Sequence[Param], state: AdamState) -> None:
    """One in-place Adam update; L2 weight decay is folded into the gradient before the moments."""
    if not state.m:
        state.m = [np.zeros_like(p.value) for p in params]
        state.v = [np.zeros_like(p.value) for p in params]
    if len(state.m) != len(params):
        raise ShapeMismatch(f"optimizer tracks {len(state.m)} parameters, got {len(params)}")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, m, v in zip(params, state.m, state.v):
        if m.shape != p.value.shape:
            raise ShapeMismatch(f"{p.name}: moment shape {m.shape} != parameter shape {p.value.shape}")
        g = p.grad + state.weight_decay * p.value if state.weight_decay else p.grad
        check_finite(g, f"gradient of {p.name}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.value -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def zero_grads(params: Iterable[Param]) -> None:
    for p in params:
        p.grad[...] = 0.0


def flatten(params: Sequence[Param], attr: str = "value") -> np.ndarray:
    if not params:
        return np.zeros(0)
    return np.concatenate([getattr(p, attr).ravel() for p in params])


def assign_flat(params: Sequence[Param], flat: np.ndarray) -> None:
    need = sum(p.value.size for p in params)
    if flat.size != need:
        raise ShapeMismatch(f"flat vector has {flat.size} entries, parameters need {need}")
    offset = 0
    for p in params:
        size = p.value.size
        p.value[...] = flat[offset:offset + size].reshape(p.value.shape)
        offset += size


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))


def numeric_gradient(f: Callable[[np.ndarray], float], x0: np.ndarray, h: float = 1e-5) -> np.ndarray:
    x = np.array(x0, dtype=np.result_type(x0, np.float64))
    out = np.empty_like(x)
    flat = x.reshape(-1)
    g = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        g[i] = (fp - fm) / (2.0 * h)
    return out


def grad_check(f: Callable[[np.ndarray], float], grad: Callable[[np.ndarray], np.ndarray] | np.ndarray,
               x0: np.ndarray, h: float = 1e-5, f_precise: Optional[Callable[[np.ndarray], float]] = None,
               refine_above: float = 1e-6) -> float:
    """Max relative error between an analytic gradient and central differences.

    ``grad`` is either a callable returning the analytic gradient at ``x0`` or
    that gradient itself.  Central differences carry an absolute rounding
    floor near eps*|f|/h, which swamps gradients below ~1e-7.  When
    ``f_precise`` is given (the same function evaluated in extended
    precision, receiving a ``np.longdouble`` vector), every coordinate whose
    float64 estimate disagrees by more than ``refine_above`` is re-estimated
    with it.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    analytic = np.asarray(grad(x0.copy()) if callable(grad) else grad, dtype=np.float64)
    numeric = numeric_gradient(f, x0, h)
    if analytic.shape != numeric.shape:
        raise ShapeMismatch(f"analytic gradient shape {analytic.shape} != parameter shape {numeric.shape}")
    if numeric.size == 0:
        return 0.0
    err = relative_error(analytic, numeric)
    if f_precise is not None:
        xp = x0.astype(np.longdouble).reshape(-1)
        for i in np.flatnonzero(err.reshape(-1) > refine_above):
            orig = xp[i]
            xp[i] = orig + h
            fp = f_precise(xp)
            xp[i] = orig - h
            fm = f_precise(xp)
            xp[i] = orig
            n_i = float((fp - fm) / (2 * np.longdouble(h)))
            err.reshape(-1)[i] = relative_error(analytic.reshape(-1)[i], n_i)
    return float(err.max())
