"""
Reverse-mode differentiation on a define-by-run tape.

Every op appends a node holding its forward value and a closure mapping the
output adjoint to the adjoints of its inputs. ``backward`` walks the nodes in
reverse insertion order, which is a valid reverse topological order because a
node can only reference nodes recorded before it.

Example
-------
>>> tape = Tape()
>>> w = tape.param(np.array([[1.0, 2.0], [3.0, 4.0]]))
>>> loss = mean(square(w))
>>> backward(loss)[w]
array([[0.5, 1. ],
       [1.5, 2. ]])
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import InputError

__all__ = [
    "Tape",
    "Var",
    "backward",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "relu",
    "square",
    "sum",
    "mean",
    "sqrt",
    "log",
    "take",
    "pairwise_sq_dist",
    "batchnorm",
    "GradCheckReport",
    "grad_check",
    "SQRT_FLOOR",
    "BN_EPS",
]

# Inputs below this floor get the derivative of sqrt/log evaluated at the floor.
SQRT_FLOOR = 1e-12
BN_EPS = 1e-5


@dataclass
class _Node:
    value: np.ndarray
    parents: tuple
    vjp: Callable | None
    is_param: bool = False


@dataclass
class Tape:
    nodes: list = field(default_factory=list)

    def _push(self, value, parents=(), vjp=None, is_param=False) -> "Var":
        value = np.asarray(value, dtype=np.float64)
        self.nodes.append(_Node(value, tuple(parents), vjp, is_param))
        return Var(self, len(self.nodes) - 1, value.shape)

    def param(self, value) -> "Var":
        """Record a leaf whose gradient ``backward`` should report."""
        return self._push(np.array(value, dtype=np.float64), is_param=True)

    def const(self, value) -> "Var":
        return self._push(value)


@dataclass(frozen=True, eq=False)
class Var:
    tape: Tape
    index: int
    shape: tuple

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Var):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __repr__(self):
        return f"Var(index={self.index}, shape={self.shape})"


def _lift(tape, x):
    return x if isinstance(x, Var) else tape.const(x)


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    raise InputError("at least one operand must be a Var")


def backward(loss: Var) -> dict:
    """Gradients of a 1x1 (or scalar) ``loss`` w.r.t. every ``param`` leaf.

    The returned mapping accepts the parameter ``Var`` handles as keys.
    """
    if int(np.prod(loss.shape)) != 1:
        raise InputError(f"loss must be scalar, got shape {loss.shape}")
    tape = loss.tape
    nodes = tape.nodes
    adj = [None] * (loss.index + 1)
    adj[loss.index] = np.ones(loss.shape)
    for i in range(loss.index, -1, -1):
        node = nodes[i]
        g = adj[i]
        if g is None or node.vjp is None:
            continue
        for p, gp in zip(node.parents, node.vjp(g)):
            if gp is None:
                continue
            adj[p] = gp if adj[p] is None else adj[p] + gp
    grads = _VarKeyed()
    for i in range(loss.index + 1):
        if nodes[i].is_param:
            grads[i] = np.zeros_like(nodes[i].value) if adj[i] is None else adj[i]
    return grads


class _VarKeyed(dict):
    """Gradient map keyed by node index; parameter ``Var`` handles work as keys."""

    def __getitem__(self, key):
        if isinstance(key, Var):
            key = key.index
        return super().__getitem__(key)

    def __contains__(self, key):
        if isinstance(key, Var):
            key = key.index
        return super().__contains__(key)


# -- primitive ops -----------------------------------------------------------


def matmul(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise InputError(f"matmul shape mismatch: {av.shape} @ {bv.shape}")
    return tape._push(av @ bv, (a.index, b.index), lambda g: (g @ bv.T, av.T @ g))


def _unbroadcast(g, shape):
    """Sum ``g`` over the axes numpy broadcast to reach ``shape``."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Var:
    """Elementwise sum with numpy broadcasting (e.g. a bias vector over rows)."""
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    sa, sb = a.value.shape, b.value.shape
    return tape._push(
        a.value + b.value,
        (a.index, b.index),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def sub(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    sa, sb = a.value.shape, b.value.shape
    return tape._push(
        a.value - b.value,
        (a.index, b.index),
        lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)),
    )


def mul(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    av, bv = a.value, b.value
    return tape._push(
        av * bv,
        (a.index, b.index),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def scale(a: Var, c: float) -> Var:
    c = float(c)
    return a.tape._push(c * a.value, (a.index,), lambda g: (c * g,))


def relu(a: Var) -> Var:
    """max(x, 0); the subgradient at exactly 0 is taken as 0."""
    mask = a.value > 0
    return a.tape._push(np.where(mask, a.value, 0.0), (a.index,), lambda g: (g * mask,))


def square(a: Var) -> Var:
    x = a.value
    return a.tape._push(x * x, (a.index,), lambda g: (2.0 * x * g,))


def sum(a: Var) -> Var:  # noqa: A001 - mirrors numpy naming
    shape = a.value.shape
    return a.tape._push(
        np.array([[a.value.sum()]]), (a.index,), lambda g: (np.full(shape, g.item()),)
    )


def mean(a: Var) -> Var:
    shape = a.value.shape
    n = a.value.size
    return a.tape._push(
        np.array([[a.value.mean()]]),
        (a.index,),
        lambda g: (np.full(shape, g.item() / n),),
    )


def sqrt(a: Var) -> Var:
    x = np.maximum(a.value, 0.0)
    y = np.sqrt(x)
    deriv = 0.5 / np.sqrt(np.maximum(x, SQRT_FLOOR))
    return a.tape._push(y, (a.index,), lambda g: (g * deriv,))


def log(a: Var) -> Var:
    """Natural log with the input floored at ``SQRT_FLOOR``."""
    x = np.maximum(a.value, SQRT_FLOOR)
    return a.tape._push(np.log(x), (a.index,), lambda g: (g / x,))


def take(a: Var, rows: Sequence[int], cols: Sequence[int]) -> Var:
    """Gather ``a[rows[k], cols[k]]`` into a 1xK row vector."""
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    shape = a.value.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, (rows, cols), g.ravel())
        return (out,)

    return a.tape._push(a.value[rows, cols][None, :], (a.index,), vjp)


def pairwise_sq_dist(a: Var) -> Var:
    """n x d -> n x n matrix of squared Euclidean distances between rows."""
    z = a.value
    diff = z[:, None, :] - z[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)

    def vjp(g):
        s = g + g.T
        return (2.0 * (s.sum(axis=1)[:, None] * z - s @ z),)

    return a.tape._push(sq, (a.index,), vjp)


def batchnorm(x: Var, gamma: Var, beta: Var, eps: float = BN_EPS):
    """Training-mode batch normalization over the rows of ``x``.

    Returns ``(y, batch_mean, batch_var)``; the batch statistics are plain
    arrays so the caller can update running averages off the tape.
    """
    xv = x.value
    n = xv.shape[0]
    mu = xv.mean(axis=0)
    var = xv.var(axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xv - mu) * inv
    gv = gamma.value
    y = xhat * gv + beta.value

    def vjp(g):
        dgamma = (g * xhat).sum(axis=0)
        dbeta = g.sum(axis=0)
        dxhat = g * gv
        dx = (inv / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        return dx, dgamma.reshape(gamma.shape), dbeta.reshape(beta.shape)

    out = x.tape._push(y, (x.index, gamma.index, beta.index), vjp)
    return out, mu, var


# -- finite-difference verification -------------------------------------------


@dataclass
class GradCheckReport:
    """Outcome of ``grad_check``.

    ``max_rel_error[k]`` is the worst per-coordinate relative error for
    parameter ``k``; ``error`` holds a message if any loss evaluation was
    non-finite.
    """

    max_rel_error: list
    tol: float
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(e < self.tol for e in self.max_rel_error)

    @property
    def worst(self) -> float:
        return max(self.max_rel_error, default=0.0)


def _rel_error(a, b, floor=1e-6):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def grad_check(build, params, step=1e-5, tol=1e-4) -> GradCheckReport:
    """Compare tape gradients with central finite differences.

    Parameters
    ----------
    build : callable
        ``build(tape, param_vars) -> loss Var``; must be a pure function of
        the parameter values.
    params : sequence of arrays, or an object with ``trainable()``
    step : float
        Finite-difference half-width.
    tol : float
        Pass threshold on per-coordinate relative error
        ``|g - g_fd| / max(|g|, |g_fd|, floor)`` with
        ``floor = 1e-6 * max(1, |loss|)``, well above the central-difference
        rounding noise of about ``1e-16 * |loss| / step``. The floor keeps
        structurally zero gradients (e.g. a bias feeding BatchNorm) from
        being judged on noise alone.
    """
    if step <= 0:
        raise InputError("step must be positive")
    if hasattr(params, "trainable"):
        params = params.trainable()
    values = [np.array(p, dtype=np.float64) for p in params]

    def evaluate(vals):
        tape = Tape()
        pv = [tape.param(v) for v in vals]
        return build(tape, pv), pv

    loss, pv = evaluate(values)
    if not np.isfinite(loss.value).all():
        return GradCheckReport([], tol, error="non-finite loss at base point")
    grads = backward(loss)
    analytic = [grads[v] for v in pv]
    floor = 1e-6 * max(1.0, abs(loss.value.item()))

    errors = []
    for k, val in enumerate(values):
        numeric = np.zeros_like(val)
        flat = val.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            fp = evaluate(values)[0].value.item()
            flat[idx] = orig - step
            fm = evaluate(values)[0].value.item()
            flat[idx] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                return GradCheckReport(
                    errors, tol, error=f"non-finite loss perturbing param {k}[{idx}]"
                )
            numeric.reshape(-1)[idx] = (fp - fm) / (2.0 * step)
        err = _rel_error(analytic[k], numeric, floor)
        errors.append(float(err.max()) if err.size else 0.0)
    return GradCheckReport(errors, tol)

