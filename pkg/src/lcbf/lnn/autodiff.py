"""A small reverse-mode tape covering exactly the operations the precoding
networks need.

Values are numpy arrays, real or complex. For a complex node the stored
gradient packs the two real partials as ``dL/dRe + 1j * dL/dIm``, so a real
loss ``L`` changes by ``Re(sum(conj(grad) * dz))`` under a perturbation ``dz``.
Batched values carry the batch along axis 0.
"""
from __future__ import annotations

import numpy as np

from ..bf_core import DegeneratePrecoderError

LN2 = np.log(2.0)


class GradientFault(FloatingPointError):
    """Non-finite value met during the backward pass."""


class Var:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False, name=None):
        self.value = np.asarray(value)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}, name={self.name!r})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def param(value, name=None) -> Var:
    return Var(np.array(value, dtype=float), requires_grad=True, name=name)


def const(value) -> Var:
    return Var(value)


def _node(value, parents, backward_fn):
    parents = tuple(parents)
    if not any(p.requires_grad for p in parents):
        return Var(value)
    return Var(value, parents, backward_fn)


def _acc(var: Var, g):
    if not var.requires_grad:
        return
    if var.grad is None:
        var.grad = np.array(g, dtype=np.result_type(g, var.value))
    else:
        var.grad = var.grad + g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(loss: Var, seed=1.0) -> None:
    """Propagate ``d loss`` to every reachable node requiring a gradient."""
    order, seen = [], set()
    stack = [(loss, False)]
    while stack:
        v, done = stack.pop()
        if done:
            order.append(v)
            continue
        if id(v) in seen or not v.requires_grad:
            continue
        seen.add(id(v))
        stack.append((v, True))
        stack.extend((p, False) for p in v.parents)
    for v in order:
        v.grad = None
    loss.grad = np.full(loss.value.shape, seed, dtype=float)
    for v in reversed(order):
        if v.grad is None:
            continue
        if not np.all(np.isfinite(v.grad)):
            raise GradientFault(f"non-finite gradient at {v!r}")
        if v.backward_fn is not None:
            v.backward_fn(v.grad)


# elementwise ---------------------------------------------------------------

def add(a: Var, b: Var) -> Var:
    def bw(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, _unbroadcast(g, b.shape))
    return _node(a.value + b.value, (a, b), bw)


def sub(a: Var, b: Var) -> Var:
    def bw(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, _unbroadcast(-g, b.shape))
    return _node(a.value - b.value, (a, b), bw)


def mul(a: Var, b: Var) -> Var:
    """Elementwise product of real nodes."""
    def bw(g):
        _acc(a, _unbroadcast(g * b.value, a.shape))
        _acc(b, _unbroadcast(g * a.value, b.shape))
    return _node(a.value * b.value, (a, b), bw)


def scale(a: Var, c: float) -> Var:
    return _node(c * a.value, (a,), lambda g: _acc(a, c * g))


def one_minus(a: Var) -> Var:
    return _node(1.0 - a.value, (a,), lambda g: _acc(a, -g))


def tanh(a: Var) -> Var:
    y = np.tanh(a.value)
    return _node(y, (a,), lambda g: _acc(a, g * (1.0 - y * y)))


def sigmoid(a: Var) -> Var:
    y = _sigmoid(a.value)
    return _node(y, (a,), lambda g: _acc(a, g * y * (1.0 - y)))


def softplus(a: Var) -> Var:
    x = a.value
    y = np.logaddexp(0.0, x)
    return _node(y, (a,), lambda g: _acc(a, g * _sigmoid(x)))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def total(a: Var) -> Var:
    return _node(np.sum(a.value), (a,), lambda g: _acc(a, np.broadcast_to(g, a.shape)))


# dense algebra ---------------------------------------------------------------

def affine(x: Var, W: Var, b: Var) -> Var:
    """``x @ W.T + b`` for a batch of row vectors ``x``."""
    def bw(g):
        _acc(x, g @ W.value)
        _acc(W, g.T @ x.value)
        _acc(b, g.sum(axis=0))
    return _node(x.value @ W.value.T + b.value, (x, W, b), bw)


def concat(parts: list[Var]) -> Var:
    sizes = np.cumsum([p.shape[-1] for p in parts])[:-1]

    def bw(g):
        for p, gp in zip(parts, np.split(g, sizes, axis=-1)):
            _acc(p, gp)
    return _node(np.concatenate([p.value for p in parts], axis=-1), parts, bw)


def take_row(a: Var, i: int) -> Var:
    def bw(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        full[i] = g
        _acc(a, full)
    return _node(a.value[i:i + 1], (a,), bw)


# complex pipeline stages -------------------------------------------------------

def to_complex_matrix(r: Var, N: int, K: int) -> Var:
    """Batch of ``2NK`` reals -> ``N x K`` complex (real block, then imaginary)."""
    B, NK = r.shape[0], N * K
    val = r.value[:, :NK].reshape(B, N, K) + 1j * r.value[:, NK:].reshape(B, N, K)

    def bw(g):
        _acc(r, np.concatenate([g.real.reshape(B, NK), g.imag.reshape(B, NK)], axis=1))
    return _node(val, (r,), bw)


def herm_project(H_hat: np.ndarray, X: Var) -> Var:
    """``H_hat^H X`` with a constant channel."""
    Hh = np.conj(np.swapaxes(H_hat, -1, -2))
    return _node(Hh @ X.value, (X,), lambda g: _acc(X, H_hat @ g))


def power_normalize(V: Var, P: float) -> Var:
    """``sqrt(P / ||V||_F^2) V`` per batch element."""
    v = V.value
    power = np.sum(np.abs(v) ** 2, axis=(-2, -1), keepdims=True)
    if np.any(power == 0.0):
        raise DegeneratePrecoderError("H_hat^H X is zero; re-initialize X")
    c = np.sqrt(P / power)

    def bw(g):
        # d c / d power = -c / (2 power);  d power / d conj-packed V = 2 V
        dc = np.sum(np.real(np.conj(g) * v), axis=(-2, -1), keepdims=True)
        _acc(V, c * g + dc * (-c / (2.0 * power)) * 2.0 * v)
    return _node(c * v, (V,), bw)


def _logdet_chol(L):
    return 2.0 * np.sum(np.log(np.real(np.diagonal(L, axis1=-2, axis2=-1))), axis=-1)


def user_rates(H: np.ndarray, W: Var, sigma2: float) -> Var:
    """Per-user rates in bits/s/Hz, shape ``(B, K)``, for a constant stacked channel."""
    Wv = W.value
    K = Wv.shape[-1]
    n_k = H.shape[-2] // K
    T = H @ Wv
    eye = sigma2 * np.eye(n_k)
    rates, grads_T = [], []
    for k in range(K):
        Tk = T[..., k * n_k:(k + 1) * n_k, :]
        mask = np.ones(K)
        mask[k] = 0.0
        Ti = Tk * mask
        S = Tk @ np.conj(np.swapaxes(Tk, -1, -2)) + eye
        Bm = Ti @ np.conj(np.swapaxes(Ti, -1, -2)) + eye
        rates.append((_logdet_chol(np.linalg.cholesky(S)) - _logdet_chol(np.linalg.cholesky(Bm))) / LN2)
        if W.requires_grad:
            # d logdet(T T^H + c I) in packed form is 2 (T T^H + c I)^-1 T
            grads_T.append((2.0 / LN2) * (np.linalg.solve(S, Tk) - np.linalg.solve(Bm, Ti)))

    def bw(g):
        GT = np.concatenate([g[..., k, None, None] * grads_T[k] for k in range(K)], axis=-2)
        _acc(W, np.conj(np.swapaxes(H, -1, -2)) @ GT)
    return _node(np.stack(rates, axis=-1), (W,), bw)


def log_loss(rates: Var, eps: float) -> Var:
    """``-sum_k ln(max(eps, R_k))`` per batch element, shape ``(B,)``."""
    r = rates.value
    clipped = np.maximum(eps, r)
    active = r > eps
    return _node(-np.sum(np.log(clipped), axis=-1), (rates,),
                 lambda g: _acc(rates, -g[..., None] * active / clipped))
