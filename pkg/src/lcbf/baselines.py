"""Non-learned comparison precoders.

``gd`` is a plain best-iterate gradient ascent on the sum rate over the base
matrix X (the iterative-optimizer arm of the comparison); ``mrt`` is the
matched filter. The GRU arm reuses :mod:`lcbf.lnn` with ``cell="gru"``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bf_core
from .bf_core import DegeneratePrecoderError, PrecoderMats
from .lnn import autodiff as ad

MATCHED_FILTER = "matched_filter"
RANDOM = "random"


@dataclass(frozen=True)
class GDConfig:
    n_iters: int = 100
    step_size: float = 0.05
    init: str = MATCHED_FILTER
    max_redraws: int = 5

    def __post_init__(self):
        if self.n_iters < 1:
            raise ValueError("n_iters must be >= 1")
        if self.step_size < 0:
            raise ValueError("step_size must be non-negative")
        if self.init not in (MATCHED_FILTER, RANDOM):
            raise ValueError(f"unknown init {self.init!r}")


def mrt_precoder(H_hat, P, K=None) -> PrecoderMats:
    """Matched filter: each user's column is the sum of its own conjugated rows."""
    N = H_hat.shape[-2]
    K = N if K is None else K
    return bf_core.apply_power_constraint(H_hat, bf_core.user_block_identity(N, K), P)


def _to_real(X):
    B = X.shape[0]
    return np.concatenate([X.real.reshape(B, -1), X.imag.reshape(B, -1)], axis=1)


def _initial_X(H_hat, K, cfg: GDConfig, rng):
    N = H_hat.shape[-2]
    B = H_hat.shape[0]
    if cfg.init == MATCHED_FILTER:
        X = np.broadcast_to(bf_core.user_block_identity(N, K), (B, N, K)).copy()
    else:
        X = _random_X(rng, (B, N, K))
    for _ in range(cfg.max_redraws + 1):
        power = np.sum(np.abs(bf_core.manifold_project(H_hat, X)) ** 2, axis=(-2, -1))
        bad = power == 0.0
        if not bad.any():
            return X
        if rng is None:
            break
        X[bad] = _random_X(rng, X[bad].shape)
    raise DegeneratePrecoderError("could not find a non-degenerate initialization")


def _random_X(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def gd_ascent(H_hat, sigma2, P, K, cfg: GDConfig = GDConfig(), rng=None):
    """Batched ascent over ``H_hat`` of shape ``(B, N, M)``.

    Each iteration takes a normalized-gradient step of length ``step_size``
    on the unit-norm real parametrization of X. Returns ``(X_best, se_best,
    trace)`` where ``trace`` is the ``(n_iters + 1, B)`` SE history.
    """
    H_hat = np.asarray(H_hat)
    N = H_hat.shape[-2]
    Hn = H_hat / np.sqrt(sigma2)
    r = _to_real(_initial_X(Hn, K, cfg, rng))
    r /= np.linalg.norm(r, axis=1, keepdims=True)
    best_r, best_se = r.copy(), np.full(r.shape[0], -np.inf)
    trace = []
    for it in range(cfg.n_iters + 1):
        rv = ad.param(r)
        W = ad.power_normalize(ad.herm_project(Hn, ad.to_complex_matrix(rv, N, K)), P)
        rates = ad.user_rates(Hn, W, 1.0)
        se = rates.value.sum(axis=-1)
        trace.append(se)
        improved = se > best_se
        best_se = np.where(improved, se, best_se)
        best_r[improved] = r[improved]
        if it == cfg.n_iters:
            break
        ad.backward(ad.total(rates))
        g = rv.grad
        norm = np.linalg.norm(g, axis=1, keepdims=True)
        r = r + cfg.step_size * np.divide(g, norm, out=np.zeros_like(g), where=norm > 0)
        r /= np.linalg.norm(r, axis=1, keepdims=True)
    NK = N * K
    X = best_r[:, :NK].reshape(-1, N, K) + 1j * best_r[:, NK:].reshape(-1, N, K)
    return X, best_se, np.array(trace)


def gd_precoder(H_hat, cfg: GDConfig, sigma2, P, K=None, rng=None) -> PrecoderMats:
    N = H_hat.shape[-2]
    K = N if K is None else K
    X, _, _ = gd_ascent(np.asarray(H_hat)[None], sigma2, P, K, cfg, rng)
    return bf_core.apply_power_constraint(H_hat, X[0], P)
