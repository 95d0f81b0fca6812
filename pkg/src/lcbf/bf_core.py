"""SINR matrices, spectral efficiency, manifold projection and sum-power
normalization.

Stacked channels are ``N x M`` with ``K`` equal user blocks of ``N // K``
rows. Rate routines accept leading batch dimensions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LN2 = np.log(2.0)


class DegeneratePrecoderError(ValueError):
    """``H^H X`` vanished, so the precoder cannot be power-normalized."""


@dataclass
class PrecoderMats:
    X: np.ndarray
    W: np.ndarray
    P: float


def _herm(A):
    return np.conj(np.swapaxes(A, -1, -2))


def _blocks(H, K):
    N = H.shape[-2]
    if N % K:
        raise ValueError(f"N={N} is not a multiple of K={K}")
    n_k = N // K
    return [H[..., k * n_k:(k + 1) * n_k, :] for k in range(K)]


def interference_plus_noise(H_k, W, k, sigma2):
    """``sum_{j != k} (H_k w_j)(H_k w_j)^H + sigma2 I``."""
    T = H_k @ W
    T = np.delete(T, k, axis=-1)
    return T @ _herm(T) + sigma2 * np.eye(H_k.shape[-2])


def sinr_matrix(H_k, W, k, sigma2):
    """SINR matrix of user ``k`` in its explicit-inverse form."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    t = H_k @ W[..., :, k:k + 1]
    return (t @ _herm(t)) @ np.linalg.inv(interference_plus_noise(H_k, W, k, sigma2))


def _logdet_pd(A):
    L = np.linalg.cholesky(A)
    return 2.0 * np.sum(np.log(np.real(np.diagonal(L, axis1=-2, axis2=-1))), axis=-1)


def per_user_rates(H, W, sigma2, K=None):
    """Per-user rates ``log2 det(I + gamma_k)`` in bits/s/Hz, shape ``(..., K)``.

    Evaluated as ``log2 det(S_k) - log2 det(B_k)`` with ``S_k`` the total
    received covariance and ``B_k`` the interference-plus-noise part, both
    Hermitian positive definite.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    K = W.shape[-1] if K is None else K
    rates = []
    for k, H_k in enumerate(_blocks(H, K)):
        T = H_k @ W
        eye = sigma2 * np.eye(H_k.shape[-2])
        S = T @ _herm(T) + eye
        Ti = np.delete(T, k, axis=-1)
        B = Ti @ _herm(Ti) + eye
        rates.append(np.maximum((_logdet_pd(S) - _logdet_pd(B)) / LN2, 0.0))
    return np.stack(rates, axis=-1)


def spectral_efficiency(H, W, sigma2):
    return np.sum(per_user_rates(H, W, sigma2), axis=-1)


def manifold_project(H_hat, X):
    """``W_raw = H_hat^H X``: restricts the precoder to the row space of ``H_hat``."""
    return _herm(H_hat) @ X


def apply_power_constraint(H_hat, X, P) -> PrecoderMats:
    """Scale ``H_hat^H X`` so that ``Tr(W W^H) = P`` exactly."""
    V = manifold_project(H_hat, X)
    power = float(np.real(np.vdot(V, V)))
    if power == 0.0 or not np.isfinite(power):
        raise DegeneratePrecoderError("H_hat^H X is zero; re-initialize X")
    return PrecoderMats(X=X, W=np.sqrt(P / power) * V, P=P)


def user_block_identity(N, K):
    """``N x K`` selector with ones on each user's own receive rows."""
    X = np.zeros((N, K), dtype=complex)
    n_k = N // K
    for k in range(K):
        X[k * n_k:(k + 1) * n_k, k] = 1.0
    return X
