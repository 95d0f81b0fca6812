"""Recurrent precoding networks: closed-form continuous-time (CfC) cells or
GRU cells, three stacked layers and a linear head producing the base matrix X.

Parameters live in a flat ``dict[str, np.ndarray]`` keyed like
``"l0.f.W"``; insertion order is the canonical order used by checkpoints and
gradient checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

CFC = "cfc"
GRU = "gru"


@dataclass(frozen=True)
class NetworkSpec:
    n_features: int
    n_out: int
    hidden: tuple[int, ...] = (64, 64, 64)
    cell: str = CFC

    def __post_init__(self):
        if self.cell not in (CFC, GRU):
            raise ValueError(f"unknown cell {self.cell!r}")

    @classmethod
    def for_system(cls, N: int, M: int, K: int, hidden=(64, 64, 64), cell=CFC):
        return cls(n_features=2 * N * M, n_out=2 * N * K, hidden=tuple(hidden), cell=cell)


_HEADS = {CFC: ("f", "g", "h"), GRU: ("z", "r", "n")}


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
    params = {}
    n_in = spec.n_features
    for layer, d in enumerate(spec.hidden):
        fan_in = n_in + d
        bound = 1.0 / np.sqrt(fan_in)
        for head in _HEADS[spec.cell]:
            params[f"l{layer}.{head}.W"] = rng.uniform(-bound, bound, (d, fan_in))
            params[f"l{layer}.{head}.b"] = rng.uniform(-bound, bound, d)
        n_in = d
    bound = 1.0 / np.sqrt(n_in)
    params["out.W"] = rng.uniform(-bound, bound, (spec.n_out, n_in))
    params["out.b"] = rng.uniform(-bound, bound, spec.n_out)
    return params


def count_params(params) -> int:
    return int(sum(np.size(v) for v in params.values()))


def zero_state(spec: NetworkSpec, batch: int = 1) -> list[np.ndarray]:
    return [np.zeros((batch, d)) for d in spec.hidden]


def featurize(H_norm: np.ndarray) -> np.ndarray:
    """Flatten ``(..., N, M)`` complex channels to real rows: real parts, then
    imaginary parts, each row-major."""
    H_norm = np.asarray(H_norm)
    lead = H_norm.shape[:-2]
    flat = H_norm.reshape(lead + (-1,))
    return np.concatenate([flat.real, flat.imag], axis=-1)


def cfc_cell(x: ad.Var, i: ad.Var, t: float, p: dict, prefix: str) -> ad.Var:
    """``sigma(-f t) * g + (1 - sigma(-f t)) * h`` on the concatenated ``[i, x]``."""
    z = ad.concat([i, x])
    f = ad.softplus(ad.affine(z, p[prefix + "f.W"], p[prefix + "f.b"]))
    g = ad.tanh(ad.affine(z, p[prefix + "g.W"], p[prefix + "g.b"]))
    h = ad.tanh(ad.affine(z, p[prefix + "h.W"], p[prefix + "h.b"]))
    gate = ad.sigmoid(ad.scale(f, -t))
    return ad.add(ad.mul(gate, g), ad.mul(ad.one_minus(gate), h))


def gru_cell(x: ad.Var, i: ad.Var, t: float, p: dict, prefix: str) -> ad.Var:
    z_in = ad.concat([i, x])
    z = ad.sigmoid(ad.affine(z_in, p[prefix + "z.W"], p[prefix + "z.b"]))
    r = ad.sigmoid(ad.affine(z_in, p[prefix + "r.W"], p[prefix + "r.b"]))
    n = ad.tanh(ad.affine(ad.concat([i, ad.mul(r, x)]), p[prefix + "n.W"], p[prefix + "n.b"]))
    return ad.add(ad.mul(ad.one_minus(z), n), ad.mul(z, x))


_CELLS = {CFC: cfc_cell, GRU: gru_cell}


def as_vars(params: dict, record: bool) -> dict[str, ad.Var]:
    if record:
        return {k: ad.param(v, name=k) for k, v in params.items()}
    return {k: ad.const(v) for k, v in params.items()}


def forward_graph(spec: NetworkSpec, pv: dict[str, ad.Var], features: np.ndarray,
                  state: list[np.ndarray], t: float):
    """Build the network graph. Returns ``(out, new_state)`` where ``out`` is a
    ``(B, n_out)`` node and ``new_state`` are the layer outputs as nodes."""
    if features.ndim != 2 or features.shape[1] != spec.n_features:
        raise ValueError(f"expected features of shape (B, {spec.n_features}), got {features.shape}")
    if len(state) != len(spec.hidden):
        raise ValueError("state must hold one vector per layer")
    cell = _CELLS[spec.cell]
    inp = ad.const(features)
    new_state = []
    for layer, s in enumerate(state):
        s = np.broadcast_to(s, (features.shape[0], spec.hidden[layer]))
        inp = cell(ad.const(s), inp, t, pv, f"l{layer}.")
        new_state.append(inp)
    return ad.affine(inp, pv["out.W"], pv["out.b"]), new_state


def network_forward(spec: NetworkSpec, params: dict, H_norm: np.ndarray, state, t: float = 1.0):
    """Evaluate without recording. ``H_norm`` is ``(N, M)`` or ``(B, N, M)``.

    Returns ``(X, new_state)`` with ``X`` of shape ``(B, N, K)``.
    """
    H_norm = np.asarray(H_norm)
    if H_norm.ndim == 2:
        H_norm = H_norm[None]
    N = H_norm.shape[1]
    K = spec.n_out // (2 * N)
    if 2 * N * K != spec.n_out:
        raise ValueError("channel rows do not match the output head")
    out, new_state = forward_graph(spec, as_vars(params, False), featurize(H_norm), state, t)
    X = ad.to_complex_matrix(out, N, K).value
    return X, [s.value for s in new_state]


def pipeline_graph(spec: NetworkSpec, pv: dict[str, ad.Var], H_norm: np.ndarray, state, t: float,
                   P: float, eps: float):
    """Network -> X -> ``H^H X`` -> power normalization -> rates -> log loss.

    Works in the noise-normalized domain, where the noise power is 1.
    Returns ``(loss, rates, W, new_state)`` as nodes, each batched.
    """
    N = H_norm.shape[-2]
    K = spec.n_out // (2 * N)
    out, new_state = forward_graph(spec, pv, featurize(H_norm), state, t)
    X = ad.to_complex_matrix(out, N, K)
    W = ad.power_normalize(ad.herm_project(H_norm, X), P)
    rates = ad.user_rates(H_norm, W, 1.0)
    return ad.log_loss(rates, eps), rates, W, new_state
