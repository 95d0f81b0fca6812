"""Training and inference of the recurrent precoding networks.

A training step runs the network on every analog pattern of the current
snapshot, keeps the pattern whose estimated-channel SE is best, and applies
one Adam update on that pattern's log loss. Hidden state is carried from
snapshot to snapshot inside an episode (detached, i.e. one-step truncated
backpropagation) and reset at the start of each episode.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import bf_core
from ..codebook import argmax_first
from ..rng import stream
from . import autodiff as ad
from .adam import TrainState, adam_step
from .network import CFC, NetworkSpec, as_vars, init_params, network_forward, pipeline_graph, zero_state

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Episode:
    """Per-snapshot, per-pattern stacked channels, shape ``(T, n_p, N, M)``."""

    H_true: np.ndarray
    H_hat: np.ndarray

    def __post_init__(self):
        if self.H_true.shape != self.H_hat.shape or self.H_true.ndim != 4:
            raise ValueError("episode channels must share shape (T, n_p, N, M)")

    @property
    def T(self):
        return self.H_true.shape[0]

    @property
    def n_p(self):
        return self.H_true.shape[1]


@dataclass
class TrainConfig:
    n_steps: int = 200
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    loss_eps: float = 1e-6
    hidden: tuple[int, ...] = (64, 64, 64)
    t_step: float = 1.0
    stateful: bool = True
    cell: str = CFC
    seed: int = 0


@dataclass
class TrainMetrics:
    loss: list[float] = field(default_factory=list)
    se: list[float] = field(default_factory=list)
    best_p: list[int] = field(default_factory=list)
    steps_per_epoch: int = 1

    def epoch_means(self, values):
        n = self.steps_per_epoch
        return [float(np.mean(values[i:i + n])) for i in range(0, len(values), n)]

    def p_histogram(self, n_p):
        return np.bincount(np.asarray(self.best_p, dtype=int) - 1, minlength=n_p).tolist()

    def to_dict(self, n_p=None):
        out = {"loss": self.loss, "se": self.se, "best_p": self.best_p,
               "epoch_loss": self.epoch_means(self.loss), "epoch_se": self.epoch_means(self.se)}
        if n_p:
            out["best_p_histogram"] = self.p_histogram(n_p)
        return out


@dataclass
class Model:
    spec: NetworkSpec
    params: dict
    opt: TrainState
    rng: np.random.Generator | None = None


def new_model(N, M, K, train_cfg: TrainConfig, rng=None) -> Model:
    spec = NetworkSpec.for_system(N, M, K, hidden=train_cfg.hidden, cell=train_cfg.cell)
    rng = stream(train_cfg.seed, "init", train_cfg.cell) if rng is None else rng
    opt = TrainState(lr=train_cfg.lr, beta1=train_cfg.beta1, beta2=train_cfg.beta2,
                     eps_adam=train_cfg.eps_adam, loss_eps=train_cfg.loss_eps)
    return Model(spec, init_params(spec, rng), opt, rng)


def _batch_se(H_norm, X, P):
    """SE of every pattern in a batch, noise-normalized domain."""
    V = bf_core.manifold_project(H_norm, X)
    power = np.sum(np.abs(V) ** 2, axis=(-2, -1), keepdims=True)
    W = np.sqrt(P / power) * V
    return bf_core.spectral_efficiency(H_norm, W, 1.0)


def select_step(model: Model, H_norm, state, t, P):
    """Forward all patterns; return ``(p_index0, se_per_pattern, new_states)``."""
    X, new_state = network_forward(model.spec, model.params, H_norm, state, t)
    se = _batch_se(H_norm, X, P)
    return argmax_first(list(se)), se, new_state


def loss_and_grads(model: Model, H_norm, state, t, P, eps):
    """Loss of a single-pattern batch and its parameter gradients."""
    pv = as_vars(model.params, record=True)
    loss, rates, _, new_state = pipeline_graph(model.spec, pv, H_norm[None], state, t, P, eps)
    total = ad.total(loss)
    ad.backward(total)
    grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.value)) for k, v in pv.items()}
    return float(total.value), grads, rates.value[0], [s.value for s in new_state]


def train(episodes: list[Episode], sigma2: float, P: float, K: int, train_cfg: TrainConfig,
          model: Model | None = None) -> tuple[Model, TrainMetrics]:
    """Train on ``episodes`` for ``train_cfg.n_steps`` Adam steps, starting
    from ``model`` or from a fresh initialization."""
    if not episodes:
        raise ValueError("need at least one episode")
    N, M = episodes[0].H_hat.shape[-2:]
    if model is None:
        model = new_model(N, M, K, train_cfg)
    sigma = math.sqrt(sigma2)
    T = episodes[0].T
    metrics = TrainMetrics(steps_per_epoch=T * len(episodes))
    state = zero_state(model.spec)
    for step in range(train_cfg.n_steps):
        ep = episodes[(step // T) % len(episodes)]
        snap = step % T
        if snap == 0 or not train_cfg.stateful:
            state = zero_state(model.spec)
        H_norm = ep.H_hat[snap] / sigma
        if ep.n_p > 1:
            p0, se, _ = select_step(model, H_norm, state, train_cfg.t_step, P)
        else:
            p0, se = 0, None
        loss, grads, rates, new_state = loss_and_grads(model, H_norm[p0], state, train_cfg.t_step, P,
                                                      model.opt.loss_eps)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"loss became {loss} at step {step} (pattern {p0 + 1}); "
                                   f"recent losses {metrics.loss[-5:]}")
        model.params, model.opt = adam_step(model.params, grads, model.opt)
        metrics.loss.append(loss)
        metrics.se.append(float(np.sum(rates)) if se is None else float(se[p0]))
        metrics.best_p.append(p0 + 1)
        state = new_state
        if step % 50 == 0:
            log.debug("step %d loss %.4f se %.3f p %d", step, loss, metrics.se[-1], p0 + 1)
    return model, metrics


@dataclass
class Inference:
    p_star: int
    X: np.ndarray
    W: np.ndarray
    se_est: float
    se_true: float
    rates_true: np.ndarray


def run_episode(model: Model, episode: Episode, sigma2: float, P: float, t_step: float = 1.0,
                stateful: bool = True) -> Inference:
    """Run the network through an episode and precode the final snapshot."""
    sigma = math.sqrt(sigma2)
    state = zero_state(model.spec)
    for snap in range(episode.T):
        if not stateful:
            state = zero_state(model.spec)
        H_norm = episode.H_hat[snap] / sigma
        X, new_state = network_forward(model.spec, model.params, H_norm, state, t_step)
        se = _batch_se(H_norm, X, P)
        p0 = argmax_first(list(se))
        state = [s[p0:p0 + 1] for s in new_state]
    H_hat, H_true = episode.H_hat[-1, p0], episode.H_true[-1, p0]
    pm = bf_core.apply_power_constraint(H_hat, X[p0], P)
    rates_true = bf_core.per_user_rates(H_true, pm.W, sigma2)
    return Inference(p_star=p0 + 1, X=X[p0], W=pm.W,
                     se_est=float(bf_core.spectral_efficiency(H_hat, pm.W, sigma2)),
                     se_true=float(np.sum(rates_true)), rates_true=rates_true)
