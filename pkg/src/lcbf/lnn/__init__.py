"""Closed-form liquid network precoder and its training stack."""
from .adam import TrainState, adam_step
from .network import CFC, GRU, NetworkSpec, featurize, init_params, network_forward
from .train import Episode, TrainConfig, TrainingDiverged, run_episode, train

__all__ = ["CFC", "GRU", "Episode", "NetworkSpec", "TrainConfig", "TrainState", "TrainingDiverged",
           "adam_step", "featurize", "init_params", "network_forward", "run_episode", "train"]
