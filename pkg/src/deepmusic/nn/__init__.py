from .layers import (
    batchnorm_forward,
    conv2d_forward,
    dropout,
    fc_forward,
    mse_loss,
    relu,
    softmax,
)
from .network import LayerSpec, Network, build_deepmusic_network, build_network
from .train import TrainConfig, TrainingLog, sgd_momentum_step, train_network
from .checkpoint import InputStats, load_checkpoint, save_checkpoint

__all__ = [
    "batchnorm_forward",
    "conv2d_forward",
    "dropout",
    "fc_forward",
    "mse_loss",
    "relu",
    "softmax",
    "LayerSpec",
    "Network",
    "build_deepmusic_network",
    "build_network",
    "TrainConfig",
    "TrainingLog",
    "sgd_momentum_step",
    "train_network",
    "InputStats",
    "load_checkpoint",
    "save_checkpoint",
]
