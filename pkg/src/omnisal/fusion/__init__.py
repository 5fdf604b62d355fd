from .loss import LossWeights, batch_loss, loss, map_loss
from .network import (CHANNELS, ConvLayer, DivergenceError, FusionNetwork, backward, forward,
                      init_weights, predict, update_running_stats)
from .optim import AdamState, adam_step
from .stacking import fuse_average, fuse_max, stack_all_faces, stack_corresponding_faces
from .training import TrainConfig, TrainResult, train_fusion, train_step
from .weights import WeightFormatError, load, loads, save, dumps

__all__ = [
    "AdamState", "CHANNELS", "ConvLayer", "DivergenceError", "FusionNetwork", "LossWeights",
    "TrainConfig", "TrainResult", "WeightFormatError", "adam_step", "backward", "batch_loss",
    "dumps", "forward", "fuse_average", "fuse_max", "init_weights", "load", "loads", "loss",
    "map_loss", "predict", "save", "stack_all_faces", "stack_corresponding_faces", "train_fusion",
    "train_step", "update_running_stats",
]
