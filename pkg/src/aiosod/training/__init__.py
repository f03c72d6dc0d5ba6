from aiosod.training.checkpoint import Checkpoint, CheckpointError, checkpoint_load, checkpoint_save, restore
from aiosod.training.loss import bce_loss
from aiosod.training.schedule import lr_schedule
from aiosod.training.trainer import NonFiniteLoss, TrainState, init_state, overfit, train, train_step

__all__ = ["Checkpoint", "CheckpointError", "NonFiniteLoss", "TrainState", "bce_loss", "checkpoint_load",
           "checkpoint_save", "init_state", "lr_schedule", "overfit", "restore", "train", "train_step"]
