"""Dense predictor, stacked L2 loss, Adam and training."""

from .adam import NonFiniteGradient, OptimState, adam_step
from .augment import apply_augmentation, augment
from .losses import (DenseOutputs, LossBreakdown, StackOutput, backward, forward, forward_batch, loss,
                     loss_and_grad, loss_masked)
from .predictor import Architecture, Predictor, prepare_input
from .training import (TrainConfig, TrainingError, TrainResult, gradient_check, load_model, save_model,
                       train, write_log)

__all__ = [
    "Architecture", "DenseOutputs", "LossBreakdown", "NonFiniteGradient", "OptimState", "Predictor",
    "StackOutput", "TrainConfig", "TrainResult", "TrainingError", "adam_step", "apply_augmentation",
    "augment", "backward", "forward", "forward_batch", "gradient_check", "load_model", "loss",
    "loss_and_grad", "loss_masked", "prepare_input", "save_model", "train", "write_log",
]
