from .layers import LayerSpec, conv, maxpool, dense, relu, dropout, concat_skip, softmax_output
from .model import (Model, initialize, forward, predict, loss_and_param_gradients,
                    class_score_input_gradient, softmax)
from .optim import OptimizerState, adam, sgd, optimizer_step
from .checkpoint import save_model, load_model

__all__ = [
    "LayerSpec", "conv", "maxpool", "dense", "relu", "dropout", "concat_skip",
    "softmax_output", "Model", "initialize", "forward", "predict",
    "loss_and_param_gradients", "class_score_input_gradient", "softmax",
    "OptimizerState", "adam", "sgd", "optimizer_step", "save_model", "load_model",
]
