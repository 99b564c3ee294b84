"""From-scratch multilayer perceptrons."""

from .model import (MlpModel, backprop, build_autoencoder, build_mlp, build_regression_net, encode,
                    forward, he_init, loss, mlp_from_dict, mlp_to_dict, predict)
from .optim import Adam, AdaGrad, Momentum, RMSProp, Sgd, make_optimizer
from .training import (AUTOENCODER_CONFIG, TrainConfig, TrainHistory, fine_tune, fit, train,
                       train_autoencoder)

__all__ = [
    "MlpModel", "backprop", "build_autoencoder", "build_mlp", "build_regression_net", "encode", "forward",
    "he_init", "loss", "mlp_from_dict", "mlp_to_dict", "predict", "Adam", "AdaGrad", "Momentum", "RMSProp",
    "Sgd", "make_optimizer", "AUTOENCODER_CONFIG", "TrainConfig", "TrainHistory", "fine_tune", "fit", "train",
    "train_autoencoder",
]
