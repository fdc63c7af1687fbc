"""Dense float64 tensor engine with reverse-mode autodiff and the layers the
GAN/VAE presets need."""
from .functional import (activation, batchnorm, binary_cross_entropy, conv2d, cross_entropy,
                         deconv2d, dropout, log_softmax, lrelu, matmul, mse_sum, relu, sigmoid,
                         softmax, tanh)
from .nn import LayerSpec, Network, NetworkSpec, build_network
from .optim import SGD, Adam, make_optimizer, sgd_step
from .rng import Rng, randn
from .tensor import Tensor, as_tensor, backward, concat, no_grad

__all__ = [
    "Tensor", "as_tensor", "backward", "concat", "no_grad", "Rng", "randn",
    "matmul", "conv2d", "deconv2d", "batchnorm", "activation", "relu", "lrelu", "sigmoid",
    "tanh", "dropout", "log_softmax", "softmax", "cross_entropy", "binary_cross_entropy",
    "mse_sum", "LayerSpec", "NetworkSpec", "Network", "build_network", "sgd_step", "SGD",
    "Adam", "make_optimizer",
]
