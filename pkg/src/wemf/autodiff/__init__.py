from . import nn, ops
from .checkpoint import load_params, save_params
from .fourier import ComplexTensor, cmul, dft2, idft2
from .gradcheck import grad_check
from .nn import cross_entropy, depthwise_conv2d, group_norm, layer_norm
from .tensor import NonFiniteError, Tensor, backward

__all__ = [
    "ComplexTensor", "NonFiniteError", "Tensor", "backward", "cmul", "cross_entropy",
    "depthwise_conv2d", "dft2", "grad_check", "group_norm", "idft2", "layer_norm",
    "load_params", "nn", "ops", "save_params",
]
