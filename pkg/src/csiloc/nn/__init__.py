"""Minimal dense-tensor engine with reverse-mode differentiation.

Covers exactly the layer set the pipeline's networks need (convolution,
transposed convolution, fully connected, batch norm, relu/leaky-relu/tanh,
max pooling) plus the RMSProp optimizer, weight clipping, and a named-tensor
checkpoint container. 32-bit arithmetic is the training default; tests run
the same graphs at 64-bit against finite-difference oracles.
"""

from .tensor import Tensor, no_grad, set_finite_checks
from .layers import LayerSpec, Sequential, build_layer
from .optim import RmsPropState, clip_weights, rmsprop_init, rmsprop_step
from .checkpoint import load_tensors, save_tensors

__all__ = [
    "Tensor",
    "no_grad",
    "set_finite_checks",
    "LayerSpec",
    "Sequential",
    "build_layer",
    "RmsPropState",
    "rmsprop_init",
    "rmsprop_step",
    "clip_weights",
    "save_tensors",
    "load_tensors",
]
