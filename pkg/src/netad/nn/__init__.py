"""Minimal neural-network engine: layers with exact analytic gradients,
losses, and plain SGD. float32 by default; float64 for gradient checks."""

from .layers import (
    Conv1D,
    Dense,
    Dropout,
    Lstm,
    MaxPool1D,
    Relu,
    Sigmoid,
    Tanh,
    set_finite_checks,
)
from .losses import loss_bce, loss_mse, loss_sparse_ce, softmax
from .network import GradientTape, Network, Sgd

__all__ = [
    "Conv1D", "Dense", "Dropout", "Lstm", "MaxPool1D", "Relu", "Sigmoid",
    "Tanh", "set_finite_checks", "loss_bce", "loss_mse", "loss_sparse_ce",
    "softmax", "GradientTape", "Network", "Sgd",
]
