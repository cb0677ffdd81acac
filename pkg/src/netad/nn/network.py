"""Fixed layer-stack network with explicit reverse-mode accumulation.

No general autodiff graph: the detectors only need sequential stacks, and
per-layer backward rules are what the gradient-check suite verifies.
"""

from __future__ import annotations

import numpy as np

from ..errors import CalledBeforeForward
from .layers import Layer

GradientTape = list  # per-parameter gradients, aligned 1:1 with Network.params()


class Network:
    """A sequential stack of layers sharing one forward/backward cache."""

    def __init__(self, layers: list[Layer]):
        self.layers = layers
        self._ran_forward = False
        self.input_grad: np.ndarray | None = None  # set by backward

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend(layer.params)
        return out

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train=train)
        self._ran_forward = True
        return x

    def backward(self, loss_grad: np.ndarray) -> GradientTape:
        """Gradients for every parameter; parameters are not mutated."""
        if not self._ran_forward:
            raise CalledBeforeForward("Network.backward before any forward pass")
        grad = loss_grad
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        self.input_grad = grad  # for stacked networks (e.g. G feeding D)
        tape: GradientTape = []
        for layer in self.layers:
            tape.extend(layer.grads)
        return tape

    def state_tensors(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}.p{i}": p for i, p in enumerate(self.params())}

    def load_state_tensors(self, prefix: str, tensors: dict[str, np.ndarray]) -> None:
        for i, p in enumerate(self.params()):
            loaded = tensors[f"{prefix}.p{i}"]
            if loaded.shape != p.shape:
                raise ValueError(
                    f"tensor {prefix}.p{i} shape {loaded.shape} != expected {p.shape}")
            p[...] = loaded.astype(p.dtype)


class Sgd:
    """theta' = theta - lr * g; optional classical momentum (default off)."""

    def __init__(self, lr: float, momentum: float = 0.0):
        if not (0.0 <= momentum < 1.0):
            raise ValueError(f"momentum must be in [0,1), got {momentum}")
        self.lr = lr
        self.momentum = momentum
        self._velocity: list[np.ndarray] | None = None

    def step(self, network: Network, tape: GradientTape) -> None:
        params = network.params()
        if len(params) != len(tape):
            raise ValueError("gradient tape is not aligned with network parameters")
        if self.momentum == 0.0:
            for p, g in zip(params, tape):
                p -= np.asarray(self.lr * g, dtype=p.dtype)
            return
        if self._velocity is None:
            self._velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, tape, self._velocity):
            v *= self.momentum
            v += np.asarray(g, dtype=p.dtype)
            p -= np.asarray(self.lr * v, dtype=p.dtype)
