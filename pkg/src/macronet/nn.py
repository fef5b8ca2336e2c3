"""Dense layers and the adaptive-moment optimizer used to train the flows."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DimensionError, NumericError

ACTIVATIONS = ("identity", "tanh", "leaky_relu")


class DenseLayer:
    """Affine map with an optional elementwise nonlinearity.

    Weights are drawn uniformly within +-1/sqrt(fan_in); ``zero_init`` starts
    the layer at the zero map, which the coupling layers use so a fresh flow
    is the identity.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        activation: str = "identity",
        *,
        rng: np.random.Generator,
        zero_init: bool = False,
        name: str = "dense",
    ):
        if activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation '{activation}'")
        if in_dim < 1 or out_dim < 1:
            raise ContractError("layer dimensions must be positive")
        if zero_init:
            weight = np.zeros((out_dim, in_dim))
        else:
            bound = 1.0 / np.sqrt(in_dim)
            weight = rng.uniform(-bound, bound, size=(out_dim, in_dim))
        self.weight = ad.Tensor(weight, requires_grad=True, name=f"{name}.weight")
        self.bias = ad.Tensor(np.zeros(out_dim), requires_grad=True, name=f"{name}.bias")
        self.activation = activation

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionError(
                f"dense layer expects [batch, {self.in_dim}], got {x.shape}"
            )
        pre = ad.linear(x, self.weight, self.bias)
        if self.activation == "identity":
            return pre
        if self.activation == "tanh":
            return ad.tanh(pre)
        return ad.leaky_relu(pre)

    def parameters(self) -> list[ad.Tensor]:
        return [self.weight, self.bias]


class MLP:
    """Stack of dense layers: leaky-relu hidden layers, identity output."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        hidden: tuple[int, ...] = (64, 64),
        *,
        rng: np.random.Generator,
        zero_init_last: bool = False,
        name: str = "mlp",
    ):
        sizes = (in_dim, *hidden, out_dim)
        self.layers: list[DenseLayer] = []
        for i in range(len(sizes) - 1):
            last = i == len(sizes) - 2
            self.layers.append(
                DenseLayer(
                    sizes[i],
                    sizes[i + 1],
                    activation="identity" if last else "leaky_relu",
                    rng=rng,
                    zero_init=zero_init_last and last,
                    name=f"{name}/{i}",
                )
            )

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def parameters(self) -> list[ad.Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]


class Adam:
    """Bias-corrected adaptive-moment estimation over a fixed parameter list.

    Keeps one first-moment and one second-moment buffer per parameter, both
    shaped like the parameter; the step counter increases by one per update.
    """

    def __init__(
        self,
        params,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        if not self.params:
            raise ContractError("optimizer needs at least one parameter")
        for p in self.params:
            if not p.requires_grad:
                raise ContractError(f"parameter '{p.name}' does not require gradients")
        if learning_rate <= 0:
            raise ContractError("learning_rate must be positive")
        if not (0.0 < beta1 < 1.0 and 0.0 < beta2 < 1.0):
            raise ContractError("decay rates must lie in (0, 1)")
        if eps <= 0:
            raise ContractError("eps must be positive")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.first = [np.zeros_like(p.data) for p in self.params]
        self.second = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.step_count += 1
        correct1 = 1.0 - self.beta1**self.step_count
        correct2 = 1.0 - self.beta2**self.step_count
        for p, m, v in zip(self.params, self.first, self.second):
            if p.grad is None:
                raise ContractError(f"missing gradient for parameter '{p.name}'")
            g = p.grad
            if g.shape != p.data.shape:
                raise DimensionError(
                    f"gradient shape {g.shape} != parameter shape {p.data.shape}"
                )
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter '{p.name}'")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.learning_rate * (m / correct1) / (np.sqrt(v / correct2) + self.eps)
            if not np.all(np.isfinite(p.data)):
                raise NumericError(f"non-finite parameter '{p.name}' after update")
