"""Invertible transforms with exact log-det Jacobians.

The building block is an affine coupling layer: the first block of
coordinates passes through unchanged and conditions an elementwise affine
map of the second block, which makes the transform trivially invertible and
its Jacobian triangular. Scale outputs are soft-clamped so the inverse can
never overflow. Fixed flip permutations between couplings alternate which
block is transformed.

Forward evaluation runs on the gradient tape (training); inversion is pure
array math on the trained parameters and is safe to call concurrently.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DimensionError, NumericError
from .nn import MLP


class CouplingLayer:
    """Affine coupling: y1 = x1, y2 = x2 * exp(s(x1)) + t(x1).

    ``s`` is passed through scale_clamp * tanh(s / scale_clamp) so that
    |s| stays below ``scale_clamp``; the log-det Jacobian is the row sum of
    the clamped scale outputs.
    """

    def __init__(
        self,
        dim: int,
        *,
        split_index: int | None = None,
        hidden: tuple[int, ...] = (64, 64),
        scale_clamp: float = 3.0,
        rng: np.random.Generator,
        name: str = "coupling",
    ):
        if dim < 2:
            raise ContractError("coupling layers need at least 2 dimensions")
        split = dim // 2 if split_index is None else split_index
        if not 1 <= split < dim:
            raise ContractError(f"split_index {split} invalid for dim {dim}")
        if scale_clamp <= 0:
            raise ContractError("scale_clamp must be positive")
        self.dim = dim
        self.split_index = split
        self.scale_clamp = float(scale_clamp)
        self.scale_net = MLP(
            split, dim - split, hidden, rng=rng, zero_init_last=True, name=f"{name}/scale"
        )
        self.shift_net = MLP(
            split, dim - split, hidden, rng=rng, zero_init_last=True, name=f"{name}/shift"
        )

    def _clamped_scale(self, x1: ad.Tensor) -> ad.Tensor:
        raw = self.scale_net(x1)
        c = self.scale_clamp
        return ad.mul(ad.tanh(ad.mul(raw, 1.0 / c)), c)

    def forward(self, x: ad.Tensor) -> tuple[ad.Tensor, ad.Tensor]:
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionError(f"coupling expects [batch, {self.dim}], got {x.shape}")
        split = self.split_index
        x1 = ad.slice_cols(x, 0, split)
        x2 = ad.slice_cols(x, split, self.dim)
        s = self._clamped_scale(x1)
        y2 = ad.add(ad.mul(x2, ad.exp(s)), self.shift_net(x1))
        return ad.concat_cols([x1, y2]), s.sum(axis=1)

    def inverse(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.ndim != 2 or y.shape[1] != self.dim:
            raise DimensionError(f"coupling expects [batch, {self.dim}], got {y.shape}")
        split = self.split_index
        y1 = y[:, :split]
        y2 = y[:, split:]
        with ad.no_grad():
            s = self._clamped_scale(ad.Tensor(y1)).data
            t = self.shift_net(ad.Tensor(y1)).data
        with np.errstate(over="ignore"):
            x2 = (y2 - t) * np.exp(-s)
        out = np.concatenate([y1, x2], axis=1)
        if not np.all(np.isfinite(out)):
            raise NumericError("coupling inverse overflowed")
        return out

    def parameters(self) -> list[ad.Tensor]:
        return self.scale_net.parameters() + self.shift_net.parameters()


class Permutation:
    """Fixed reordering of coordinates; contributes exactly 0 to log-det."""

    def __init__(self, index: np.ndarray):
        index = np.asarray(index, dtype=np.intp)
        if not np.array_equal(np.sort(index), np.arange(index.size)):
            raise ContractError("index must be a permutation")
        self.dim = int(index.size)
        self.index = index
        self.inverse_index = np.argsort(index)

    def forward(self, x: ad.Tensor) -> tuple[ad.Tensor, ad.Tensor]:
        return ad.gather_cols(x, self.index), ad.Tensor(np.zeros(x.shape[0]))

    def inverse(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return y[:, self.inverse_index]

    def parameters(self) -> list[ad.Tensor]:
        return []


def flip(dim: int) -> Permutation:
    return Permutation(np.arange(dim)[::-1])


class FlowNetwork:
    """Composed bijection; log-det is the sum of the layers' log-dets."""

    def __init__(self, layers, dim: int):
        self.layers = list(layers)
        self.dim = int(dim)
        for layer in self.layers:
            if layer.dim != self.dim:
                raise ContractError("all layers must preserve the flow dimension")

    def forward(self, x: ad.Tensor) -> tuple[ad.Tensor, ad.Tensor]:
        """Map x to y and return (y, per-row log |det dy/dx|)."""
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionError(f"flow expects [batch, {self.dim}], got {x.shape}")
        log_det = ad.Tensor(np.zeros(x.shape[0]))
        for layer in self.layers:
            x, contribution = layer.forward(x)
            log_det = ad.add(log_det, contribution)
        return x, log_det

    def forward_array(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Tape-free forward for inference; returns plain arrays."""
        with ad.no_grad():
            y, log_det = self.forward(ad.Tensor(np.asarray(x, dtype=np.float64)))
        return y.data, log_det.data

    def inverse(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.ndim != 2 or y.shape[1] != self.dim:
            raise DimensionError(f"flow expects [batch, {self.dim}], got {y.shape}")
        for layer in reversed(self.layers):
            y = layer.inverse(y)
        return y

    def parameters(self) -> list[ad.Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]


def realnvp(
    dim: int,
    depth: int = 8,
    hidden: tuple[int, ...] = (64, 64),
    scale_clamp: float = 3.0,
    *,
    rng: np.random.Generator,
    name: str = "flow",
) -> FlowNetwork:
    """Coupling stack with flips between layers; starts as the identity map
    (up to the fixed permutations) because the sub-network output layers are
    zero-initialized."""
    if depth < 1:
        raise ContractError("depth must be at least 1")
    layers: list = []
    for i in range(depth):
        if i:
            layers.append(flip(dim))
        layers.append(
            CouplingLayer(
                dim,
                hidden=hidden,
                scale_clamp=scale_clamp,
                rng=rng,
                name=f"{name}/coupling{i}",
            )
        )
    return FlowNetwork(layers, dim)


def split_macro(y, macro_dim: int):
    """Split flow output into the retained macro block and the residual.

    Works on a Tensor (tape participates) or a plain array; the two blocks
    concatenate back to the input exactly.
    """
    if isinstance(y, ad.Tensor):
        width = y.shape[1] if y.ndim == 2 else -1
        if y.ndim != 2:
            raise DimensionError("split_macro expects a 2-d tensor")
        if not 0 < macro_dim <= width:
            raise ContractError(f"macro_dim {macro_dim} out of range for width {width}")
        return ad.slice_cols(y, 0, macro_dim), ad.slice_cols(y, macro_dim, width)
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError("split_macro expects a 2-d array")
    if not 0 < macro_dim <= arr.shape[1]:
        raise ContractError(
            f"macro_dim {macro_dim} out of range for width {arr.shape[1]}"
        )
    return arr[:, :macro_dim].copy(), arr[:, macro_dim:].copy()
