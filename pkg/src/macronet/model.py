"""Paired-flow macrostate learner.

Two invertible networks map the two observation streams into spaces whose
first ``macro_dim`` coordinates are trained to agree on paired records (the
prediction loss) while all coordinates of both outputs are pushed toward an
independent standard normal by a change-of-variables negative log-likelihood
(the distribution loss). The retained coordinates are the macrostate; the
remaining coordinates are regularized but discarded, which is what makes
conditional inverse sampling cheap: concatenate a target macrostate with
fresh normal draws and invert the flow.

Inputs are standardized per channel before entering the flows; the stats are
part of the model and are stored in checkpoints. Losses are therefore
reported in normalized space, and the fixed standardization does not enter
the log-det term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import autodiff as ad
from .data import PairDataset
from .errors import ContractError, DimensionError, DivergenceError, NumericError
from .flow import FlowNetwork, realnvp, split_macro
from .nn import Adam

LOG_TWO_PI = math.log(2.0 * math.pi)

# Disjoint seed-stream tags for the independent random streams.
_FLOW_U_STREAM = 101
_FLOW_V_STREAM = 102
_TRAIN_STREAM = 201


@dataclass(frozen=True)
class Macrostate:
    """A point in macro space; the retained coordinates of a flow output."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", np.asarray(self.values, dtype=np.float64).reshape(-1)
        )
        if not np.all(np.isfinite(self.values)):
            raise NumericError("non-finite macrostate")


@dataclass
class SampleResult:
    """Microstates drawn at a fixed macrostate, plus quality metadata."""

    samples: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict)


@dataclass
class TrainReport:
    """Per-epoch loss trajectory and the final macro prediction RMSE."""

    prediction: np.ndarray
    dist_u: np.ndarray
    dist_v: np.ndarray
    total: np.ndarray
    dist_weight: float
    macro_rmse: float

    def __post_init__(self):
        for name in ("prediction", "dist_u", "dist_v", "total"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))

    @property
    def epochs(self) -> int:
        return len(self.total)


def _normalize_side(side: str) -> str:
    norm = str(side).lower()
    if norm not in ("u", "v"):
        raise ContractError(f"side must be 'u' or 'v', got {side!r}")
    return norm


class MacroModel:
    """A pair of flows (one per observation stream) with a shared macro block.

    With ``shared_weights`` both sides use the identical network object (and
    pooled normalization stats), which forces the learned map to be the same
    function of both streams; this is how time-invariant quantities are
    extracted from before/after pairs.

    Training mutates the model; afterwards it is read only and safe for
    concurrent encode/sample calls.
    """

    def __init__(
        self,
        dim_u: int,
        dim_v: int,
        macro_dim: int,
        *,
        flow_depth: int = 8,
        flow_width: int = 64,
        scale_clamp: float = 3.0,
        shared_weights: bool = False,
        dist_weight: float = 0.1,
        input_noise_std: float = 0.05,
        init_seed: int = 0,
    ):
        if macro_dim < 1 or macro_dim > min(dim_u, dim_v):
            raise ContractError(
                f"macro_dim {macro_dim} must lie in [1, min({dim_u}, {dim_v})]"
            )
        if shared_weights and dim_u != dim_v:
            raise ContractError("shared weights require equal stream dimensions")
        if dist_weight < 0:
            raise ContractError("dist_weight must be nonnegative")
        if input_noise_std < 0:
            raise ContractError("input_noise_std must be nonnegative")
        self.dim_u = int(dim_u)
        self.dim_v = int(dim_v)
        self.macro_dim = int(macro_dim)
        self.flow_depth = int(flow_depth)
        self.flow_width = int(flow_width)
        self.scale_clamp = float(scale_clamp)
        self.shared_weights = bool(shared_weights)
        self.dist_weight = float(dist_weight)
        self.input_noise_std = float(input_noise_std)
        self.init_seed = int(init_seed)

        hidden = (flow_width, flow_width)
        rng_u = np.random.default_rng(np.random.SeedSequence([init_seed, _FLOW_U_STREAM]))
        if shared_weights:
            self.flow_u: FlowNetwork = realnvp(
                dim_u, flow_depth, hidden, scale_clamp, rng=rng_u, name="shared"
            )
            self.flow_v: FlowNetwork = self.flow_u
        else:
            rng_v = np.random.default_rng(
                np.random.SeedSequence([init_seed, _FLOW_V_STREAM])
            )
            self.flow_u = realnvp(
                dim_u, flow_depth, hidden, scale_clamp, rng=rng_u, name="flow_u"
            )
            self.flow_v = realnvp(
                dim_v, flow_depth, hidden, scale_clamp, rng=rng_v, name="flow_v"
            )

        self.u_offset = np.zeros(dim_u)
        self.u_scale = np.ones(dim_u)
        self.v_offset = np.zeros(dim_v)
        self.v_scale = np.ones(dim_v)
        self.trained = False

    # -- parameters ---------------------------------------------------------

    def parameters(self) -> list[ad.Tensor]:
        params = list(self.flow_u.parameters())
        if not self.shared_weights:
            params += self.flow_v.parameters()
        return params

    def named_parameters(self) -> list[tuple[str, ad.Tensor]]:
        named = [(p.name, p) for p in self.parameters()]
        names = [n for n, _ in named]
        if len(set(names)) != len(names):
            raise ContractError("parameter names are not unique")
        return named

    # -- normalization ------------------------------------------------------

    def fit_normalization(self, dataset: PairDataset) -> None:
        """Standardize each input channel to zero mean, unit variance.

        With shared weights the stats are pooled over both record streams so
        that both sides see the identical map. Channels with (near) zero
        spread keep unit scale.
        """
        if len(dataset) == 0:
            raise ContractError("cannot fit normalization on an empty dataset")
        if self.shared_weights:
            stacked = np.concatenate([dataset.u_records, dataset.v_records], axis=0)
            offset = stacked.mean(axis=0)
            scale = stacked.std(axis=0)
            scale = np.where(scale < 1e-12, 1.0, scale)
            self.u_offset = self.v_offset = offset
            self.u_scale = self.v_scale = scale
            return
        self.u_offset = dataset.u_records.mean(axis=0)
        u_scale = dataset.u_records.std(axis=0)
        self.u_scale = np.where(u_scale < 1e-12, 1.0, u_scale)
        self.v_offset = dataset.v_records.mean(axis=0)
        v_scale = dataset.v_records.std(axis=0)
        self.v_scale = np.where(v_scale < 1e-12, 1.0, v_scale)

    def _side(self, side: str) -> tuple[FlowNetwork, np.ndarray, np.ndarray, int]:
        side = _normalize_side(side)
        if side == "u":
            return self.flow_u, self.u_offset, self.u_scale, self.dim_u
        return self.flow_v, self.v_offset, self.v_scale, self.dim_v

    def normalize(self, side: str, x: np.ndarray) -> np.ndarray:
        _, offset, scale, dim = self._side(side)
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != dim:
            raise DimensionError(f"side '{side}' expects width {dim}, got {x.shape}")
        return (x - offset) / scale

    def denormalize(self, side: str, x: np.ndarray) -> np.ndarray:
        _, offset, scale, dim = self._side(side)
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != dim:
            raise DimensionError(f"side '{side}' expects width {dim}, got {x.shape}")
        return x * scale + offset

    # -- inference ----------------------------------------------------------

    def encode(self, side: str, x: np.ndarray) -> np.ndarray:
        """Macrostate of one or many microstates: the retained coordinates of
        the flow output. Deterministic; returns [macro_dim] for a single
        vector and [n, macro_dim] for a batch."""
        flow, _, _, dim = self._side(side)
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        batch = x[None, :] if single else x
        if batch.ndim != 2 or batch.shape[1] != dim:
            raise DimensionError(f"side '{side}' expects width {dim}, got {x.shape}")
        y, _ = flow.forward_array(self.normalize(side, batch))
        macro = y[:, : self.macro_dim]
        return macro[0] if single else macro

    def conditional_sample(
        self,
        side: str,
        target,
        n: int,
        seed: int | list[int] | tuple[int, ...] = 0,
    ) -> SampleResult:
        """Draw ``n`` microstates whose macrostate is ``target``.

        The abandoned coordinates are filled with fresh standard-normal
        draws from a stream owned by this call, then the flow is inverted.
        With macro_dim == dim there is nothing to draw and the unique
        preimage is repeated. Results from an untrained model carry a
        warning in the metadata.
        """
        flow, _, _, dim = self._side(side)
        values = target.values if isinstance(target, Macrostate) else target
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.shape[0] != self.macro_dim:
            raise ContractError(
                f"target has {values.shape[0]} entries, expected {self.macro_dim}"
            )
        if not np.all(np.isfinite(values)):
            raise NumericError("non-finite macro target")
        if n < 1:
            raise ContractError("sample count must be positive")
        entropy = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
        rng = np.random.default_rng(np.random.SeedSequence(entropy))
        z = rng.standard_normal((n, dim - self.macro_dim))
        y = np.concatenate([np.tile(values, (n, 1)), z], axis=1)
        samples = self.denormalize(side, flow.inverse(y))
        macro_error = np.linalg.norm(
            self.encode(side, samples) - values, axis=1
        )
        metadata: dict[str, Any] = {
            "side": _normalize_side(side),
            "count": int(n),
            "seed": entropy,
            "target": values.tolist(),
            "macro_error_p95": float(np.percentile(macro_error, 95)),
            "trained": bool(self.trained),
        }
        if not self.trained:
            metadata["warning"] = (
                "model has not been trained; samples reflect an untrained flow"
            )
        return SampleResult(samples=samples, metadata=metadata)


# ---------------------------------------------------------------------------
# Losses


def gaussian_nll(outputs: ad.Tensor, log_det: ad.Tensor) -> ad.Tensor:
    """Mean change-of-variables negative log-likelihood under a standard
    normal base: 0.5 |y|^2 + (d/2) log(2 pi) - log |det J| per row.

    Minimized exactly when all output coordinates are independent standard
    normal.
    """
    if outputs.ndim != 2:
        raise DimensionError("outputs must be [batch, dim]")
    if log_det.shape != (outputs.shape[0],):
        raise DimensionError("log_det must be one value per row")
    d = outputs.shape[1]
    quad = ad.mul(ad.square(outputs).sum(axis=1), 0.5)
    per_row = ad.sub(ad.add(quad, 0.5 * d * LOG_TWO_PI), log_det)
    return per_row.mean()


def _loss_terms(
    model: MacroModel, u_norm: ad.Tensor, v_norm: ad.Tensor
) -> tuple[ad.Tensor, ad.Tensor, ad.Tensor]:
    """(prediction, dist_u, dist_v) on already-normalized paired batches."""
    y_u, log_det_u = model.flow_u.forward(u_norm)
    y_v, log_det_v = model.flow_v.forward(v_norm)
    macro_u, _ = split_macro(y_u, model.macro_dim)
    macro_v, _ = split_macro(y_v, model.macro_dim)
    gap = ad.sub(macro_u, macro_v)
    prediction = ad.square(gap).sum(axis=1).mean()
    return prediction, gaussian_nll(y_u, log_det_u), gaussian_nll(y_v, log_det_v)


def _paired_tensors(
    model: MacroModel, u_batch: np.ndarray, v_batch: np.ndarray
) -> tuple[ad.Tensor, ad.Tensor]:
    u_batch = np.atleast_2d(np.asarray(u_batch, dtype=np.float64))
    v_batch = np.atleast_2d(np.asarray(v_batch, dtype=np.float64))
    if u_batch.shape[0] != v_batch.shape[0]:
        raise ContractError(
            f"unpaired batch lengths {u_batch.shape[0]} and {v_batch.shape[0]}"
        )
    return (
        ad.Tensor(model.normalize("u", u_batch)),
        ad.Tensor(model.normalize("v", v_batch)),
    )


def prediction_loss(model: MacroModel, u_batch, v_batch) -> float:
    """Mean squared macro gap between the two sides of paired records."""
    u_t, v_t = _paired_tensors(model, u_batch, v_batch)
    with ad.no_grad():
        value, _, _ = _loss_terms(model, u_t, v_t)
    return value.item()


def distribution_loss(model: MacroModel, u_batch, v_batch) -> float:
    """Summed per-side normal NLL of all flow output coordinates."""
    u_t, v_t = _paired_tensors(model, u_batch, v_batch)
    with ad.no_grad():
        _, dist_u, dist_v = _loss_terms(model, u_t, v_t)
    return dist_u.item() + dist_v.item()


def total_loss(model: MacroModel, u_batch, v_batch) -> float:
    u_t, v_t = _paired_tensors(model, u_batch, v_batch)
    with ad.no_grad():
        pred, dist_u, dist_v = _loss_terms(model, u_t, v_t)
    return pred.item() + model.dist_weight * (dist_u.item() + dist_v.item())


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainConfig:
    """Optimization settings; the loss weights live on the model.

    ``lr_decay`` multiplies the learning rate once per epoch; 1.0 keeps it
    constant, values just below 1 anneal late training into the optimum.
    """

    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 1e-3
    lr_decay: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ContractError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ContractError("batch_size must be at least 1")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ContractError("lr_decay must lie in (0, 1]")


def train(model: MacroModel, dataset: PairDataset, config: TrainConfig) -> TrainReport:
    """Minibatch optimization of prediction + dist_weight * distribution.

    Deterministic given (dataset, config, model init seed): batch order and
    the per-batch input noise come from one seeded stream. Reported epoch
    losses are noise-inclusive batch means; the total is reconstructed from
    the parts so the decomposition identity holds exactly. Divergence (any
    non-finite loss, gradient, or parameter) aborts with a diagnostic.
    """
    n = len(dataset)
    if n == 0:
        raise ContractError("cannot train on an empty dataset")
    if dataset.dim_u != model.dim_u or dataset.dim_v != model.dim_v:
        raise DimensionError(
            f"dataset dims ({dataset.dim_u}, {dataset.dim_v}) do not match model "
            f"({model.dim_u}, {model.dim_v})"
        )
    model.fit_normalization(dataset)
    u_norm = model.normalize("u", dataset.u_records)
    v_norm = model.normalize("v", dataset.v_records)

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, _TRAIN_STREAM]))
    optimizer = Adam(
        model.parameters(),
        learning_rate=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.eps,
    )
    noise = model.input_noise_std
    weight = model.dist_weight
    batch_size = min(config.batch_size, n)

    pred_hist = np.empty(config.epochs)
    dist_u_hist = np.empty(config.epochs)
    dist_v_hist = np.empty(config.epochs)
    total_hist = np.empty(config.epochs)

    for epoch in range(config.epochs):
        optimizer.learning_rate = config.learning_rate * config.lr_decay**epoch
        order = rng.permutation(n)
        sums = np.zeros(3)
        for start in range(0, n, batch_size):
            rows = order[start : start + batch_size]
            u_b = u_norm[rows]
            v_b = v_norm[rows]
            if noise > 0.0:
                u_b = u_b + noise * rng.standard_normal(u_b.shape)
                v_b = v_b + noise * rng.standard_normal(v_b.shape)
            try:
                pred, dist_u, dist_v = _loss_terms(
                    model, ad.Tensor(u_b), ad.Tensor(v_b)
                )
                combined = ad.add(pred, ad.mul(ad.add(dist_u, dist_v), weight))
                optimizer.zero_grad()
                ad.backward(combined)
                optimizer.step()
            except NumericError as err:
                raise DivergenceError(
                    f"training diverged at epoch {epoch}, record {start}: {err}"
                ) from err
            sums += len(rows) * np.array(
                [pred.item(), dist_u.item(), dist_v.item()]
            )
        pred_hist[epoch], dist_u_hist[epoch], dist_v_hist[epoch] = sums / n
        total_hist[epoch] = pred_hist[epoch] + weight * (
            dist_u_hist[epoch] + dist_v_hist[epoch]
        )

    model.trained = True
    sigma = macro_prediction_rmse(model, dataset)
    return TrainReport(
        prediction=pred_hist,
        dist_u=dist_u_hist,
        dist_v=dist_v_hist,
        total=total_hist,
        dist_weight=weight,
        macro_rmse=sigma,
    )


def macro_prediction_rmse(model: MacroModel, dataset: PairDataset) -> float:
    """Root mean squared macro gap over a dataset (noise free)."""
    if len(dataset) == 0:
        raise ContractError("empty dataset")
    macro_u = model.encode("u", dataset.u_records)
    macro_v = model.encode("v", dataset.v_records)
    return float(np.sqrt(np.mean(np.sum((macro_u - macro_v) ** 2, axis=1))))


def macro_spread(model: MacroModel, dataset: PairDataset) -> float:
    """Overall macro standard deviation, sqrt of the summed per-coordinate
    variance of the v-side macros; the natural scale for macro distances."""
    macro = model.encode("v", dataset.v_records)
    return float(np.sqrt(np.sum(np.var(macro, axis=0))))
