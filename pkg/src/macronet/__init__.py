"""Self-supervised discovery of shared macrostates from paired observations,
with invertible inverse design of microstates."""

from .autodiff import Tensor, backward, no_grad
from .config import RunConfig
from .data import PairDataset
from .errors import (
    ContractError,
    DataFormatError,
    DimensionError,
    DivergenceError,
    IntegrationError,
    MacroNetError,
    NumericError,
)
from .flow import CouplingLayer, FlowNetwork, Permutation, flip, realnvp, split_macro
from .model import (
    MacroModel,
    Macrostate,
    SampleResult,
    TrainConfig,
    TrainReport,
    distribution_loss,
    gaussian_nll,
    prediction_loss,
    total_loss,
    train,
)
from .nn import MLP, Adam, DenseLayer
from .simulators import (
    GrayScottField,
    GrayScottParams,
    LinearSystemSpec,
    ShoState,
    Trajectory,
    build_pair_dataset,
    gray_scott_run,
    linear_rollout,
    sho_energy,
    sho_evolve,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "ContractError",
    "CouplingLayer",
    "DataFormatError",
    "DenseLayer",
    "DimensionError",
    "DivergenceError",
    "FlowNetwork",
    "GrayScottField",
    "GrayScottParams",
    "IntegrationError",
    "LinearSystemSpec",
    "MLP",
    "MacroModel",
    "MacroNetError",
    "Macrostate",
    "NumericError",
    "PairDataset",
    "Permutation",
    "RunConfig",
    "SampleResult",
    "ShoState",
    "Tensor",
    "TrainConfig",
    "TrainReport",
    "Trajectory",
    "backward",
    "build_pair_dataset",
    "distribution_loss",
    "flip",
    "gaussian_nll",
    "gray_scott_run",
    "linear_rollout",
    "no_grad",
    "prediction_loss",
    "realnvp",
    "sho_energy",
    "sho_evolve",
    "split_macro",
    "total_loss",
    "train",
]
