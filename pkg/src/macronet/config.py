"""Run configuration shared by the CLI and the experiment scripts.

A flat set of keys mirrors the CLI flags; values may come from a JSON config
file, with explicit CLI flags taking precedence. The seed is mandatory and
never derived from the clock.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, fields
from pathlib import Path

from .errors import ContractError, DataFormatError

TESTBED_DEFAULT_MACRO_DIM = {"linear": 2, "sho": 1, "turing": 2}


@dataclass
class RunConfig:
    """Defaults for every field are documented here; ``seed`` has no default
    by design and must be supplied, ``macro_dim`` and ``shared_weights``
    default per testbed (2/1/2 and sho-only weight sharing)."""

    testbed: str = "sho"
    n: int = 10000
    macro_dim: int | None = None
    shared_weights: bool | None = None
    flow_depth: int = 8
    flow_width: int = 64
    scale_clamp: float = 3.0
    dist_weight: float = 0.1
    input_noise_std: float = 0.05
    learning_rate: float = 1e-3
    lr_decay: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 200
    batch_size: int = 256
    seed: int | None = None
    grid: int = 16
    sim_steps: int = 5000
    traj_steps: int = 8
    out_dir: str = "runs"
    verbose: bool = False

    def validate(self) -> "RunConfig":
        if self.testbed not in TESTBED_DEFAULT_MACRO_DIM:
            raise ContractError(f"unknown testbed '{self.testbed}'")
        if self.seed is None:
            raise ContractError("seed is mandatory; pass --seed or set it in the config file")
        if self.seed < 0:
            raise ContractError("seed must be nonnegative")
        if self.n < 0:
            raise ContractError("n must be nonnegative")
        for name in ("flow_depth", "flow_width", "epochs", "batch_size", "grid", "traj_steps"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be at least 1")
        if self.sim_steps < 0:
            raise ContractError("sim_steps must be nonnegative")
        return self

    @property
    def resolved_macro_dim(self) -> int:
        if self.macro_dim is not None:
            return int(self.macro_dim)
        return TESTBED_DEFAULT_MACRO_DIM[self.testbed]

    @property
    def resolved_shared_weights(self) -> bool:
        if self.shared_weights is not None:
            return bool(self.shared_weights)
        return self.testbed == "sho"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise DataFormatError(f"unknown config keys: {sorted(unknown)}")
        return cls(**payload)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            payload = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise DataFormatError(f"cannot read config {path}: {err}") from err
        if not isinstance(payload, dict):
            raise DataFormatError(f"config {path} must hold a JSON object")
        return cls.from_dict(payload)

    def override(self, **updates) -> "RunConfig":
        """New config with the non-None entries of ``updates`` applied."""
        payload = self.to_dict()
        for key, value in updates.items():
            if value is not None:
                payload[key] = value
        return RunConfig.from_dict(payload)
