"""Paired microstate records sampled from a relation between two observables."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ContractError, NumericError


@dataclass
class PairDataset:
    """Rows of (u_i, v_i) drawn from a joint micro-to-micro relation.

    ``metadata`` records the generator name, seed, and sampling ranges so a
    dataset can be regenerated or validated after round-tripping to disk.
    """

    u_records: np.ndarray
    v_records: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.u_records = np.asarray(self.u_records, dtype=np.float64)
        self.v_records = np.asarray(self.v_records, dtype=np.float64)
        if self.u_records.ndim != 2 or self.v_records.ndim != 2:
            raise ContractError("records must be 2-d arrays [count, dim]")
        if self.u_records.shape[0] != self.v_records.shape[0]:
            raise ContractError(
                f"unpaired record counts: {self.u_records.shape[0]} != "
                f"{self.v_records.shape[0]}"
            )
        if not (np.all(np.isfinite(self.u_records)) and np.all(np.isfinite(self.v_records))):
            raise NumericError("dataset contains non-finite values")

    def __len__(self) -> int:
        return self.u_records.shape[0]

    @property
    def dim_u(self) -> int:
        return self.u_records.shape[1]

    @property
    def dim_v(self) -> int:
        return self.v_records.shape[1]
