"""Binary container and table formats for datasets, checkpoints, samples,
and reports.

One self-describing container serves every binary artifact: magic bytes,
a format version, canonical-JSON metadata, named float64 blocks (little
endian), and a trailing SHA-256 digest over everything before it. Writing
is a pure function of the content, so save -> load -> save is byte
identical and files can be compared directly for reproducibility checks.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .data import PairDataset
from .errors import ContractError, DataFormatError
from .metrics import EvalReport
from .model import MacroModel, TrainReport

DATASET_MAGIC = b"MNDS"
CHECKPOINT_MAGIC = b"MNCK"
FORMAT_VERSION = 1
_DIGEST_BYTES = 32


def _canonical_json(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_container(
    path, magic: bytes, metadata: dict, blocks: list[tuple[str, np.ndarray]]
) -> str:
    """Write the container and return the hex digest of its contents."""
    if len(magic) != 4:
        raise ContractError("magic must be 4 bytes")
    meta = _canonical_json(metadata)
    out = bytearray()
    out += magic
    out += struct.pack("<H", FORMAT_VERSION)
    out += struct.pack("<I", len(meta))
    out += meta
    out += struct.pack("<I", len(blocks))
    for name, array in blocks:
        array = np.ascontiguousarray(array, dtype="<f8")
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<B", array.ndim)
        for dim in array.shape:
            out += struct.pack("<I", dim)
        out += array.tobytes()
    digest = hashlib.sha256(bytes(out)).digest()
    out += digest
    Path(path).write_bytes(bytes(out))
    return digest.hex()


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.raw):
            raise DataFormatError("truncated container")
        chunk = self.raw[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]


def read_container(
    path, expected_magic: bytes
) -> tuple[dict, list[tuple[str, np.ndarray]], str]:
    """Read and verify a container; returns (metadata, blocks, hex digest)."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 + 2 + 4 + 4 + _DIGEST_BYTES:
        raise DataFormatError(f"{path}: too short to be a container")
    body, digest = raw[:-_DIGEST_BYTES], raw[-_DIGEST_BYTES:]
    actual = hashlib.sha256(body).digest()
    if actual != digest:
        raise DataFormatError(f"{path}: content digest mismatch")
    reader = _Reader(body)
    magic = reader.take(4)
    if magic != expected_magic:
        raise DataFormatError(
            f"{path}: expected magic {expected_magic!r}, found {magic!r}"
        )
    version = reader.unpack("<H")
    if version != FORMAT_VERSION:
        raise DataFormatError(
            f"{path}: format version {version} unsupported (expected {FORMAT_VERSION})"
        )
    meta_len = reader.unpack("<I")
    try:
        metadata = json.loads(reader.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise DataFormatError(f"{path}: bad metadata: {err}") from err
    n_blocks = reader.unpack("<I")
    blocks: list[tuple[str, np.ndarray]] = []
    for _ in range(n_blocks):
        name_len = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        ndim = reader.unpack("<B")
        shape = tuple(reader.unpack("<I") for _ in range(ndim))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = np.frombuffer(reader.take(count * 8), dtype="<f8").reshape(shape)
        blocks.append((name, data.astype(np.float64)))
    if reader.pos != len(body):
        raise DataFormatError(f"{path}: trailing bytes after blocks")
    return metadata, blocks, actual.hex()


# ---------------------------------------------------------------------------
# Datasets and sample files


def save_dataset(path, dataset: PairDataset) -> str:
    metadata = {"kind": "dataset", **dataset.metadata}
    blocks = [("u_records", dataset.u_records), ("v_records", dataset.v_records)]
    return write_container(path, DATASET_MAGIC, metadata, blocks)


def load_dataset(path) -> PairDataset:
    metadata, blocks, _ = read_container(path, DATASET_MAGIC)
    named = dict(blocks)
    if metadata.get("kind") != "dataset" or set(named) != {"u_records", "v_records"}:
        raise DataFormatError(f"{path}: not a dataset container")
    metadata = {k: v for k, v in metadata.items() if k != "kind"}
    return PairDataset(named["u_records"], named["v_records"], metadata)


def save_samples(path, samples: np.ndarray, metadata: dict) -> str:
    payload = {"kind": "samples", **metadata}
    return write_container(path, DATASET_MAGIC, payload, [("samples", samples)])


def load_samples(path) -> tuple[np.ndarray, dict]:
    metadata, blocks, _ = read_container(path, DATASET_MAGIC)
    named = dict(blocks)
    if metadata.get("kind") != "samples" or "samples" not in named:
        raise DataFormatError(f"{path}: not a samples container")
    return named["samples"], {k: v for k, v in metadata.items() if k != "kind"}


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, model: MacroModel, config_snapshot: dict | None = None) -> str:
    """Persist hyperparameters, normalization stats, and all flow weights."""
    metadata = {
        "kind": "checkpoint",
        "hyper": {
            "dim_u": model.dim_u,
            "dim_v": model.dim_v,
            "macro_dim": model.macro_dim,
            "flow_depth": model.flow_depth,
            "flow_width": model.flow_width,
            "scale_clamp": model.scale_clamp,
            "shared_weights": model.shared_weights,
            "dist_weight": model.dist_weight,
            "input_noise_std": model.input_noise_std,
            "init_seed": model.init_seed,
        },
        "trained": bool(model.trained),
        "config": config_snapshot or {},
    }
    blocks: list[tuple[str, np.ndarray]] = [
        ("norm/u_offset", model.u_offset),
        ("norm/u_scale", model.u_scale),
        ("norm/v_offset", model.v_offset),
        ("norm/v_scale", model.v_scale),
    ]
    for name, tensor in model.named_parameters():
        blocks.append((f"param/{name}", tensor.data))
    return write_container(path, CHECKPOINT_MAGIC, metadata, blocks)


def load_checkpoint(path) -> tuple[MacroModel, dict]:
    """Rebuild a model from a checkpoint; returns (model, config snapshot)."""
    metadata, blocks, _ = read_container(path, CHECKPOINT_MAGIC)
    if metadata.get("kind") != "checkpoint":
        raise DataFormatError(f"{path}: not a checkpoint container")
    hyper = metadata["hyper"]
    model = MacroModel(
        dim_u=int(hyper["dim_u"]),
        dim_v=int(hyper["dim_v"]),
        macro_dim=int(hyper["macro_dim"]),
        flow_depth=int(hyper["flow_depth"]),
        flow_width=int(hyper["flow_width"]),
        scale_clamp=float(hyper["scale_clamp"]),
        shared_weights=bool(hyper["shared_weights"]),
        dist_weight=float(hyper["dist_weight"]),
        input_noise_std=float(hyper["input_noise_std"]),
        init_seed=int(hyper["init_seed"]),
    )
    named = dict(blocks)
    for stat in ("u_offset", "u_scale", "v_offset", "v_scale"):
        key = f"norm/{stat}"
        if key not in named:
            raise DataFormatError(f"{path}: missing block {key}")
        setattr(model, stat.replace("norm/", ""), named[key].copy())
    for name, tensor in model.named_parameters():
        key = f"param/{name}"
        if key not in named:
            raise DataFormatError(f"{path}: missing block {key}")
        stored = named[key]
        if stored.shape != tensor.data.shape:
            raise DataFormatError(
                f"{path}: block {key} has shape {stored.shape}, "
                f"expected {tensor.data.shape}"
            )
        tensor.data = stored.copy()
    model.trained = bool(metadata.get("trained", False))
    return model, dict(metadata.get("config", {}))


# ---------------------------------------------------------------------------
# Tables and reports


def save_loss_table(path, report: TrainReport) -> None:
    """Tab-separated per-epoch losses; all quantities are dimensionless
    (inputs are standardized before entering the flows)."""
    lines = [
        "# per-epoch training losses; dimensionless (normalized inputs)",
        "epoch\tloss_prediction\tloss_dist_u\tloss_dist_v\tloss_total",
    ]
    for epoch in range(report.epochs):
        lines.append(
            f"{epoch}\t{float(report.prediction[epoch])!r}"
            f"\t{float(report.dist_u[epoch])!r}"
            f"\t{float(report.dist_v[epoch])!r}\t{float(report.total[epoch])!r}"
        )
    lines.append(f"# final macro prediction rmse\t{float(report.macro_rmse)!r}")
    lines.append(f"# distribution loss weight\t{float(report.dist_weight)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_loss_table(path) -> TrainReport:
    prediction, dist_u, dist_v, total = [], [], [], []
    macro_rmse = None
    dist_weight = None
    for line in Path(path).read_text().splitlines():
        if line.startswith("# final macro prediction rmse"):
            macro_rmse = float(line.rsplit("\t", 1)[1])
            continue
        if line.startswith("# distribution loss weight"):
            dist_weight = float(line.rsplit("\t", 1)[1])
            continue
        if line.startswith("#") or line.startswith("epoch"):
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise DataFormatError(f"{path}: bad loss row {line!r}")
        prediction.append(float(fields[1]))
        dist_u.append(float(fields[2]))
        dist_v.append(float(fields[3]))
        total.append(float(fields[4]))
    if macro_rmse is None or dist_weight is None:
        raise DataFormatError(f"{path}: missing summary rows")
    return TrainReport(
        prediction=np.array(prediction),
        dist_u=np.array(dist_u),
        dist_v=np.array(dist_v),
        total=np.array(total),
        dist_weight=dist_weight,
        macro_rmse=macro_rmse,
    )


def save_reports(path, reports: list[EvalReport]) -> None:
    Path(path).write_text("".join(r.to_line() + "\n" for r in reports))


def load_reports(path) -> list[EvalReport]:
    lines = [line for line in Path(path).read_text().splitlines() if line.strip()]
    return [EvalReport.from_line(line) for line in lines]
