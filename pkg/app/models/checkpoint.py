"""
Versioned binary checkpoint format

Layout (little-endian):
    magic  b"SPRGCKPT"
    u32    format version
    u32    header length, then the header as canonical JSON
           {"alphabet": [...] | null, "model": {...ModelConfig}}
    u32    tensor count, then per tensor:
           u16 name length, UTF-8 name ("params/<name>" or "state/<name>"),
           u8 dtype tag (1 = f64), u8 ndim, u32 per dim, f64 data
"""
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import orjson
import structlog
from pydantic import ValidationError

from app.exceptions import CheckpointError
from app.models.speech_model import init_state, param_shapes
from app.schemas.model import ModelConfig
from app.services.storage import atomic_write_bytes

logger = structlog.get_logger(__name__)

MAGIC = b"SPRGCKPT"
VERSION = 1
DTYPE_F64 = 1
PARAMS_PREFIX = "params/"
STATE_PREFIX = "state/"


@dataclass
class Checkpoint:
    """Model configuration, parameters and batch-norm running statistics"""
    config: ModelConfig
    params: Dict[str, np.ndarray]
    state: Dict[str, np.ndarray] = field(default_factory=dict)
    alphabet: Optional[Tuple[str, ...]] = None


def header_json(config: ModelConfig, alphabet: Optional[Tuple[str, ...]] = None) -> bytes:
    """Canonical (sorted-key) JSON of the header"""
    header = {"alphabet": list(alphabet) if alphabet is not None else None, "model": config.model_dump(mode="json")}
    return orjson.dumps(header, option=orjson.OPT_SORT_KEYS)


def checkpoint_to_bytes(checkpoint: Checkpoint) -> bytes:
    header = header_json(checkpoint.config, checkpoint.alphabet)
    tensors = [(PARAMS_PREFIX + name, value) for name, value in sorted(checkpoint.params.items())]
    tensors += [(STATE_PREFIX + name, value) for name, value in sorted(checkpoint.state.items())]

    parts = [MAGIC, struct.pack("<II", VERSION, len(header)), header, struct.pack("<I", len(tensors))]
    for name, value in tensors:
        encoded = name.encode("utf-8")
        array = np.ascontiguousarray(value, dtype="<f8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", DTYPE_F64, array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(array.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError(f"checkpoint truncated while reading {what} at byte {self.offset}")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def checkpoint_from_bytes(data: bytes) -> Checkpoint:
    reader = _Reader(data)
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, header_length = reader.unpack("<II", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}")
    try:
        header = orjson.loads(reader.take(header_length, "header"))
        config = ModelConfig.model_validate(header["model"])
    except (orjson.JSONDecodeError, KeyError, TypeError, ValidationError) as e:
        raise CheckpointError(f"invalid checkpoint header: {e}") from e
    alphabet = tuple(header["alphabet"]) if header.get("alphabet") is not None else None

    params: Dict[str, np.ndarray] = {}
    state: Dict[str, np.ndarray] = {}
    (count,) = reader.unpack("<I", "tensor count")
    for _ in range(count):
        (name_length,) = reader.unpack("<H", "tensor name length")
        name = reader.take(name_length, "tensor name").decode("utf-8")
        dtype, ndim = reader.unpack("<BB", f"dtype of {name}")
        if dtype != DTYPE_F64:
            raise CheckpointError(f"tensor {name} has unknown dtype tag {dtype}")
        shape = reader.unpack(f"<{ndim}I", f"shape of {name}")
        size = int(np.prod(shape)) if ndim else 1
        values = np.frombuffer(reader.take(8 * size, f"data of {name}"), dtype="<f8").astype(np.float64)
        values = values.reshape(shape)
        if name.startswith(PARAMS_PREFIX):
            params[name[len(PARAMS_PREFIX):]] = values
        elif name.startswith(STATE_PREFIX):
            state[name[len(STATE_PREFIX):]] = values
        else:
            raise CheckpointError(f"tensor {name} belongs to no known section")
    if reader.offset != len(data):
        raise CheckpointError(f"{len(data) - reader.offset} trailing bytes after the last tensor")
    return Checkpoint(config=config, params=params, state=state, alphabet=alphabet)


def save_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> None:
    atomic_write_bytes(path, checkpoint_to_bytes(checkpoint))
    logger.info("checkpoint_saved", path=str(path), tensors=len(checkpoint.params) + len(checkpoint.state))


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Read a checkpoint and check its tensors against the stored model config"""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    checkpoint = checkpoint_from_bytes(data)

    expected = param_shapes(checkpoint.config)
    for name, shape in expected.items():
        if name not in checkpoint.params:
            raise CheckpointError(f"checkpoint is missing parameter {name}")
        if checkpoint.params[name].shape != tuple(shape):
            raise CheckpointError(
                f"parameter {name} has shape {checkpoint.params[name].shape}, config implies {tuple(shape)}"
            )
    for name in init_state(checkpoint.config):
        if name not in checkpoint.state:
            raise CheckpointError(f"checkpoint is missing batch-norm statistic {name}")
    logger.info("checkpoint_loaded", path=str(path), parameters=len(checkpoint.params))
    return checkpoint
