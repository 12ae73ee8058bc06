"""
Versioned binary checkpoint codec.

Layout (all integers little-endian)::

    magic        8 bytes  b"JDIFFCK1"
    version      u32
    arch_hash    32 bytes (raw sha256 of the architecture settings)
    n_entries    u32
    entries      n_entries x {
                    name_len u16, name utf-8,
                    ndim u8, dims u32 * ndim,
                    data float32 LE, row-major
                 }

Every tensor is stored as float32, so integer state (step counters, RNG
bytes) must be exactly representable in float32.
"""
import logging
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import torch

from src.exceptions import CheckpointError
from src.utils.file_operations import FileOperations

logger = logging.getLogger(__name__)

MAGIC = b"JDIFFCK1"
VERSION = 1
FLOAT32_EXACT_INT = 2 ** 24

ArrayLike = Union[np.ndarray, torch.Tensor]


def _as_float32(value: ArrayLike) -> np.ndarray:
    if isinstance(value, torch.Tensor):
        value = value.detach().cpu().numpy()
    return np.ascontiguousarray(np.asarray(value, dtype="<f4"))


def encode_checkpoint(entries: Mapping[str, ArrayLike], arch_hash: str) -> bytes:
    """
    Serialize named arrays.

    Args:
        entries: Ordered mapping of name -> array
        arch_hash: Hex sha256 of the architecture settings

    Returns:
        Encoded bytes
    """
    digest = bytes.fromhex(arch_hash)
    if len(digest) != 32:
        raise CheckpointError("<memory>", "architecture hash must be a sha256 hex digest")
    parts = [MAGIC, struct.pack("<I", VERSION), digest, struct.pack("<I", len(entries))]
    for name, value in entries.items():
        array = _as_float32(value)
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise CheckpointError("<memory>", f"entry name too long: {name[:40]}...")
        if array.ndim > 0xFF:
            raise CheckpointError("<memory>", f"too many dimensions for {name}")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", array.ndim))
        if array.ndim:
            parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(array.tobytes(order="C"))
    return b"".join(parts)


def decode_checkpoint(payload: bytes, source: str = "<memory>") -> Tuple[str, "OrderedDict[str, np.ndarray]"]:
    """
    Parse encoded bytes.

    Returns:
        (arch_hash hex, ordered name -> float32 array)

    Raises:
        CheckpointError: On bad magic, unknown version or truncation
    """
    view = memoryview(payload)
    offset = 0

    def take(n: int) -> memoryview:
        nonlocal offset
        if offset + n > len(view):
            raise CheckpointError(source, f"truncated at byte {offset} (needed {n} more)")
        chunk = view[offset:offset + n]
        offset += n
        return chunk

    if bytes(take(len(MAGIC))) != MAGIC:
        raise CheckpointError(source, "bad magic bytes")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(source, f"unsupported version {version}")
    arch_hash = bytes(take(32)).hex()
    (count,) = struct.unpack("<I", take(4))

    entries: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        n = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(take(4 * n), dtype="<f4").reshape(shape).copy()
        entries[name] = data
    if offset != len(view):
        raise CheckpointError(source, f"{len(view) - offset} trailing bytes")
    return arch_hash, entries


def write_checkpoint(path: Path, entries: Mapping[str, ArrayLike], arch_hash: str) -> str:
    """
    Atomically write a checkpoint file.

    Returns:
        sha256 hex digest of the written file
    """
    payload = encode_checkpoint(entries, arch_hash)
    FileOperations.write_bytes_atomic(Path(path), payload)
    logger.debug(f"Checkpoint {path}: {len(entries)} entries, {len(payload)} bytes")
    return FileOperations.sha256_file(Path(path))


def read_checkpoint(path: Path, expected_arch_hash: Optional[str] = None) -> "OrderedDict[str, np.ndarray]":
    """
    Read a checkpoint file, optionally enforcing the architecture hash.

    Raises:
        CheckpointError: If the file is missing, malformed or incompatible
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(str(path), "file not found")
    arch_hash, entries = decode_checkpoint(path.read_bytes(), str(path))
    if expected_arch_hash is not None and arch_hash != expected_arch_hash:
        raise CheckpointError(
            str(path),
            f"architecture hash {arch_hash[:12]} does not match the configured model {expected_arch_hash[:12]}"
        )
    return entries


@dataclass
class TrainingCheckpoint:
    """Everything needed to resume training or to sample."""

    model: Dict[str, torch.Tensor]
    ema: Dict[str, torch.Tensor]
    optimizer: Dict[str, Dict[str, torch.Tensor]] = field(default_factory=dict)
    rng_state: Optional[torch.Tensor] = None
    epoch: int = 0
    step: int = 0
    best_epoch: int = 0
    history: Dict[str, List[float]] = field(default_factory=dict)

    def to_entries(self) -> "OrderedDict[str, ArrayLike]":
        """Flatten into named float32 arrays."""
        for name, value in (("epoch", self.epoch), ("step", self.step), ("best_epoch", self.best_epoch)):
            if not 0 <= value < FLOAT32_EXACT_INT:
                raise CheckpointError("<memory>", f"{name}={value} is not exactly representable")
        entries: "OrderedDict[str, ArrayLike]" = OrderedDict()
        for name, value in self.model.items():
            entries[f"model/{name}"] = value
        for name, value in self.ema.items():
            entries[f"ema/{name}"] = value
        for name, state in self.optimizer.items():
            for key, value in state.items():
                entries[f"optim/{name}/{key}"] = value
        if self.rng_state is not None:
            entries["rng/train"] = self.rng_state.to(torch.float32)
        entries["meta/epoch"] = np.array([self.epoch])
        entries["meta/step"] = np.array([self.step])
        entries["meta/best_epoch"] = np.array([self.best_epoch])
        for key, values in self.history.items():
            entries[f"history/{key}"] = np.array(values, dtype=np.float32).reshape(-1)
        return entries

    @classmethod
    def from_entries(cls, entries: Mapping[str, np.ndarray]) -> "TrainingCheckpoint":
        """Rebuild from decoded arrays."""
        model: Dict[str, torch.Tensor] = OrderedDict()
        ema: Dict[str, torch.Tensor] = OrderedDict()
        optimizer: Dict[str, Dict[str, torch.Tensor]] = OrderedDict()
        history: Dict[str, List[float]] = {}
        rng_state = None
        meta: Dict[str, int] = {}
        for key, value in entries.items():
            section, _, rest = key.partition("/")
            if section == "model":
                model[rest] = torch.from_numpy(value.copy())
            elif section == "ema":
                ema[rest] = torch.from_numpy(value.copy())
            elif section == "optim":
                param, _, slot = rest.rpartition("/")
                optimizer.setdefault(param, {})[slot] = torch.from_numpy(value.copy())
            elif section == "rng":
                rng_state = torch.from_numpy(value.copy()).to(torch.uint8)
            elif section == "meta":
                meta[rest] = int(value.reshape(-1)[0])
            elif section == "history":
                history[rest] = [float(v) for v in value.reshape(-1)]
            else:
                raise CheckpointError("<memory>", f"unknown entry '{key}'")
        if not model:
            raise CheckpointError("<memory>", "no model parameters")
        return cls(
            model=model,
            ema=ema or OrderedDict((k, v.clone()) for k, v in model.items()),
            optimizer=optimizer,
            rng_state=rng_state,
            epoch=meta.get("epoch", 0),
            step=meta.get("step", 0),
            best_epoch=meta.get("best_epoch", 0),
            history=history,
        )

    def save(self, path: Path, arch_hash: str) -> str:
        """Write to ``path``; returns the file's sha256."""
        return write_checkpoint(path, self.to_entries(), arch_hash)

    @classmethod
    def load(cls, path: Path, expected_arch_hash: Optional[str] = None) -> "TrainingCheckpoint":
        """Read from ``path``."""
        return cls.from_entries(read_checkpoint(path, expected_arch_hash))
