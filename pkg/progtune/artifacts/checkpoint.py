"""Binary checkpoint codec.

Layout (little-endian)::

    b"PGTN" | version u32 | count u32
    per tensor: name_len u32 | name utf-8 | tag u32 | rank u32 | dims u64 × rank | float64 × numel

The first record, ``meta.model`` (tag kind META), holds the model and PEFT
configuration as UTF-8 JSON, one byte per float64 element.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from ..core.errors import FormatError, StorageError
from ..modeling.config import ModelConfig
from ..modeling.encoder import Encoder, build_model
from ..modeling.registry import ParameterRegistry, ParameterTag, TagKind
from ..peft.config import PeftConfig
from ..peft.methods import apply_peft

logger = logging.getLogger(__name__)

MAGIC = b"PGTN"
FORMAT_VERSION = 1
META_NAME = "meta.model"
HEADER_BYTES = 12
RECORD_OVERHEAD_BYTES = 12

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


@dataclass(frozen=True)
class _Record:
    name: str
    tag: ParameterTag
    array: np.ndarray


def _encode_record(name: str, tag: ParameterTag, array: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    parts = [_U32.pack(len(encoded)), encoded, _U32.pack(tag.code), _U32.pack(array.ndim)]
    parts.extend(_U64.pack(dim) for dim in array.shape)
    parts.append(np.ascontiguousarray(array, dtype="<f8").tobytes())
    return b"".join(parts)


def _meta_array(model: Encoder, registry: ParameterRegistry) -> np.ndarray:
    meta = {
        "model": model.config.model_dump(mode="json"),
        "peft": registry.peft.model_dump(mode="json") if registry.peft is not None else None,
    }
    raw = json.dumps(meta, sort_keys=True).encode("utf-8")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.float64)


def save_checkpoint(model: Encoder, registry: ParameterRegistry, path: Union[str, Path]) -> Path:
    path = Path(path)
    records = [_encode_record(META_NAME, ParameterTag(TagKind.META), _meta_array(model, registry))]
    records.extend(_encode_record(entry.name, entry.tag, entry.tensor.data) for entry in registry)
    payload = MAGIC + _U32.pack(FORMAT_VERSION) + _U32.pack(len(records)) + b"".join(records)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except OSError as exc:
        raise StorageError(f"cannot write checkpoint {path}: {exc}", {"path": str(path)}) from exc
    logger.info(f"Saved checkpoint {path} ({len(registry)} tensors, {len(payload)} bytes)")
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, n: int) -> bytes:
        end = self.offset + n
        if end > len(self.data):
            raise StorageError(
                f"checkpoint {self.path} is truncated at byte {len(self.data)}",
                {"path": str(self.path), "needed": end, "size": len(self.data)},
            )
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]


def _read_records(data: bytes, path: Path) -> List[_Record]:
    reader = _Reader(data, path)
    magic = reader.take(4)
    if magic != MAGIC:
        raise FormatError(f"{path} is not a checkpoint (magic {magic!r})", {"path": str(path)})
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise FormatError(
            f"unsupported checkpoint version {version}", {"path": str(path), "version": version}
        )
    records = []
    for _ in range(reader.u32()):
        raw_name = reader.take(reader.u32())
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"tensor name {raw_name!r} is not UTF-8", {"path": str(path)}) from exc
        try:
            tag = ParameterTag.from_code(reader.u32())
        except ValueError as exc:
            raise FormatError(str(exc), {"path": str(path), "name": name}) from exc
        shape = tuple(reader.u64() for _ in range(reader.u32()))
        count = int(np.prod(shape, dtype=np.int64))
        array = np.frombuffer(reader.take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
        records.append(_Record(name, tag, array))
    if reader.offset != len(data):
        raise FormatError(f"{len(data) - reader.offset} trailing bytes in {path}", {"path": str(path)})
    return records


def _decode_meta(array: np.ndarray, path: Path) -> Dict[str, Any]:
    if array.ndim != 1 or not np.all((array >= 0) & (array <= 255) & (array == np.floor(array))):
        raise FormatError(f"{META_NAME} in {path} is not a byte string", {"path": str(path)})
    try:
        meta = json.loads(array.astype(np.uint8).tobytes().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{META_NAME} in {path} is not JSON: {exc}", {"path": str(path)}) from exc
    if not isinstance(meta, dict) or not isinstance(meta.get("model"), dict):
        raise FormatError(f"{META_NAME} in {path} has no model section", {"path": str(path)})
    return meta


def load_checkpoint(path: Union[str, Path]) -> Tuple[Encoder, ParameterRegistry]:
    """Rebuild the model described by the checkpoint and fill in its weights.

    The whole file is decoded and checked against the rebuilt registry before any
    weight is assigned.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read checkpoint {path}: {exc}", {"path": str(path)}) from exc
    records = _read_records(data, path)
    if not records or records[0].name != META_NAME or records[0].tag.kind is not TagKind.META:
        raise FormatError(f"{path} has no {META_NAME} record", {"path": str(path)})
    meta = _decode_meta(records[0].array, path)

    model, registry = build_model(ModelConfig.parse(meta["model"]))
    if meta.get("peft") is not None:
        apply_peft(model, registry, PeftConfig.parse(meta["peft"]))

    tensors: Dict[str, _Record] = {r.name: r for r in records[1:]}
    missing = sorted(set(registry.names()) - set(tensors))
    extra = sorted(set(tensors) - set(registry.names()))
    if missing or extra:
        raise FormatError("checkpoint tensors do not match the model", {"missing": missing, "unexpected": extra})
    for entry in registry:
        record = tensors[entry.name]
        if record.tag != entry.tag or record.array.shape != entry.tensor.shape:
            raise FormatError(
                f"tensor {entry.name} does not match the model layout",
                {"name": entry.name, "shape": list(record.array.shape), "expected": list(entry.tensor.shape)},
            )
    for entry in registry:
        entry.tensor.data = tensors[entry.name].array.copy()
    logger.info(f"Loaded checkpoint {path} ({len(registry)} tensors)")
    return model, registry


def expected_checkpoint_size(registry: ParameterRegistry, meta_elements: int) -> int:
    """Header + Σ(name bytes + 8·rank + 8·elements + fixed overhead), meta record included."""
    def record(name: str, rank: int, elements: int) -> int:
        return RECORD_OVERHEAD_BYTES + len(name.encode("utf-8")) + 8 * rank + 8 * elements

    total = HEADER_BYTES + record(META_NAME, 1, meta_elements)
    for entry in registry:
        total += record(entry.name, entry.tensor.ndim, entry.numel)
    return total
