from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import (
    TYPE_CHECKING,
    Dict,
    FrozenSet,
    Iterable,
    Iterator,
    List,
    Mapping,
    NamedTuple,
    Optional,
)

from ..core.errors import ConfigError, StateError
from ..core.tensor import Tensor

if TYPE_CHECKING:
    from ..peft.config import PeftConfig


class TagKind(str, Enum):
    META = "meta"
    EMBEDDING = "embedding"
    BLOCK = "block"
    HEAD = "head"
    ADAPTER = "adapter"
    LORA = "lora"
    BIAS = "bias"


_KIND_CODES = {
    TagKind.META: 0,
    TagKind.EMBEDDING: 1,
    TagKind.BLOCK: 2,
    TagKind.HEAD: 3,
    TagKind.ADAPTER: 4,
    TagKind.LORA: 5,
    TagKind.BIAS: 6,
}
_KINDS_BY_CODE = {code: kind for kind, code in _KIND_CODES.items()}

LORA_MATRICES = ("Wq", "Wk", "Wv", "Wo")
_MATRIX_CODES = {name: i + 1 for i, name in enumerate(LORA_MATRICES)}
_MATRICES_BY_CODE = {code: name for name, code in _MATRIX_CODES.items()}


@dataclass(frozen=True, order=True)
class ParameterTag:
    """Structural location of a parameter: E, Bᵢ, H or a PEFT sub-location of Bᵢ."""

    kind: TagKind
    block: Optional[int] = None
    matrix: Optional[str] = None

    @classmethod
    def embedding(cls) -> "ParameterTag":
        return cls(TagKind.EMBEDDING)

    @classmethod
    def head(cls) -> "ParameterTag":
        return cls(TagKind.HEAD)

    @classmethod
    def in_block(cls, index: int) -> "ParameterTag":
        return cls(TagKind.BLOCK, index)

    @classmethod
    def bias_term(cls, index: int) -> "ParameterTag":
        return cls(TagKind.BIAS, index)

    @classmethod
    def adapter_in(cls, index: int) -> "ParameterTag":
        return cls(TagKind.ADAPTER, index)

    @classmethod
    def lora_factor(cls, index: int, matrix: str) -> "ParameterTag":
        return cls(TagKind.LORA, index, matrix)

    @property
    def is_block_local(self) -> bool:
        return self.block is not None

    @property
    def code(self) -> int:
        matrix = _MATRIX_CODES.get(self.matrix, 0) if self.matrix else 0
        return _KIND_CODES[self.kind] | ((self.block or 0) << 8) | (matrix << 24)

    @classmethod
    def from_code(cls, code: int) -> "ParameterTag":
        kind = _KINDS_BY_CODE.get(code & 0xFF)
        if kind is None:
            raise ValueError(f"unknown tag kind code {code & 0xFF}")
        block = (code >> 8) & 0xFFFF
        matrix = _MATRICES_BY_CODE.get((code >> 24) & 0xFF)
        return cls(kind, block or None, matrix)

    def __str__(self) -> str:
        if self.kind is TagKind.EMBEDDING:
            return "Embedding"
        if self.kind is TagKind.HEAD:
            return "Head"
        if self.kind is TagKind.META:
            return "Meta"
        if self.kind is TagKind.BLOCK:
            return f"Block({self.block})"
        if self.kind is TagKind.BIAS:
            return f"BiasTerm(Block {self.block})"
        if self.kind is TagKind.ADAPTER:
            return f"AdapterIn(Block {self.block})"
        return f"LoraFactor(Block {self.block}, {self.matrix})"


class CountKey(NamedTuple):
    tag: ParameterTag
    bias: bool


class ParameterCounts(Mapping[CountKey, int]):
    """Element counts keyed by (tag, is-bias); the common currency of the ledger."""

    def __init__(self, counts: Mapping[CountKey, int]):
        self._counts = {key: int(value) for key, value in counts.items() if value}

    def __getitem__(self, key: CountKey) -> int:
        return self._counts[key]

    def __iter__(self) -> Iterator[CountKey]:
        return iter(sorted(self._counts))

    def __len__(self) -> int:
        return len(self._counts)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, ParameterCounts):
            return self._counts == other._counts
        return NotImplemented

    def __repr__(self) -> str:
        return f"ParameterCounts(total={self.total()}, keys={len(self)})"

    def total(self) -> int:
        return sum(self._counts.values())

    def by_kind(self) -> Dict[TagKind, int]:
        totals: Dict[TagKind, int] = {}
        for key, value in self._counts.items():
            totals[key.tag.kind] = totals.get(key.tag.kind, 0) + value
        return totals

    def block_indices(self) -> List[int]:
        return sorted({k.tag.block for k in self._counts if k.tag.block is not None})


@dataclass(eq=False)
class RegisteredParameter:
    name: str
    tensor: Tensor
    tag: ParameterTag
    bias: bool = False
    peft_trainable: bool = True

    @property
    def numel(self) -> int:
        return self.tensor.size


class ParameterRegistry:
    """Ordered map parameter-id → (tensor, tag, element count).

    ``peft`` records which fine-tuning regime has been applied; it stays ``None``
    until one of the PEFT entry points runs.
    """

    def __init__(self, num_blocks: int):
        self.num_blocks = num_blocks
        self._entries: Dict[str, RegisteredParameter] = {}
        self.peft: Optional["PeftConfig"] = None

    def register(self, name: str, tensor: Tensor, tag: ParameterTag, bias: bool = False) -> Tensor:
        if name in self._entries:
            raise StateError(f"parameter {name!r} registered twice", {"name": name})
        if tag.block is not None and not 1 <= tag.block <= self.num_blocks:
            raise ConfigError(
                f"block index {tag.block} outside [1, {self.num_blocks}]",
                {"name": name, "block": tag.block},
            )
        tensor.name = name
        self._entries[name] = RegisteredParameter(name=name, tensor=tensor, tag=tag, bias=bias)
        return tensor

    def __contains__(self, name: object) -> bool:
        return name in self._entries

    def __getitem__(self, name: str) -> RegisteredParameter:
        return self._entries[name]

    def __iter__(self) -> Iterator[RegisteredParameter]:
        return iter(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> List[str]:
        return list(self._entries)

    def tensors(self) -> Dict[str, Tensor]:
        return {name: entry.tensor for name, entry in self._entries.items()}

    def total_count(self) -> int:
        return sum(entry.numel for entry in self._entries.values())

    def counts(self, names: Optional[Iterable[str]] = None) -> ParameterCounts:
        selected = self._entries.values() if names is None else (self._entries[n] for n in names)
        totals: Dict[CountKey, int] = {}
        for entry in selected:
            key = CountKey(entry.tag, entry.bias)
            totals[key] = totals.get(key, 0) + entry.numel
        return ParameterCounts(totals)

    def block_names(self, index: int) -> List[str]:
        return [name for name, entry in self._entries.items() if entry.tag.block == index]

    def trainable_names(self) -> FrozenSet[str]:
        return frozenset(name for name, entry in self._entries.items() if entry.tensor.requires_grad)

    def set_trainable(self, names: Iterable[str]) -> None:
        """Make exactly ``names`` require grad and drop every stale gradient buffer."""
        wanted = frozenset(names)
        unknown = wanted.difference(self._entries)
        if unknown:
            raise StateError("unknown parameter ids", {"unknown": sorted(unknown)})
        for name, entry in self._entries.items():
            entry.tensor.requires_grad = name in wanted
            entry.tensor.grad = None

    def snapshot(self, names: Optional[Iterable[str]] = None) -> Dict[str, bytes]:
        selected = self._entries if names is None else names
        return {name: self._entries[name].tensor.data.tobytes() for name in selected}
