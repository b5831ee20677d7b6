from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import Field, model_validator

from ..core.errors import ContractError, IndexOutOfRangeError, LengthError
from ..core.validation import ConfigModel

PAD_ID = 0
START_ID = 1

TaskKind = Literal["keyword_detect", "majority_class", "depth_pattern", "span_extract"]


class TaskSpec(ConfigModel):
    kind: TaskKind = "keyword_detect"
    vocab_size: int = Field(default=32, ge=2)
    seq_len: int = Field(default=8, ge=2)
    num_classes: int = Field(default=2, ge=2)
    train_n: int = Field(default=256, ge=1)
    eval_n: int = Field(default=64, ge=1)
    seed: int = 0
    min_len: Optional[int] = Field(default=None, ge=2)

    @model_validator(mode="after")
    def _lengths(self) -> "TaskSpec":
        if self.min_len is not None and self.min_len > self.seq_len:
            raise ValueError(f"min_len {self.min_len} exceeds seq_len {self.seq_len}")
        if self.kind != "majority_class" and self.num_classes != 2:
            raise ValueError(f"{self.kind} is a binary task, num_classes must be 2")
        return self

    @property
    def shortest(self) -> int:
        return self.min_len if self.min_len is not None else max(2, self.seq_len // 2 + 1)


@dataclass(frozen=True)
class Split:
    """Padded token ids [n×s], mask [n×s] (True on real tokens) and labels.

    Labels are [n] class ids, or [n×2] (start, end) positions for span tasks.
    """

    token_ids: np.ndarray
    mask: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.token_ids.shape[0])

    def take(self, index: np.ndarray) -> "Split":
        return Split(self.token_ids[index], self.mask[index], self.labels[index])

    def batches(self, batch_size: int, order: Optional[np.ndarray] = None) -> Iterable["Split"]:
        order = np.arange(len(self)) if order is None else order
        for start in range(0, len(self), batch_size):
            yield self.take(order[start:start + batch_size])


@dataclass(frozen=True)
class TaskDataset:
    spec: TaskSpec
    train: Split
    eval: Split


TokenSequence = Union[str, Sequence[int]]


def _as_ids(sequence: TokenSequence) -> List[int]:
    if isinstance(sequence, str):
        return [int(tok) for tok in sequence.split()]
    return [int(tok) for tok in sequence]


def tokenize_batch(sequences: Sequence[TokenSequence], pad_to: int, vocab_size: Optional[int] = None):
    """Right-pad with id 0 to ``pad_to``; returns (ids [b×s] int64, mask [b×s] bool).

    Sequences are id lists or whitespace-separated id strings such as ``"5 7"``.
    """
    if len(sequences) == 0:
        raise ContractError("cannot tokenize an empty batch")
    rows = [_as_ids(seq) for seq in sequences]
    ids = np.full((len(rows), pad_to), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(rows), pad_to), dtype=bool)
    for r, row in enumerate(rows):
        if len(row) > pad_to:
            raise LengthError(
                f"sequence {r} has {len(row)} tokens, pad_to is {pad_to}",
                {"row": r, "length": len(row), "pad_to": pad_to},
            )
        if row and (min(row) < 0 or (vocab_size is not None and max(row) >= vocab_size)):
            raise IndexOutOfRangeError(
                f"sequence {r} has ids outside [0, {vocab_size})", {"row": r, "vocab_size": vocab_size}
            )
        ids[r, : len(row)] = row
        mask[r, : len(row)] = True
    return ids, mask
