from __future__ import annotations

from typing import Literal, Tuple

from pydantic import Field, field_validator

from ..core.errors import ConfigError
from ..core.validation import ConfigModel
from ..modeling.registry import LORA_MATRICES, CountKey, TagKind

PeftKind = Literal["full", "adapter", "bitfit", "lora"]


class PeftConfig(ConfigModel):
    """Which parameters a fine-tuning regime makes trainable.

    ``bottleneck`` only matters for ``adapter``; ``rank``, ``alpha`` and ``targets``
    only for ``lora``.
    """

    kind: PeftKind = "full"
    bottleneck: int = Field(default=64, ge=1)
    rank: int = Field(default=8, ge=1)
    alpha: float = Field(default=16.0, gt=0)
    targets: Tuple[str, ...] = ("Wq", "Wv")

    @field_validator("targets")
    @classmethod
    def _known_targets(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        if not value:
            raise ValueError("lora targets must not be empty")
        unknown = [t for t in value if t not in LORA_MATRICES]
        if unknown:
            raise ValueError(f"unknown lora targets {unknown}; choose from {list(LORA_MATRICES)}")
        # canonical order keeps parse -> dump -> parse stable
        return tuple(m for m in LORA_MATRICES if m in value)

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    def check_width(self, hidden_size: int) -> None:
        """Adapter bottleneck and LoRA rank must stay below the hidden width."""
        if self.kind == "adapter" and self.bottleneck >= hidden_size:
            raise ConfigError(
                f"adapter bottleneck {self.bottleneck} must be in [1, {hidden_size})",
                {"bottleneck": self.bottleneck, "hidden_size": hidden_size},
            )
        if self.kind == "lora" and self.rank >= hidden_size:
            raise ConfigError(
                f"lora rank {self.rank} must be below hidden size {hidden_size}",
                {"rank": self.rank, "hidden_size": hidden_size},
            )


def selected_by_peft(key: CountKey, kind: str) -> bool:
    """Whether a parameter with this (tag, bias) key is trainable under ``kind``.

    Shared by the instantiated path (registry entries) and the analytic path
    (static counts), so the two can never disagree.
    """
    tag_kind = key.tag.kind
    if tag_kind is TagKind.HEAD:
        return True
    if kind == "full":
        return tag_kind in (TagKind.EMBEDDING, TagKind.BLOCK, TagKind.BIAS)
    if kind == "adapter":
        return tag_kind is TagKind.ADAPTER
    if kind == "lora":
        return tag_kind is TagKind.LORA
    if kind == "bitfit":
        return tag_kind is TagKind.BIAS or (tag_kind is TagKind.EMBEDDING and key.bias)
    return False
