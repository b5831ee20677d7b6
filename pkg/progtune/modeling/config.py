from __future__ import annotations

from typing import Dict, Literal

from pydantic import Field, model_validator

from ..core.errors import ConfigError
from ..core.validation import ConfigModel

HeadKind = Literal["classifier", "qa_span"]


class ArchitectureDims(ConfigModel):
    """Shape of an encoder, enough to count its parameters analytically."""

    num_blocks: int = Field(ge=1)
    hidden_size: int = Field(ge=1)
    num_heads: int = Field(ge=1)
    ffn_dim: int = Field(ge=1)
    vocab_size: int = Field(ge=1)
    max_positions: int = Field(ge=1)
    type_vocab_size: int = Field(default=0, ge=0)
    num_classes: int = Field(default=2, ge=1)

    @model_validator(mode="after")
    def _heads_divide_hidden(self) -> "ArchitectureDims":
        if self.hidden_size % self.num_heads:
            raise ValueError(f"hidden_size {self.hidden_size} is not divisible by num_heads {self.num_heads}")
        return self


class ModelConfig(ConfigModel):
    num_blocks: int = Field(ge=1)
    hidden_size: int = Field(ge=1)
    num_heads: int = Field(ge=1)
    ffn_dim: int = Field(ge=1)
    vocab_size: int = Field(ge=1)
    max_positions: int = Field(ge=1)
    num_classes: int = Field(default=2, ge=1)
    head_kind: HeadKind = "classifier"
    layer_norm_eps: float = Field(default=1e-12, gt=0)
    initializer_range: float = Field(default=0.02, gt=0)

    @model_validator(mode="after")
    def _heads_divide_hidden(self) -> "ModelConfig":
        if self.hidden_size % self.num_heads:
            raise ValueError(f"hidden_size {self.hidden_size} is not divisible by num_heads {self.num_heads}")
        return self

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.num_heads

    def dims(self) -> ArchitectureDims:
        """Counting view of this config; the trainable toy model has no token-type table."""
        return ArchitectureDims(
            num_blocks=self.num_blocks,
            hidden_size=self.hidden_size,
            num_heads=self.num_heads,
            ffn_dim=self.ffn_dim,
            vocab_size=self.vocab_size,
            max_positions=self.max_positions,
            type_vocab_size=0,
            num_classes=self.num_classes,
        )


SHIPPED_ARCHITECTURES: Dict[str, ArchitectureDims] = {
    "bert-base": ArchitectureDims(
        num_blocks=12, hidden_size=768, num_heads=12, ffn_dim=3072,
        vocab_size=30522, max_positions=512, type_vocab_size=2,
    ),
    "bert-large": ArchitectureDims(
        num_blocks=24, hidden_size=1024, num_heads=16, ffn_dim=4096,
        vocab_size=30522, max_positions=512, type_vocab_size=2,
    ),
    "roberta-base": ArchitectureDims(
        num_blocks=12, hidden_size=768, num_heads=12, ffn_dim=3072,
        vocab_size=50265, max_positions=514, type_vocab_size=1,
    ),
}


def resolve_architecture(name: str, dims: ArchitectureDims | None = None) -> ArchitectureDims:
    """Look up a shipped architecture; ``custom`` (or any unknown name) needs explicit dims."""
    key = name.lower()
    if key in SHIPPED_ARCHITECTURES and dims is None:
        return SHIPPED_ARCHITECTURES[key]
    if dims is not None:
        return dims
    raise ConfigError(
        f"unknown architecture {name!r} and no explicit dims given",
        {"known": sorted(SHIPPED_ARCHITECTURES)},
    )
