from __future__ import annotations

from typing import Literal, Optional

from pydantic import Field, field_validator

from ..core.validation import ConfigModel
from ..peft.config import PeftConfig
from ..schedule.stages import ScheduleVariant


class OptimizerConfig(ConfigModel):
    """adamw(beta1, beta2, eps, weight_decay) or sgd(momentum)."""

    name: Literal["adamw", "sgd"] = "adamw"
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    weight_decay: float = Field(default=0.01, ge=0)
    momentum: float = Field(default=0.0, ge=0, lt=1)


class TrainConfig(ConfigModel):
    epochs: int = Field(ge=1)
    batch_size: int = Field(default=16, ge=1)
    base_lr: float = Field(default=2e-5, gt=0)
    seed: int = 0
    mode: Literal["ft", "progtune"] = "progtune"
    variant: str = ScheduleVariant.STANDARD.value
    peft: PeftConfig = PeftConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    embeddings_always: bool = True
    probe_block: Optional[int] = Field(default=None, ge=1)

    @field_validator("variant", mode="before")
    @classmethod
    def _known_variant(cls, value) -> str:
        return ScheduleVariant.parse(value).value

    def schedule_variant(self) -> ScheduleVariant:
        """``--mode ft`` always trains everything; otherwise the configured variant."""
        if self.mode == "ft":
            return ScheduleVariant.FULL
        return ScheduleVariant(self.variant)
