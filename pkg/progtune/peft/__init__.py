from .config import PeftConfig, PeftKind, selected_by_peft
from .methods import (
    PeftGroups,
    apply_adapter,
    apply_bitfit,
    apply_full,
    apply_lora,
    apply_peft,
    count_trainable,
    merge_lora,
    peft_trainable_set,
)

__all__ = [
    "PeftConfig",
    "PeftGroups",
    "PeftKind",
    "apply_adapter",
    "apply_bitfit",
    "apply_full",
    "apply_lora",
    "apply_peft",
    "count_trainable",
    "merge_lora",
    "peft_trainable_set",
    "selected_by_peft",
]
