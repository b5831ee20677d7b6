from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple

from ..core.errors import ConfigError, StateError
from ..modeling.encoder import Adapter, Encoder, Linear, LoraFactors, ParameterFactory
from ..modeling.registry import CountKey, ParameterRegistry, ParameterTag, TagKind
from .config import PeftConfig, selected_by_peft

logger = logging.getLogger(__name__)

_MATRIX_ATTRS = {"Wq": "query", "Wk": "key", "Wv": "value", "Wo": "output"}


@dataclass(frozen=True)
class PeftGroups:
    """Trainable ids split into block-divisible groups and the always-on remainder."""

    blocks: Dict[int, Tuple[str, ...]]
    head: Tuple[str, ...]
    embedding: Tuple[str, ...] = field(default=())

    def all_names(self) -> Tuple[str, ...]:
        names = [n for i in sorted(self.blocks) for n in self.blocks[i]]
        return tuple(names) + self.head + self.embedding


def _ensure_fresh(model: Encoder, registry: ParameterRegistry) -> None:
    if registry.peft is not None or model.peft_kind != "none":
        applied = registry.peft.kind if registry.peft is not None else model.peft_kind
        raise StateError(f"a fine-tuning regime ({applied}) is already applied", {"applied": applied})


def _peft_names(registry: ParameterRegistry, kind: str) -> Tuple[str, ...]:
    return tuple(
        entry.name for entry in registry if selected_by_peft(CountKey(entry.tag, entry.bias), kind)
    )


def _finish(model: Encoder, registry: ParameterRegistry, peft: PeftConfig) -> None:
    selected = _peft_names(registry, peft.kind)
    for entry in registry:
        entry.peft_trainable = entry.name in selected
    registry.set_trainable(selected)
    registry.peft = peft
    model.peft_kind = peft.kind
    trainable = registry.counts(selected).total()
    logger.info(f"Applied {peft.kind}: {trainable} of {registry.total_count()} parameters trainable")


def apply_full(model: Encoder, registry: ParameterRegistry) -> None:
    """Plain fine-tuning: every backbone parameter stays trainable."""
    _ensure_fresh(model, registry)
    _finish(model, registry, PeftConfig(kind="full"))


def apply_adapter(model: Encoder, registry: ParameterRegistry, bottleneck: int, seed: int = 0) -> None:
    """Insert two bottleneck adapters per block, after attention and after the FFN.

    The up-projection starts at zero so the adapted model computes exactly what the
    base model did.
    """
    _ensure_fresh(model, registry)
    d = model.config.hidden_size
    if not 1 <= bottleneck < d:
        raise ConfigError(
            f"adapter bottleneck {bottleneck} must be in [1, {d})",
            {"bottleneck": bottleneck, "hidden_size": d},
        )
    factory = ParameterFactory(registry, seed, model.config.initializer_range)
    for block in model.blocks:
        tag = ParameterTag.adapter_in(block.index)
        adapters = []
        for site in ("attention_adapter", "ffn_adapter"):
            prefix = f"blocks.{block.index}.{site}"
            down = factory.linear(f"{prefix}.down", d, bottleneck, tag, tag)
            up = factory.linear(f"{prefix}.up", bottleneck, d, tag, tag, zero_weight=True)
            adapters.append(Adapter(down, up))
        block.attention_adapter, block.ffn_adapter = adapters
    _finish(model, registry, PeftConfig(kind="adapter", bottleneck=bottleneck))


def apply_bitfit(model: Encoder, registry: ParameterRegistry) -> None:
    """Selection only: biases, the embedding layer-norm shift and the head train."""
    _ensure_fresh(model, registry)
    _finish(model, registry, PeftConfig(kind="bitfit"))


def apply_lora(
    model: Encoder,
    registry: ParameterRegistry,
    rank: int,
    alpha: float,
    targets: Sequence[str] = ("Wq", "Wv"),
    seed: int = 0,
) -> None:
    """Attach A [in×r] (uniform ±1/√in) and B [r×out] (zeros) to each target matrix."""
    _ensure_fresh(model, registry)
    peft = PeftConfig.parse({"kind": "lora", "rank": rank, "alpha": alpha, "targets": tuple(targets)})
    peft.check_width(model.config.hidden_size)
    factory = ParameterFactory(registry, seed, model.config.initializer_range)
    for block in model.blocks:
        for matrix in peft.targets:
            attr = _MATRIX_ATTRS[matrix]
            linear: Linear = getattr(block.attention, attr)
            tag = ParameterTag.lora_factor(block.index, matrix)
            prefix = f"blocks.{block.index}.attention.{attr}"
            a = factory.uniform(f"{prefix}.lora_a", (linear.in_features, rank), tag, 1.0 / math.sqrt(linear.in_features))
            b = factory.zeros(f"{prefix}.lora_b", (rank, linear.out_features), tag, bias=False)
            linear.lora = LoraFactors(a=a, b=b, scaling=peft.scaling)
    _finish(model, registry, peft)


def apply_peft(model: Encoder, registry: ParameterRegistry, peft: PeftConfig, seed: int = 0) -> None:
    peft = PeftConfig.parse(peft)
    if peft.kind == "full":
        apply_full(model, registry)
    elif peft.kind == "adapter":
        apply_adapter(model, registry, peft.bottleneck, seed=seed)
    elif peft.kind == "bitfit":
        apply_bitfit(model, registry)
    else:
        apply_lora(model, registry, peft.rank, peft.alpha, peft.targets, seed=seed)


def peft_trainable_set(registry: ParameterRegistry, peft: Optional[PeftConfig] = None) -> PeftGroups:
    """Group the regime's trainable ids per block, plus head and embedding remainders."""
    if registry.peft is None:
        raise StateError("no fine-tuning regime has been applied to this registry")
    if peft is not None and PeftConfig.parse(peft).kind != registry.peft.kind:
        raise StateError(
            f"registry carries {registry.peft.kind}, not {PeftConfig.parse(peft).kind}",
            {"applied": registry.peft.kind},
        )
    kind = registry.peft.kind
    blocks: Dict[int, list] = {i: [] for i in range(1, registry.num_blocks + 1)}
    head, embedding = [], []
    for entry in registry:
        if not selected_by_peft(CountKey(entry.tag, entry.bias), kind):
            continue
        if entry.tag.kind is TagKind.HEAD:
            head.append(entry.name)
        elif entry.tag.kind is TagKind.EMBEDDING:
            embedding.append(entry.name)
        else:
            blocks[entry.tag.block].append(entry.name)
    return PeftGroups(
        blocks={i: tuple(names) for i, names in blocks.items()},
        head=tuple(head),
        embedding=tuple(embedding),
    )


def _lora_linears(model: Encoder) -> Iterable[Linear]:
    for block in model.blocks:
        for linear in block.attention.projections().values():
            if linear.lora is not None:
                yield linear


def merge_lora(model: Encoder) -> Encoder:
    """Copy of ``model`` with W' = W + scaling·A·B folded in and the factors removed."""
    merged = copy.deepcopy(model)
    for linear in _lora_linears(merged):
        factors = linear.lora
        linear.weight.data = linear.weight.data + factors.scaling * (factors.a.data @ factors.b.data)
        linear.lora = None
    merged.peft_kind = "none"
    return merged


def count_trainable(registry: ParameterRegistry) -> int:
    return sum(registry[n].numel for n in registry.trainable_names())
