from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import FrozenSet, Tuple

from ..core.errors import ConfigError, ContractError
from ..modeling.registry import ParameterRegistry
from ..peft.methods import PeftGroups

logger = logging.getLogger(__name__)


class ScheduleVariant(str, Enum):
    STANDARD = "standard"
    WOLB = "wolb"
    FROMHB = "fromhb"
    FULL = "full"
    PROBE = "probe"

    @classmethod
    def parse(cls, value: "str | ScheduleVariant") -> "ScheduleVariant":
        if isinstance(value, cls):
            return value
        aliases = {
            "without_low_blocks": cls.WOLB,
            "from_high_blocks": cls.FROMHB,
            "ft": cls.FULL,
        }
        key = str(value).lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(
                f"unknown schedule variant {value!r}",
                {"known": [v.value for v in cls] + sorted(aliases)},
            ) from None


@dataclass(frozen=True)
class PartitionPlan:
    """P₁…P_T as inclusive (first, last) block ranges, lowest blocks first."""

    num_blocks: int
    parts: Tuple[Tuple[int, int], ...]

    @property
    def T(self) -> int:
        return len(self.parts)

    def blocks_of(self, part: int) -> Tuple[int, ...]:
        first, last = self.parts[part - 1]
        return tuple(range(first, last + 1))


def partition_blocks(L: int, T: int) -> PartitionPlan:
    """Split blocks 1..L into T contiguous parts of ⌊L/T⌋; the top part takes the remainder."""
    if L < 1 or not 1 <= T <= L:
        raise ConfigError(f"need 1 <= T <= L, got T={T}, L={L}", {"L": L, "T": T})
    size = L // T
    parts = []
    for t in range(1, T + 1):
        first = (t - 1) * size + 1
        last = L if t == T else t * size
        parts.append((first, last))
    return PartitionPlan(num_blocks=L, parts=tuple(parts))


@dataclass(frozen=True)
class StageSchedule:
    """S₁…S_T as sets of part indices; the head is implicit in every stage."""

    variant: ScheduleVariant
    plan: PartitionPlan
    stages: Tuple[FrozenSet[int], ...]
    embeddings_always: bool = True

    @property
    def num_epochs(self) -> int:
        return len(self.stages)

    def _check_epoch(self, t: int) -> None:
        if not 1 <= t <= self.num_epochs:
            raise ContractError(
                f"epoch {t} outside [1, {self.num_epochs}]", {"epoch": t, "epochs": self.num_epochs}
            )

    def parts(self, t: int) -> Tuple[int, ...]:
        self._check_epoch(t)
        return tuple(sorted(self.stages[t - 1]))

    def blocks(self, t: int) -> Tuple[int, ...]:
        return tuple(b for p in self.parts(t) for b in self.plan.blocks_of(p))

    def embeddings_trainable(self, t: int) -> bool:
        """Embeddings train every epoch unless overridden; then they follow the lowest part."""
        self._check_epoch(t)
        return self.embeddings_always or 1 in self.stages[t - 1]


def build_stages(plan: PartitionPlan, variant: "str | ScheduleVariant", embeddings_always: bool = True) -> StageSchedule:
    variant = ScheduleVariant.parse(variant)
    T = plan.T
    if variant is ScheduleVariant.STANDARD:
        stages = [frozenset(range(t, T + 1)) for t in range(1, T + 1)]
    elif variant is ScheduleVariant.WOLB:
        stages = [frozenset(range(t + 1, T + 1)) for t in range(1, T + 1)]
    elif variant is ScheduleVariant.FROMHB:
        stages = [frozenset(range(T - t + 1, T + 1)) for t in range(1, T + 1)]
    elif variant is ScheduleVariant.FULL:
        stages = [frozenset(range(1, T + 1))] * T
    else:
        raise ConfigError("probe schedules are built with build_probe_schedule", {"variant": variant.value})
    return StageSchedule(variant=variant, plan=plan, stages=tuple(stages), embeddings_always=embeddings_always)


def build_probe_schedule(L: int, epochs: int, block: int) -> StageSchedule:
    """Every epoch trains Embedding ∪ Block(block) ∪ Head."""
    if not 1 <= block <= L:
        raise ContractError(f"probe block {block} outside [1, {L}]", {"block": block, "L": L})
    if epochs < 1:
        raise ConfigError("epochs must be >= 1", {"epochs": epochs})
    plan = partition_blocks(L, L)
    return StageSchedule(
        variant=ScheduleVariant.PROBE,
        plan=plan,
        stages=tuple(frozenset({block}) for _ in range(epochs)),
        embeddings_always=True,
    )


def make_schedule(
    num_blocks: int,
    epochs: int,
    variant: "str | ScheduleVariant" = ScheduleVariant.STANDARD,
    embeddings_always: bool = True,
    probe_block: int | None = None,
) -> StageSchedule:
    """Schedule for a run of ``epochs`` epochs, one stage per epoch.

    Plain fine-tuning keeps every block in one part, so it is not limited to
    ``epochs <= num_blocks``.
    """
    variant = ScheduleVariant.parse(variant)
    if variant is ScheduleVariant.PROBE:
        if probe_block is None:
            raise ConfigError("probe schedule needs a block index")
        return build_probe_schedule(num_blocks, epochs, probe_block)
    if variant is ScheduleVariant.FULL:
        if epochs < 1:
            raise ConfigError("epochs must be >= 1", {"epochs": epochs})
        plan = partition_blocks(num_blocks, 1)
        return StageSchedule(
            variant=variant,
            plan=plan,
            stages=tuple(frozenset({1}) for _ in range(epochs)),
            embeddings_always=embeddings_always,
        )
    schedule = build_stages(partition_blocks(num_blocks, epochs), variant, embeddings_always)
    logger.debug(f"{variant.value} schedule over {num_blocks} blocks: {[sorted(s) for s in schedule.stages]}")
    return schedule


def trainable_set(schedule: StageSchedule, t: int, registry: ParameterRegistry, groups: PeftGroups) -> FrozenSet[str]:
    """Parameter ids that may change during epoch ``t``."""
    names = set(groups.head)
    for block in schedule.blocks(t):
        names.update(groups.blocks.get(block, ()))
    if schedule.embeddings_trainable(t):
        names.update(groups.embedding)
    unknown = names.difference(registry.names())
    if unknown:
        raise ContractError("peft groups name parameters missing from the registry", {"unknown": sorted(unknown)})
    return frozenset(names)
