from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Tuple, Union

from ..modeling.registry import CountKey, ParameterCounts, ParameterRegistry, TagKind
from ..peft.config import PeftConfig, selected_by_peft
from .stages import ScheduleVariant, StageSchedule, make_schedule


@dataclass(frozen=True)
class UpdateLedger:
    """Elements that may change per epoch, with a per-tag-class breakdown."""

    per_epoch: Tuple[int, ...]
    breakdown: Tuple[Dict[str, int], ...]

    @property
    def cumulative(self) -> int:
        return sum(self.per_epoch)

    @property
    def epochs(self) -> int:
        return len(self.per_epoch)

    def rows(self) -> Iterator[Tuple[int, str, int]]:
        """(epoch, tag class, count) rows, epochs from 1."""
        for epoch, classes in enumerate(self.breakdown, start=1):
            for tag_class in sorted(classes):
                yield epoch, tag_class, classes[tag_class]

    def reduction_against(self, baseline: "UpdateLedger") -> float:
        if baseline.cumulative == 0:
            return 0.0
        return float(1 - Fraction(self.cumulative, baseline.cumulative))


def _epoch_selected(key: CountKey, schedule: StageSchedule, t: int, blocks: frozenset, kind: str) -> bool:
    if not selected_by_peft(key, kind):
        return False
    if key.tag.kind is TagKind.HEAD:
        return True
    if key.tag.kind is TagKind.EMBEDDING:
        return schedule.embeddings_trainable(t)
    return key.tag.block in blocks


def count_updated_params(
    schedule: StageSchedule,
    source: Union[ParameterRegistry, ParameterCounts],
    peft: Optional[PeftConfig] = None,
) -> UpdateLedger:
    """Sum of trainable-set sizes per epoch, over a registry or static counts."""
    if isinstance(source, ParameterRegistry):
        counts = source.counts()
        if peft is None:
            peft = source.peft
    else:
        counts = source
    kind = PeftConfig.parse(peft).kind if peft is not None else "full"

    per_epoch: List[int] = []
    breakdown: List[Dict[str, int]] = []
    for t in range(1, schedule.num_epochs + 1):
        blocks = frozenset(schedule.blocks(t))
        classes: Dict[str, int] = {}
        for key, n in counts.items():
            if _epoch_selected(key, schedule, t, blocks, kind):
                classes[key.tag.kind.value] = classes.get(key.tag.kind.value, 0) + n
        per_epoch.append(sum(classes.values()))
        breakdown.append(classes)
    return UpdateLedger(per_epoch=tuple(per_epoch), breakdown=tuple(breakdown))


def predicted_reduction(
    L: int,
    T: int,
    per_tag_counts: ParameterCounts,
    peft: Optional[PeftConfig] = None,
    variant: "str | ScheduleVariant" = ScheduleVariant.STANDARD,
) -> float:
    """1 − (Progtuning cumulative / plain fine-tuning cumulative) over T epochs."""
    progressive = count_updated_params(make_schedule(L, T, variant), per_tag_counts, peft)
    baseline = count_updated_params(make_schedule(L, T, ScheduleVariant.FULL), per_tag_counts, peft)
    return progressive.reduction_against(baseline)
