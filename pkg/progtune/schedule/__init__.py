from .ledger import UpdateLedger, count_updated_params, predicted_reduction
from .stages import (
    PartitionPlan,
    ScheduleVariant,
    StageSchedule,
    build_probe_schedule,
    build_stages,
    make_schedule,
    partition_blocks,
    trainable_set,
)

__all__ = [
    "PartitionPlan",
    "ScheduleVariant",
    "StageSchedule",
    "UpdateLedger",
    "build_probe_schedule",
    "build_stages",
    "count_updated_params",
    "make_schedule",
    "partition_blocks",
    "predicted_reduction",
    "trainable_set",
]
