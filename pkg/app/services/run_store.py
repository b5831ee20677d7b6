from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

from sqlalchemy.ext.asyncio import AsyncSession
from sqlalchemy.future import select

from app.db import EpochMetric, RunKind, TrainingRun
from progtune.core.errors import StateError
from progtune.schedule.ledger import UpdateLedger
from progtune.training.config import TrainConfig
from progtune.training.loop import MetricsRecord, average_metrics

logger = logging.getLogger(__name__)


@dataclass
class StoredRun:
    """A persisted run rebuilt into the library's record types."""

    run: TrainingRun
    metrics: MetricsRecord
    ledger: UpdateLedger


async def persist_run(
    session: AsyncSession,
    name: str,
    kind: RunKind,
    run_config: Dict[str, Any],
    metrics: MetricsRecord,
    ledger: UpdateLedger,
    reduction: Optional[float] = None,
) -> TrainingRun:
    """Persist the run row and one row per epoch."""
    train = run_config.get("train", {})
    peft = train.get("peft") or {}
    run = TrainingRun(
        name=name,
        kind=kind,
        mode=train.get("mode", "progtune"),
        variant=TrainConfig.parse(train).schedule_variant().value if train else "standard",
        peft_kind=peft.get("kind", "full"),
        seed=int(train.get("seed", 0)),
        epochs=ledger.epochs,
        run_config=run_config,
        cumulative_updated=ledger.cumulative,
        reduction=reduction,
        ledger_breakdown=[dict(classes) for classes in ledger.breakdown],
    )
    session.add(run)
    await session.flush()

    for i in range(metrics.epochs):
        session.add(
            EpochMetric(
                run_id=run.id,
                epoch=i + 1,
                loss=metrics.loss[i],
                train_acc=metrics.train_acc[i],
                eval_acc=metrics.eval_acc[i],
                eval_exact_match=metrics.eval_exact_match[i] if metrics.eval_exact_match else None,
                lr_start=metrics.lr_start[i],
                updated_params=ledger.per_epoch[i],
            )
        )

    await session.commit()
    await session.refresh(run)
    logger.info(f"Stored run {run.id} ({name}, {kind.value}) with {metrics.epochs} epochs")
    return run


async def fetch_run(session: AsyncSession, run_id: int) -> Optional[StoredRun]:
    result = await session.execute(select(TrainingRun).where(TrainingRun.id == run_id))
    run = result.scalars().first()
    if run is None:
        return None
    result = await session.execute(
        select(EpochMetric).where(EpochMetric.run_id == run_id).order_by(EpochMetric.epoch)
    )
    rows = list(result.scalars().all())
    metrics = MetricsRecord(
        loss=[r.loss for r in rows],
        train_acc=[r.train_acc for r in rows],
        eval_acc=[r.eval_acc for r in rows],
        eval_exact_match=[r.eval_exact_match for r in rows],
        lr_start=[r.lr_start for r in rows],
    )
    ledger = UpdateLedger(
        per_epoch=tuple(r.updated_params for r in rows),
        breakdown=tuple(run.ledger_breakdown or [{} for _ in rows]),
    )
    return StoredRun(run=run, metrics=metrics, ledger=ledger)


async def list_runs(session: AsyncSession, name: Optional[str] = None) -> List[TrainingRun]:
    query = select(TrainingRun).order_by(TrainingRun.id)
    if name is not None:
        query = query.where(TrainingRun.name == name)
    result = await session.execute(query)
    return list(result.scalars().all())


def merge_stored(runs: Sequence[StoredRun]) -> StoredRun:
    """Mean metrics across repetitions; the ledger must agree exactly across them."""
    if not runs:
        raise StateError("no runs to merge")
    ledgers = {r.ledger.per_epoch for r in runs}
    if len(ledgers) != 1:
        raise StateError("repetitions disagree on the update ledger", {"ledgers": sorted(ledgers)})
    merged = average_metrics([r.metrics for r in runs])
    return StoredRun(run=runs[0].run, metrics=merged, ledger=runs[0].ledger)
