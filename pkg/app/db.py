import enum
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from sqlalchemy import JSON, DateTime, Enum as SAEnum, Float, ForeignKey, Integer, String
from sqlalchemy.ext.asyncio import AsyncEngine, AsyncSession, async_sessionmaker, create_async_engine
from sqlalchemy.orm import DeclarativeBase, Mapped, mapped_column
from sqlalchemy.pool import NullPool

from app.config import config

# Create Async Engine; connections must not outlive one event loop
engine = create_async_engine(config.DATABASE_URL, echo=False, poolclass=NullPool)

# Create Async Session Factory
AsyncSessionLocal = async_sessionmaker(
    engine, class_=AsyncSession, expire_on_commit=False
)


class Base(DeclarativeBase):
    pass


class RunKind(enum.Enum):
    TRAIN = "TRAIN"
    ABLATE = "ABLATE"


class TrainingRun(Base):
    __tablename__ = "training_runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, index=True)
    name: Mapped[str] = mapped_column(String, index=True)
    kind: Mapped[RunKind] = mapped_column(SAEnum(RunKind))
    mode: Mapped[str] = mapped_column(String)
    variant: Mapped[str] = mapped_column(String)
    peft_kind: Mapped[str] = mapped_column(String)
    seed: Mapped[int] = mapped_column(Integer)
    epochs: Mapped[int] = mapped_column(Integer)
    run_config: Mapped[Dict[str, Any]] = mapped_column(JSON)
    cumulative_updated: Mapped[int] = mapped_column(Integer)
    reduction: Mapped[Optional[float]] = mapped_column(Float, nullable=True)
    ledger_breakdown: Mapped[Optional[List[Dict[str, int]]]] = mapped_column(JSON, nullable=True)
    created_at: Mapped[datetime] = mapped_column(
        DateTime(timezone=True), default=lambda: datetime.now(timezone.utc)
    )


class EpochMetric(Base):
    __tablename__ = "epoch_metrics"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, index=True)
    run_id: Mapped[int] = mapped_column(Integer, ForeignKey("training_runs.id"), index=True)
    epoch: Mapped[int] = mapped_column(Integer)
    loss: Mapped[float] = mapped_column(Float)
    train_acc: Mapped[float] = mapped_column(Float)
    eval_acc: Mapped[float] = mapped_column(Float)
    eval_exact_match: Mapped[Optional[float]] = mapped_column(Float, nullable=True)
    lr_start: Mapped[float] = mapped_column(Float)
    updated_params: Mapped[int] = mapped_column(Integer)


async def init_db(bind: Optional[AsyncEngine] = None):
    async with (bind or engine).begin() as conn:
        await conn.run_sync(Base.metadata.create_all)
