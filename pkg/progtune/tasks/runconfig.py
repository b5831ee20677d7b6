from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Union

import yaml
from pydantic import Field, model_validator

from ..core.errors import ConfigError, StorageError
from ..core.validation import ConfigModel
from ..modeling.config import ModelConfig
from ..training.config import TrainConfig
from .data import TaskSpec

logger = logging.getLogger(__name__)


class ScheduleConfig(ConfigModel):
    stages: int = Field(ge=1)


class OutputConfig(ConfigModel):
    # None defers to the process-level output directory
    directory: Optional[str] = None
    run_name: str = "run"
    format: Literal["csv", "jsonl"] = "csv"
    checkpoint: bool = False


class RunConfig(ConfigModel):
    """One file fully determines a run: model, task, training, schedule, outputs."""

    model: ModelConfig
    task: TaskSpec
    train: TrainConfig
    schedule: ScheduleConfig
    output: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _consistent(self) -> "RunConfig":
        problems = []
        if self.schedule.stages != self.train.epochs:
            problems.append(f"schedule.stages ({self.schedule.stages}) must equal train.epochs ({self.train.epochs})")
        if self.task.vocab_size != self.model.vocab_size:
            problems.append(f"task.vocab_size ({self.task.vocab_size}) differs from model.vocab_size ({self.model.vocab_size})")
        if self.task.seq_len > self.model.max_positions:
            problems.append(f"task.seq_len ({self.task.seq_len}) exceeds model.max_positions ({self.model.max_positions})")
        if self.task.kind == "span_extract":
            if self.model.head_kind != "qa_span":
                problems.append("span_extract needs model.head_kind qa_span")
        else:
            if self.model.head_kind != "classifier":
                problems.append(f"{self.task.kind} needs model.head_kind classifier")
            elif self.task.num_classes != self.model.num_classes:
                problems.append(
                    f"task.num_classes ({self.task.num_classes}) differs from model.num_classes ({self.model.num_classes})"
                )
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def with_overrides(self, **train_overrides: Any) -> "RunConfig":
        """Copy with ``train`` fields replaced (CLI flags); ``None`` values are ignored."""
        updates = {k: v for k, v in train_overrides.items() if v is not None}
        if not updates:
            return self
        data = self.to_dict()
        data["train"].update(updates)
        return RunConfig.parse(data)

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot read run config {path}: {exc}", {"path": str(path)}) from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"run config {path} is not valid YAML", {"path": str(path), "reason": str(exc)}) from exc
    if not isinstance(data, Mapping):
        raise ConfigError(f"run config {path} must be a mapping of sections", {"path": str(path)})
    config = RunConfig.parse(data)
    logger.debug(f"Loaded run config {path}")
    return config


def dump_run_config(config: RunConfig, path: Optional[Union[str, Path]] = None) -> str:
    text = yaml.safe_dump(config.to_dict(), sort_keys=False)
    if path is not None:
        try:
            Path(path).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise StorageError(f"cannot write run config {path}: {exc}", {"path": str(path)}) from exc
    return text
