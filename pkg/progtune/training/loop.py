from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..core import ops
from ..core.errors import ConfigError, ContractError, DivergenceError, FreezeViolationError
from ..core.tensor import Tensor, backward
from ..modeling.config import ModelConfig
from ..modeling.encoder import Encoder, build_model, forward
from ..modeling.registry import ParameterRegistry
from ..peft.methods import apply_peft, peft_trainable_set
from ..schedule.ledger import UpdateLedger
from ..schedule.stages import StageSchedule, build_probe_schedule, trainable_set
from ..tasks.data import Split, TaskDataset
from .config import TrainConfig
from .optim import OptimizerState, lr_at, optimizer_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalMetrics:
    accuracy: float
    exact_match: Optional[float] = None


@dataclass
class MetricsRecord:
    """Per-epoch curves of one run; ``lr_trace`` covers steps 0..total."""

    loss: List[float] = field(default_factory=list)
    train_acc: List[float] = field(default_factory=list)
    eval_acc: List[float] = field(default_factory=list)
    eval_exact_match: List[Optional[float]] = field(default_factory=list)
    lr_start: List[float] = field(default_factory=list)
    epoch_seconds: List[float] = field(default_factory=list)
    lr_trace: List[float] = field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.loss)


def _span_logits(logits: Tensor) -> Tuple[Tensor, Tensor]:
    return ops.select(logits, 0, axis=2), ops.select(logits, 1, axis=2)


def compute_loss(model: Encoder, batch: Split) -> Tensor:
    logits = forward(model, batch.token_ids, batch.mask)
    if model.config.head_kind == "classifier":
        return ops.softmax_cross_entropy(logits, batch.labels)
    start, end = _span_logits(logits)
    start_loss = ops.softmax_cross_entropy(start, batch.labels[:, 0], batch.mask)
    end_loss = ops.softmax_cross_entropy(end, batch.labels[:, 1], batch.mask)
    return ops.mul(ops.add(start_loss, end_loss), 0.5)


def predict(model: Encoder, split: Split, batch_size: int = 64) -> np.ndarray:
    """Class ids [n], or (start, end) positions [n×2] for span heads."""
    outputs = []
    for batch in split.batches(batch_size):
        logits = forward(model, batch.token_ids, batch.mask).data
        if model.config.head_kind == "classifier":
            outputs.append(logits.argmax(axis=-1))
        else:
            masked = np.where(batch.mask[:, :, None], logits, -np.inf)
            outputs.append(masked.argmax(axis=1))
    return np.concatenate(outputs, axis=0)


def evaluate(model: Encoder, split: Split, batch_size: int = 64) -> EvalMetrics:
    """Accuracy; for span heads accuracy of the start position plus exact match of both ends."""
    if len(split) == 0:
        raise ContractError("cannot evaluate on an empty split")
    predicted = predict(model, split, batch_size)
    if model.config.head_kind == "classifier":
        return EvalMetrics(accuracy=float(np.mean(predicted == split.labels)))
    hits = predicted == split.labels
    return EvalMetrics(accuracy=float(np.mean(hits[:, 0])), exact_match=float(np.mean(hits.all(axis=1))))


def _frozen_snapshot(registry: ParameterRegistry, trainable: frozenset) -> Dict[str, bytes]:
    return registry.snapshot(name for name in registry.names() if name not in trainable)


def _verify_frozen(registry: ParameterRegistry, before: Dict[str, bytes], epoch: int) -> None:
    changed = [name for name, data in before.items() if registry[name].tensor.data.tobytes() != data]
    if changed:
        logger.error(f"Epoch {epoch}: {len(changed)} frozen parameters changed")
        raise FreezeViolationError(
            f"frozen parameters changed during epoch {epoch}", {"epoch": epoch, "parameters": changed}
        )


def train_run(
    model: Encoder,
    registry: ParameterRegistry,
    schedule: StageSchedule,
    task: TaskDataset,
    config: Union[TrainConfig, Mapping],
) -> Tuple[MetricsRecord, UpdateLedger]:
    """Train one epoch per stage, freezing everything outside the stage's trainable set.

    The returned ledger is instrumented: per epoch it counts the parameters that
    were allowed to change, after checking that every other parameter is
    bit-identical across the epoch.
    """
    config = TrainConfig.parse(config)
    if schedule.num_epochs != config.epochs:
        raise ConfigError(
            f"schedule has {schedule.num_epochs} stages for {config.epochs} epochs",
            {"stages": schedule.num_epochs, "epochs": config.epochs},
        )
    if len(task.train) == 0:
        raise ContractError("training split is empty")

    groups = peft_trainable_set(registry)
    params = registry.tensors()
    rng = np.random.default_rng(config.seed)
    state = OptimizerState(config=config.optimizer)
    steps_per_epoch = math.ceil(len(task.train) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch

    metrics = MetricsRecord()
    per_epoch: List[int] = []
    breakdown: List[Dict[str, int]] = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        names = trainable_set(schedule, epoch, registry, groups)
        registry.set_trainable(names)
        leaves = [params[n] for n in sorted(names)]
        frozen_before = _frozen_snapshot(registry, names)
        metrics.lr_start.append(lr_at(step, total_steps, config.base_lr))

        losses = []
        order = rng.permutation(len(task.train))
        for batch in task.train.batches(config.batch_size, order):
            lr = lr_at(step, total_steps, config.base_lr)
            metrics.lr_trace.append(lr)
            for leaf in leaves:
                leaf.grad = None
            loss = compute_loss(model, batch)
            value = loss.item()
            if not math.isfinite(value):
                logger.error(f"Loss became {value} at step {step}")
                raise DivergenceError(f"training diverged at step {step}", {"step": step, "epoch": epoch})
            backward(loss, leaves)
            optimizer_step(params, names, state, lr)
            losses.append(value)
            step += 1

        _verify_frozen(registry, frozen_before, epoch)
        counts = registry.counts(name for name in registry.names() if params[name].requires_grad)
        per_epoch.append(counts.total())
        classes: Dict[str, int] = {}
        for kind, n in counts.by_kind().items():
            classes[kind.value] = n
        breakdown.append(classes)

        train_metrics = evaluate(model, task.train)
        eval_metrics = evaluate(model, task.eval)
        metrics.loss.append(float(np.mean(losses)))
        metrics.train_acc.append(train_metrics.accuracy)
        metrics.eval_acc.append(eval_metrics.accuracy)
        metrics.eval_exact_match.append(eval_metrics.exact_match)
        metrics.epoch_seconds.append(time.perf_counter() - started)
        logger.info(
            f"Epoch {epoch}/{config.epochs}: trainable={per_epoch[-1]} loss={metrics.loss[-1]:.4f} "
            f"train_acc={train_metrics.accuracy:.3f} eval_acc={eval_metrics.accuracy:.3f}"
        )

    metrics.lr_trace.append(lr_at(total_steps, total_steps, config.base_lr))
    return metrics, UpdateLedger(per_epoch=tuple(per_epoch), breakdown=tuple(breakdown))


def block_probe(
    model_config: Union[ModelConfig, Mapping],
    task: TaskDataset,
    block_index: int,
    config: Union[TrainConfig, Mapping],
) -> float:
    """Train a fresh model on Embedding ∪ Block(i) ∪ Head only; return eval accuracy."""
    model_config = ModelConfig.parse(model_config)
    config = TrainConfig.parse(config)
    if not 1 <= block_index <= model_config.num_blocks:
        raise ContractError(
            f"probe block {block_index} outside [1, {model_config.num_blocks}]",
            {"block": block_index, "num_blocks": model_config.num_blocks},
        )
    model, registry = build_model(model_config, seed=config.seed)
    apply_peft(model, registry, config.peft.model_copy(update={"kind": "full"}))
    schedule = build_probe_schedule(model_config.num_blocks, config.epochs, block_index)
    metrics, _ = train_run(model, registry, schedule, task, config)
    return metrics.eval_acc[-1]


def probe_sweep(
    model_config: Union[ModelConfig, Mapping],
    task: TaskDataset,
    config: Union[TrainConfig, Mapping],
) -> List[float]:
    """Per-block probe accuracies, block 1 first, and a log line comparing halves."""
    model_config = ModelConfig.parse(model_config)
    accuracies = [block_probe(model_config, task, i, config) for i in range(1, model_config.num_blocks + 1)]
    half = len(accuracies) // 2
    if half:
        low, high = float(np.mean(accuracies[:half])), float(np.mean(accuracies[-half:]))
        verdict = "higher" if high > low else "not higher"
        logger.info(f"Probe: upper blocks mean {high:.3f} is {verdict} than lower blocks mean {low:.3f}")
    return accuracies


def average_metrics(records: Sequence[MetricsRecord]) -> MetricsRecord:
    """Element-wise mean over repeated runs of the same configuration."""
    if not records:
        raise ContractError("nothing to average")
    lengths = {r.epochs for r in records}
    if len(lengths) != 1:
        raise ContractError("runs differ in epoch count", {"epochs": sorted(lengths)})

    def mean(attr: str) -> List[float]:
        return [float(x) for x in np.mean([getattr(r, attr) for r in records], axis=0)]

    exact = [r.eval_exact_match for r in records]
    merged_exact = [
        None if any(row[i] is None for row in exact) else float(np.mean([row[i] for row in exact]))
        for i in range(records[0].epochs)
    ]
    return replace(
        MetricsRecord(),
        loss=mean("loss"),
        train_acc=mean("train_acc"),
        eval_acc=mean("eval_acc"),
        eval_exact_match=merged_exact,
        lr_start=mean("lr_start"),
        epoch_seconds=mean("epoch_seconds"),
        lr_trace=mean("lr_trace"),
    )
