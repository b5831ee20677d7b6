from __future__ import annotations

import logging
from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from sqlalchemy.ext.asyncio import AsyncSession

from app.config import config
from app.db import RunKind
from app.services.run_store import persist_run
from progtune.artifacts.checkpoint import save_checkpoint
from progtune.artifacts.export import export_ledger, export_metrics, export_table
from progtune.modeling.config import ArchitectureDims, HeadKind, resolve_architecture
from progtune.modeling.counting import static_param_count
from progtune.modeling.encoder import build_model
from progtune.peft.config import PeftConfig
from progtune.peft.methods import apply_peft
from progtune.schedule.ledger import UpdateLedger, count_updated_params
from progtune.schedule.stages import ScheduleVariant, make_schedule
from progtune.tasks.generate import generate_task
from progtune.tasks.runconfig import RunConfig
from progtune.training.loop import MetricsRecord, average_metrics, probe_sweep, train_run

logger = logging.getLogger(__name__)

ABLATION_VARIANTS = (ScheduleVariant.STANDARD, ScheduleVariant.WOLB, ScheduleVariant.FROMHB)


@dataclass
class RunResult:
    seed: int
    metrics: MetricsRecord
    ledger: UpdateLedger
    reduction: float
    checkpoint: Optional[str] = None


@dataclass
class CountReport:
    arch: str
    head: str
    peft: str
    variant: str
    epochs: int
    total_params: int
    ledger: UpdateLedger
    full_ledger: UpdateLedger

    @property
    def reduction(self) -> float:
        return self.ledger.reduction_against(self.full_ledger)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "arch": self.arch,
            "head": self.head,
            "peft": self.peft,
            "variant": self.variant,
            "epochs": self.epochs,
            "total_params": self.total_params,
            "per_epoch": list(self.ledger.per_epoch),
            "cumulative": self.ledger.cumulative,
            "full_cumulative": self.full_ledger.cumulative,
            "reduction": round(self.reduction, 6),
        }


def train_once(run_config: RunConfig, seed: Optional[int] = None, checkpoint_path: Optional[Path] = None) -> RunResult:
    """Algorithm end to end: task, model, PEFT, schedule, trainer, ledger reduction."""
    if seed is not None:
        run_config = run_config.with_overrides(seed=seed)
    train = run_config.train
    task = generate_task(run_config.task)
    model, registry = build_model(run_config.model, seed=train.seed)
    apply_peft(model, registry, train.peft, seed=train.seed)
    schedule = make_schedule(
        run_config.model.num_blocks,
        train.epochs,
        train.schedule_variant(),
        embeddings_always=train.embeddings_always,
        probe_block=train.probe_block,
    )
    metrics, ledger = train_run(model, registry, schedule, task, train)
    full = count_updated_params(make_schedule(run_config.model.num_blocks, train.epochs, ScheduleVariant.FULL), registry)
    result = RunResult(seed=train.seed, metrics=metrics, ledger=ledger, reduction=ledger.reduction_against(full))
    if checkpoint_path is not None:
        result.checkpoint = str(save_checkpoint(model, registry, checkpoint_path))
    return result


def _train_worker(args: Tuple[Dict[str, Any], int, Optional[str]]) -> RunResult:
    config_data, seed, checkpoint = args
    return train_once(RunConfig.parse(config_data), seed, Path(checkpoint) if checkpoint else None)


def output_path(run_config: RunConfig, suffix: str, fmt: Optional[str] = None, directory: Optional[str] = None) -> Path:
    out = run_config.output
    ext = fmt or out.format
    return Path(directory or out.directory or config.OUTPUT_DIR) / f"{out.run_name}-{suffix}.{ext}"


def run_repeats(run_config: RunConfig, repeats: int = 1, workers: int = 1) -> List[RunResult]:
    """Seeds ``seed..seed+repeats-1``, in parallel processes when ``workers > 1``."""
    base = run_config.train.seed
    jobs = []
    for seed in range(base, base + repeats):
        checkpoint = str(output_path(run_config, f"seed{seed}", "pgtn")) if run_config.output.checkpoint else None
        jobs.append((run_config.to_dict(), seed, checkpoint))
    if workers > 1 and repeats > 1:
        with Pool(min(workers, repeats)) as pool:
            results = pool.map(_train_worker, jobs)
    else:
        results = [_train_worker(job) for job in jobs]
    for result in results:
        logger.info(
            f"Seed {result.seed}: eval_acc={result.metrics.eval_acc[-1]:.3f} "
            f"updated={result.ledger.cumulative} reduction={result.reduction:.3f}"
        )
    return results


def export_results(run_config: RunConfig, results: List[RunResult], directory: Optional[str] = None) -> List[Path]:
    """Seed-suffixed metric and ledger exports, plus a merged mean export when there is more than one seed."""
    fmt = run_config.output.format
    paths = []
    for r in results:
        metrics_path = output_path(run_config, f"seed{r.seed}", directory=directory)
        paths.append(export_metrics(r.metrics, r.ledger, metrics_path, fmt, r.reduction))
        paths.append(export_ledger(r.ledger, output_path(run_config, f"seed{r.seed}-ledger", directory=directory), fmt))
    if len(results) > 1:
        merged = average_metrics([r.metrics for r in results])
        paths.append(
            export_metrics(merged, results[0].ledger, output_path(run_config, "mean", directory=directory), fmt, results[0].reduction)
        )
    return paths


async def store_results(session: AsyncSession, run_config: RunConfig, results: List[RunResult], kind: RunKind = RunKind.TRAIN) -> List[int]:
    ids = []
    for result in results:
        config_data = run_config.with_overrides(seed=result.seed).to_dict()
        run = await persist_run(
            session,
            run_config.output.run_name,
            kind,
            config_data,
            result.metrics,
            result.ledger,
            result.reduction,
        )
        ids.append(run.id)
    return ids


def run_ablation(run_config: RunConfig) -> Tuple[List[Dict[str, Any]], List[RunResult]]:
    """Standard against both ablations on the same task, seed and PEFT."""
    rows, results = [], []
    for variant in ABLATION_VARIANTS:
        variant_config = run_config.with_overrides(mode="progtune", variant=variant.value)
        result = train_once(variant_config)
        results.append(result)
        rows.append(
            {
                "variant": variant.value,
                "final_loss": result.metrics.loss[-1],
                "train_acc": result.metrics.train_acc[-1],
                "eval_acc": result.metrics.eval_acc[-1],
                "updated_params": result.ledger.cumulative,
                "reduction": result.reduction,
            }
        )
    return rows, results


def run_probe(run_config: RunConfig) -> List[Dict[str, Any]]:
    task = generate_task(run_config.task)
    accuracies = probe_sweep(run_config.model, task, run_config.train)
    return [{"block": i, "eval_acc": acc} for i, acc in enumerate(accuracies, start=1)]


def write_table(run_config: RunConfig, rows: List[Dict[str, Any]], suffix: str, directory: Optional[str] = None) -> Path:
    return export_table(rows, output_path(run_config, suffix, directory=directory), run_config.output.format)


def count_report(
    arch: str,
    epochs: int,
    mode: str = "ft",
    peft: Optional[PeftConfig] = None,
    head: HeadKind = "classifier",
    variant: str = ScheduleVariant.STANDARD.value,
    include_pooler: Optional[bool] = None,
    dims: Optional[ArchitectureDims] = None,
) -> CountReport:
    """Static ledger for a named architecture, no weights instantiated."""
    peft = PeftConfig.parse(peft) if peft is not None else PeftConfig()
    resolved = resolve_architecture(arch, dims)
    counts = static_param_count(resolved, head, peft, include_pooler)
    chosen = ScheduleVariant.FULL if mode == "ft" else ScheduleVariant.parse(variant)
    ledger = count_updated_params(make_schedule(resolved.num_blocks, epochs, chosen), counts, peft)
    full = count_updated_params(make_schedule(resolved.num_blocks, epochs, ScheduleVariant.FULL), counts, peft)
    return CountReport(
        arch=arch,
        head=head,
        peft=peft.kind,
        variant=chosen.value,
        epochs=epochs,
        total_params=counts.total(),
        ledger=ledger,
        full_ledger=full,
    )
