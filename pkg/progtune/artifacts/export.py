from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from ..core.errors import ContractError, StorageError
from ..schedule.ledger import UpdateLedger
from ..training.loop import MetricsRecord

logger = logging.getLogger(__name__)

ExportFormat = Literal["csv", "jsonl"]

METRIC_COLUMNS = ["epoch", "loss", "train_acc", "eval_acc", "lr_start", "updated_params", "reduction"]
LEDGER_COLUMNS = ["epoch", "tag_class", "count"]


def metric_rows(metrics: MetricsRecord, ledger: UpdateLedger, reduction: Optional[float] = None) -> List[Dict[str, Any]]:
    """One row per epoch plus a summary row; wall time is deliberately absent."""
    if metrics.epochs != ledger.epochs:
        raise ContractError(
            f"metrics cover {metrics.epochs} epochs, ledger {ledger.epochs}",
            {"metrics": metrics.epochs, "ledger": ledger.epochs},
        )
    rows: List[Dict[str, Any]] = []
    for i in range(metrics.epochs):
        rows.append(
            {
                "epoch": i + 1,
                "loss": metrics.loss[i],
                "train_acc": metrics.train_acc[i],
                "eval_acc": metrics.eval_acc[i],
                "lr_start": metrics.lr_start[i],
                "updated_params": ledger.per_epoch[i],
                "reduction": None,
            }
        )
    rows.append(
        {
            "epoch": "summary",
            "loss": None,
            "train_acc": None,
            "eval_acc": None,
            "lr_start": None,
            "updated_params": ledger.cumulative,
            "reduction": reduction,
        }
    )
    return rows


def _write_rows(rows: List[Dict[str, Any]], columns: List[str], path: Path, fmt: ExportFormat) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            if fmt == "csv":
                writer = csv.DictWriter(handle, fieldnames=columns, lineterminator="\n")
                writer.writeheader()
                for row in rows:
                    writer.writerow({k: "" if row[k] is None else row[k] for k in columns})
            else:
                for row in rows:
                    handle.write(json.dumps({k: row[k] for k in columns}) + "\n")
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}", {"path": str(path)}) from exc
    return path


def export_metrics(
    metrics: MetricsRecord,
    ledger: UpdateLedger,
    path: Union[str, Path],
    format: ExportFormat = "csv",
    reduction: Optional[float] = None,
) -> Path:
    if format not in ("csv", "jsonl"):
        raise ContractError(f"unknown export format {format!r}", {"format": format})
    path = _write_rows(metric_rows(metrics, ledger, reduction), METRIC_COLUMNS, Path(path), format)
    logger.info(f"Exported {metrics.epochs} epochs to {path}")
    return path


def export_ledger(ledger: UpdateLedger, path: Union[str, Path], format: ExportFormat = "csv") -> Path:
    rows = [dict(zip(LEDGER_COLUMNS, row)) for row in ledger.rows()]
    return _write_rows(rows, LEDGER_COLUMNS, Path(path), format)


def export_table(rows: List[Dict[str, Any]], path: Union[str, Path], format: ExportFormat = "csv") -> Path:
    """Free-form comparison tables (ablation, probe); columns follow the first row."""
    if not rows:
        raise ContractError("nothing to export")
    return _write_rows(rows, list(rows[0]), Path(path), format)
