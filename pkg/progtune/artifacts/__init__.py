from .checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    META_NAME,
    expected_checkpoint_size,
    load_checkpoint,
    save_checkpoint,
)
from .export import (
    LEDGER_COLUMNS,
    METRIC_COLUMNS,
    export_ledger,
    export_metrics,
    export_table,
    metric_rows,
)

__all__ = [
    "FORMAT_VERSION",
    "LEDGER_COLUMNS",
    "MAGIC",
    "META_NAME",
    "METRIC_COLUMNS",
    "expected_checkpoint_size",
    "export_ledger",
    "export_metrics",
    "export_table",
    "load_checkpoint",
    "metric_rows",
    "save_checkpoint",
]
