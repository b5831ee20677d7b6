from .config import OptimizerConfig, TrainConfig
from .loop import (
    EvalMetrics,
    MetricsRecord,
    average_metrics,
    block_probe,
    compute_loss,
    evaluate,
    predict,
    probe_sweep,
    train_run,
)
from .optim import OptimizerState, lr_at, optimizer_step

__all__ = [
    "EvalMetrics",
    "MetricsRecord",
    "OptimizerConfig",
    "OptimizerState",
    "TrainConfig",
    "average_metrics",
    "block_probe",
    "compute_loss",
    "evaluate",
    "lr_at",
    "optimizer_step",
    "predict",
    "probe_sweep",
    "train_run",
]
