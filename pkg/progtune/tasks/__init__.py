from .data import PAD_ID, START_ID, Split, TaskDataset, TaskKind, TaskSpec, tokenize_batch
from .generate import ANSWER_ID, KEYWORD_ID, MARKER_A, MARKER_B, generate_task
from .runconfig import OutputConfig, RunConfig, ScheduleConfig, dump_run_config, load_run_config

__all__ = [
    "ANSWER_ID",
    "KEYWORD_ID",
    "MARKER_A",
    "MARKER_B",
    "PAD_ID",
    "START_ID",
    "OutputConfig",
    "RunConfig",
    "ScheduleConfig",
    "Split",
    "TaskDataset",
    "TaskKind",
    "TaskSpec",
    "dump_run_config",
    "generate_task",
    "load_run_config",
    "tokenize_batch",
]
