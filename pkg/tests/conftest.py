import pytest

from progtune.modeling.config import ModelConfig
from progtune.modeling.encoder import build_model
from progtune.tasks.runconfig import RunConfig


TINY_MODEL = {
    "num_blocks": 2,
    "hidden_size": 8,
    "num_heads": 2,
    "ffn_dim": 16,
    "vocab_size": 11,
    "max_positions": 16,
    "num_classes": 2,
}


@pytest.fixture
def tiny_config():
    return ModelConfig.parse(TINY_MODEL)


@pytest.fixture
def tiny_model(tiny_config):
    return build_model(tiny_config, seed=0)


def make_run_config(**train_overrides) -> RunConfig:
    """Keyword-detection run small enough for many full training runs per test."""
    epochs = train_overrides.pop("epochs", 2)
    train = {
        "epochs": epochs,
        "batch_size": 16,
        "base_lr": 0.01,
        "seed": 0,
        "mode": "progtune",
        "variant": "standard",
        "optimizer": {"name": "adamw", "weight_decay": 0.0},
    }
    train.update(train_overrides)
    return RunConfig.parse(
        {
            "model": {**TINY_MODEL, "num_blocks": max(2, epochs)},
            "task": {"kind": "keyword_detect", "vocab_size": 11, "seq_len": 6, "train_n": 32, "eval_n": 16, "seed": 1},
            "train": train,
            "schedule": {"stages": epochs},
            "output": {"run_name": "tiny"},
        }
    )


@pytest.fixture
def run_config():
    return make_run_config()
