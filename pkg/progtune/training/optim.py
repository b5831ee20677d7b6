from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping

import numpy as np

from ..core.errors import ContractError, FreezeViolationError
from ..core.tensor import Tensor
from .config import OptimizerConfig

logger = logging.getLogger(__name__)


def lr_at(step: int, total_steps: int, base_lr: float) -> float:
    """Linear decay from ``base_lr`` at step 0 to zero at ``total_steps``."""
    if total_steps < 1:
        raise ContractError("total_steps must be >= 1", {"total_steps": total_steps})
    if not 0 <= step <= total_steps:
        raise ContractError(
            f"step {step} outside [0, {total_steps}]", {"step": step, "total_steps": total_steps}
        )
    return base_lr * (1.0 - step / total_steps)


@dataclass
class OptimizerState:
    """Per-parameter moments; entries for parameters that leave the trainable set go stale."""

    config: OptimizerConfig = field(default_factory=OptimizerConfig)
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    steps: Dict[str, int] = field(default_factory=dict)


def optimizer_step(
    params: Mapping[str, Tensor],
    trainable: Iterable[str],
    state: OptimizerState,
    lr: float,
) -> None:
    """Update exactly the ``trainable`` parameters in place from their ``grad``."""
    trainable = frozenset(trainable)
    for name, tensor in params.items():
        if name not in trainable and tensor.grad is not None:
            logger.error(f"Frozen parameter {name} carries a gradient")
            raise FreezeViolationError(f"gradient present for frozen parameter {name!r}", {"parameter": name})

    cfg = state.config
    for name in sorted(trainable):
        tensor = params[name]
        grad = tensor.grad
        if grad is None:
            raise ContractError(f"no gradient for trainable parameter {name!r}", {"parameter": name})
        t = state.steps.get(name, 0) + 1
        state.steps[name] = t

        if cfg.name == "sgd":
            velocity = state.first_moment.get(name)
            velocity = grad.copy() if velocity is None else cfg.momentum * velocity + grad
            state.first_moment[name] = velocity
            tensor.data -= lr * velocity
            continue

        m = state.first_moment.get(name, np.zeros_like(grad))
        v = state.second_moment.get(name, np.zeros_like(grad))
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
        state.first_moment[name], state.second_moment[name] = m, v
        m_hat = m / (1.0 - cfg.beta1 ** t)
        v_hat = v / (1.0 - cfg.beta2 ** t)
        update = m_hat / (np.sqrt(v_hat) + cfg.eps)
        # biases and layer-norm vectors are not decayed
        if tensor.ndim > 1 and cfg.weight_decay:
            update = update + cfg.weight_decay * tensor.data
        tensor.data -= lr * update
