from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Sequence, Union

import numpy as np

from .errors import ContractError, OracleError
from .tensor import Tensor, backward

logger = logging.getLogger(__name__)

Params = Union[Mapping[str, Tensor], Sequence[Tensor]]


@dataclass
class GradCheckReport:
    max_relative_error: float = 0.0
    per_parameter: Dict[str, float] = field(default_factory=dict)
    checked_entries: int = 0


def _named(params: Params) -> Dict[str, Tensor]:
    if isinstance(params, Mapping):
        return dict(params)
    return {p.name or f"param_{i}": p for i, p in enumerate(params)}


def _evaluate(f: Callable[[], Tensor]) -> float:
    out = f()
    if out.data.size != 1:
        raise ContractError("grad_check needs a scalar-valued function", {"shape": list(out.shape)})
    return float(out.data.reshape(-1)[0])


def grad_check(f: Callable[[], Tensor], params: Params, h: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients of ``f`` with central differences.

    Relative error per entry is ``|analytic - cd| / max(|analytic|, |cd|, 1e-8)``.
    Parameters with ``requires_grad`` false are skipped.
    """
    if h <= 0:
        raise ContractError("finite-difference step must be positive", {"h": h})

    first, second = f(), f()
    if first.data.tobytes() != second.data.tobytes():
        raise OracleError(
            "function under check is not deterministic",
            {"first": float(first.data.reshape(-1)[0]), "second": float(second.data.reshape(-1)[0])},
        )

    named = {name: p for name, p in _named(params).items() if p.requires_grad}
    for p in named.values():
        p.grad = None
    backward(f(), leaves=named.values())

    report = GradCheckReport()
    for name, p in named.items():
        analytic = p.grad.reshape(-1).copy()
        flat = p.data.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = _evaluate(f)
            flat[i] = original - h
            minus = _evaluate(f)
            flat[i] = original
            cd = (plus - minus) / (2.0 * h)
            a = analytic[i]
            err = abs(a - cd) / max(abs(a), abs(cd), 1e-8)
            worst = max(worst, err)
        report.per_parameter[name] = worst
        report.checked_entries += flat.size
        report.max_relative_error = max(report.max_relative_error, worst)

    logger.debug(
        f"grad_check over {report.checked_entries} entries: max relative error {report.max_relative_error:.3e}"
    )
    return report
