"""Closed-form parameter counts for encoder shapes, no weights allocated.

The formulas mirror what ``build_model`` and the PEFT entry points register, key
for key, so a tiny config counted here equals its instantiated registry exactly.
"""

from __future__ import annotations

from typing import Dict, Optional, Union

from ..peft.config import PeftConfig
from .config import ArchitectureDims, HeadKind, resolve_architecture
from .registry import CountKey, ParameterCounts, ParameterTag


def _add(counts: Dict[CountKey, int], tag: ParameterTag, bias: bool, n: int) -> None:
    key = CountKey(tag, bias)
    counts[key] = counts.get(key, 0) + n


def static_param_count(
    arch: Union[str, ArchitectureDims],
    head_kind: HeadKind = "classifier",
    peft: Optional[PeftConfig] = None,
    include_pooler: Optional[bool] = None,
) -> ParameterCounts:
    """Per-(tag, bias) element counts for ``arch``.

    ``include_pooler`` defaults to True for the classifier head and False for the
    span head; the pooler (d×d + d) is counted under the Head tag.
    """
    dims = resolve_architecture(arch) if isinstance(arch, str) else arch
    peft = PeftConfig.parse(peft) if peft is not None else PeftConfig()
    if include_pooler is None:
        include_pooler = head_kind == "classifier"

    peft.check_width(dims.hidden_size)
    d, f = dims.hidden_size, dims.ffn_dim
    counts: Dict[CountKey, int] = {}

    emb = ParameterTag.embedding()
    _add(counts, emb, False, (dims.vocab_size + dims.max_positions + dims.type_vocab_size) * d)
    _add(counts, emb, False, d)  # layer-norm gain
    _add(counts, emb, True, d)   # layer-norm shift

    for i in range(1, dims.num_blocks + 1):
        block, bias = ParameterTag.in_block(i), ParameterTag.bias_term(i)
        _add(counts, block, False, 4 * d * d + 2 * d * f + 2 * d)
        _add(counts, bias, True, 4 * d + f + d + 2 * d)

        if peft.kind == "adapter":
            b = peft.bottleneck
            adapter = ParameterTag.adapter_in(i)
            _add(counts, adapter, False, 2 * (d * b + b * d))
            _add(counts, adapter, True, 2 * (b + d))
        elif peft.kind == "lora":
            for matrix in peft.targets:
                _add(counts, ParameterTag.lora_factor(i, matrix), False, 2 * d * peft.rank)

    head = ParameterTag.head()
    out_dim = dims.num_classes if head_kind == "classifier" else 2
    _add(counts, head, False, d * out_dim)
    _add(counts, head, True, out_dim)
    if include_pooler:
        _add(counts, head, False, d * d)
        _add(counts, head, True, d)

    return ParameterCounts(counts)
