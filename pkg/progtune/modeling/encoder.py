from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Tuple, Union

import numpy as np

from ..core import ops
from ..core.errors import LengthError, ShapeError
from ..core.tensor import Tensor
from .config import ModelConfig
from .registry import ParameterRegistry, ParameterTag

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class LoraFactors:
    a: Tensor
    b: Tensor
    scaling: float


@dataclass(eq=False)
class Linear:
    """y = x·W + b, with an optional low-rank update (x·A·B)·scaling."""

    weight: Tensor
    bias: Tensor
    lora: Optional[LoraFactors] = None

    @property
    def in_features(self) -> int:
        return self.weight.shape[0]

    @property
    def out_features(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.add(ops.matmul(x, self.weight), self.bias)
        if self.lora is not None:
            delta = ops.matmul(ops.matmul(x, self.lora.a), self.lora.b)
            y = ops.add(y, ops.mul(delta, self.lora.scaling))
        return y


@dataclass(eq=False)
class LayerNorm:
    gamma: Tensor
    beta: Tensor
    eps: float

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


@dataclass(eq=False)
class Adapter:
    """Bottleneck module with its own residual: x + up(gelu(down(x)))."""

    down: Linear
    up: Linear

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(x, self.up(ops.gelu(self.down(x))))


@dataclass(eq=False)
class SelfAttention:
    query: Linear
    key: Linear
    value: Linear
    output: Linear
    num_heads: int

    def projections(self) -> dict:
        return {"Wq": self.query, "Wk": self.key, "Wv": self.value, "Wo": self.output}

    def context(self, x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        """Attention-weighted values, before the output projection."""
        b, s, d = x.shape
        h = self.num_heads
        dh = d // h

        def split(t: Tensor) -> Tensor:
            return ops.transpose(ops.reshape(t, (b, s, h, dh)), (0, 2, 1, 3))

        q, k, v = split(self.query(x)), split(self.key(x)), split(self.value(x))
        scores = ops.mul(ops.matmul(q, ops.swapaxes(k, -1, -2)), 1.0 / math.sqrt(dh))
        keep = None if mask is None else np.asarray(mask, dtype=bool)[:, None, None, :]
        probs = ops.softmax(scores, keep)
        merged = ops.transpose(ops.matmul(probs, v), (0, 2, 1, 3))
        return ops.reshape(merged, (b, s, d))

    def __call__(self, x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        return self.output(self.context(x, mask))


@dataclass(eq=False)
class FeedForward:
    intermediate: Linear
    output: Linear

    def __call__(self, x: Tensor) -> Tensor:
        return self.output(ops.gelu(self.intermediate(x)))


@dataclass(eq=False)
class TransformerBlock:
    index: int
    attention: SelfAttention
    attention_norm: LayerNorm
    ffn: FeedForward
    ffn_norm: LayerNorm
    attention_adapter: Optional[Adapter] = None
    ffn_adapter: Optional[Adapter] = None

    @property
    def hidden_size(self) -> int:
        return self.attention.query.in_features


@dataclass(eq=False)
class Embeddings:
    token: Tensor
    position: Tensor
    norm: LayerNorm

    def __call__(self, ids: np.ndarray) -> Tensor:
        positions = np.arange(ids.shape[1])
        summed = ops.add(ops.embedding_lookup(self.token, ids), ops.embedding_lookup(self.position, positions))
        return self.norm(summed)


@dataclass(eq=False)
class Encoder:
    """E ∘ B₁ ∘ ⋯ ∘ B_L ∘ H."""

    config: ModelConfig
    embeddings: Embeddings
    blocks: List[TransformerBlock]
    head: Linear
    peft_kind: str = field(default="none")

    def block(self, index: int) -> TransformerBlock:
        return self.blocks[index - 1]


class ParameterFactory:
    """Creates tensors in a fixed order from one seeded generator and registers them."""

    def __init__(self, registry: ParameterRegistry, seed: int, std: float):
        self.registry = registry
        self.rng = np.random.default_rng(seed)
        self.std = std

    def truncated_normal(self, name: str, shape: Tuple[int, ...], tag: ParameterTag, std: Optional[float] = None) -> Tensor:
        std = self.std if std is None else std
        values = self.rng.standard_normal(shape)
        outside = np.abs(values) > 2.0
        while outside.any():
            values[outside] = self.rng.standard_normal(int(outside.sum()))
            outside = np.abs(values) > 2.0
        return self._register(name, values * std, tag, bias=False)

    def uniform(self, name: str, shape: Tuple[int, ...], tag: ParameterTag, bound: float) -> Tensor:
        return self._register(name, self.rng.uniform(-bound, bound, size=shape), tag, bias=False)

    def zeros(self, name: str, shape: Tuple[int, ...], tag: ParameterTag, bias: bool) -> Tensor:
        return self._register(name, np.zeros(shape), tag, bias=bias)

    def ones(self, name: str, shape: Tuple[int, ...], tag: ParameterTag) -> Tensor:
        return self._register(name, np.ones(shape), tag, bias=False)

    def _register(self, name: str, values: np.ndarray, tag: ParameterTag, bias: bool) -> Tensor:
        return self.registry.register(name, Tensor(values, requires_grad=True), tag, bias=bias)

    def linear(
        self,
        name: str,
        d_in: int,
        d_out: int,
        weight_tag: ParameterTag,
        bias_tag: ParameterTag,
        zero_weight: bool = False,
    ) -> Linear:
        if zero_weight:
            weight = self.zeros(f"{name}.weight", (d_in, d_out), weight_tag, bias=False)
        else:
            weight = self.truncated_normal(f"{name}.weight", (d_in, d_out), weight_tag)
        bias = self.zeros(f"{name}.bias", (d_out,), bias_tag, bias=True)
        return Linear(weight, bias)

    def layer_norm(self, name: str, width: int, gamma_tag: ParameterTag, beta_tag: ParameterTag, eps: float) -> LayerNorm:
        gamma = self.ones(f"{name}.gamma", (width,), gamma_tag)
        beta = self.zeros(f"{name}.beta", (width,), beta_tag, bias=True)
        return LayerNorm(gamma, beta, eps)


def build_model(config: Union[ModelConfig, Mapping], seed: int = 0) -> Tuple[Encoder, ParameterRegistry]:
    """Instantiate the encoder and a registry covering every parameter.

    Weights draw from a truncated normal (±2σ, σ = ``initializer_range``), biases
    start at zero and layer-norm gains at one. The same seed gives bit-identical
    weights.
    """
    config = ModelConfig.parse(config)
    registry = ParameterRegistry(config.num_blocks)
    factory = ParameterFactory(registry, seed, config.initializer_range)
    d, eps = config.hidden_size, config.layer_norm_eps

    emb = ParameterTag.embedding()
    embeddings = Embeddings(
        token=factory.truncated_normal("embeddings.token", (config.vocab_size, d), emb),
        position=factory.truncated_normal("embeddings.position", (config.max_positions, d), emb),
        norm=factory.layer_norm("embeddings.norm", d, emb, emb, eps),
    )

    blocks = []
    for i in range(1, config.num_blocks + 1):
        weight_tag, bias_tag = ParameterTag.in_block(i), ParameterTag.bias_term(i)
        prefix = f"blocks.{i}"
        attention = SelfAttention(
            query=factory.linear(f"{prefix}.attention.query", d, d, weight_tag, bias_tag),
            key=factory.linear(f"{prefix}.attention.key", d, d, weight_tag, bias_tag),
            value=factory.linear(f"{prefix}.attention.value", d, d, weight_tag, bias_tag),
            output=factory.linear(f"{prefix}.attention.output", d, d, weight_tag, bias_tag),
            num_heads=config.num_heads,
        )
        attention_norm = factory.layer_norm(f"{prefix}.attention_norm", d, weight_tag, bias_tag, eps)
        ffn = FeedForward(
            intermediate=factory.linear(f"{prefix}.ffn.intermediate", d, config.ffn_dim, weight_tag, bias_tag),
            output=factory.linear(f"{prefix}.ffn.output", config.ffn_dim, d, weight_tag, bias_tag),
        )
        ffn_norm = factory.layer_norm(f"{prefix}.ffn_norm", d, weight_tag, bias_tag, eps)
        blocks.append(TransformerBlock(i, attention, attention_norm, ffn, ffn_norm))

    head_tag = ParameterTag.head()
    out_dim = config.num_classes if config.head_kind == "classifier" else 2
    head = factory.linear("head", d, out_dim, head_tag, head_tag)

    model = Encoder(config=config, embeddings=embeddings, blocks=blocks, head=head)
    logger.debug(f"Built encoder L={config.num_blocks} d={d} with {registry.total_count()} parameters")
    return model, registry


def block_forward(block: TransformerBlock, x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Post-norm block: LN(x + attn(x)), then LN(h + ffn(h)); adapters sit before each residual add."""
    if x.ndim != 3 or x.shape[-1] != block.hidden_size:
        raise ShapeError(
            f"block {block.index} expects [batch × seq × {block.hidden_size}], got {x.shape}",
            {"block": block.index, "shape": list(x.shape)},
        )
    attended = block.attention(x, mask)
    if block.attention_adapter is not None:
        attended = block.attention_adapter(attended)
    h = block.attention_norm(ops.add(x, attended))
    transformed = block.ffn(h)
    if block.ffn_adapter is not None:
        transformed = block.ffn_adapter(transformed)
    return block.ffn_norm(ops.add(h, transformed))


def encode(model: Encoder, token_ids: np.ndarray, mask: Optional[np.ndarray] = None) -> Tensor:
    """Hidden states of the last block, [batch × seq × d]."""
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 2:
        raise ShapeError("token ids must be [batch × seq]", {"shape": list(ids.shape)})
    if ids.shape[1] > model.config.max_positions:
        raise LengthError(
            f"sequence length {ids.shape[1]} exceeds max_positions {model.config.max_positions}",
            {"length": int(ids.shape[1]), "max_positions": model.config.max_positions},
        )
    hidden = model.embeddings(ids)
    for block in model.blocks:
        hidden = block_forward(block, hidden, mask)
    return hidden


def forward(model: Encoder, token_ids: np.ndarray, mask: Optional[np.ndarray] = None) -> Tensor:
    """Logits: [batch × K] for the classifier head (position 0), [batch × seq × 2]
    start/end logits for the span head."""
    hidden = encode(model, token_ids, mask)
    if model.config.head_kind == "classifier":
        return model.head(ops.select(hidden, 0, axis=1))
    return model.head(hidden)
