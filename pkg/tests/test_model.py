import numpy as np
import pytest

from conftest import TINY_MODEL
from progtune.core import ops
from progtune.core.errors import ConfigError, IndexOutOfRangeError, LengthError, ShapeError, StateError
from progtune.core.gradcheck import grad_check
from progtune.core.tensor import Tensor, backward
from progtune.modeling.config import ModelConfig
from progtune.modeling.encoder import block_forward, build_model, forward
from progtune.modeling.registry import ParameterRegistry, ParameterTag, TagKind
from progtune.tasks.data import tokenize_batch


def _hand_count(L, d, f, V, max_pos, out):
    embeddings = (V + max_pos) * d + 2 * d
    attention = 4 * (d * d + d)
    ffn = d * f + f + f * d + d
    norms = 2 * 2 * d
    head = d * out + out
    return embeddings + L * (attention + ffn + norms) + head


def _ids(batch, seq, vocab, seed=0):
    ids = np.random.default_rng(seed).integers(1, vocab, size=(batch, seq))
    return ids, np.ones_like(ids, dtype=bool)


def test_registry_total_matches_hand_formula(tiny_model):
    _, registry = tiny_model
    assert registry.total_count() == _hand_count(2, 8, 16, 11, 16, 2) == 1450
    assert registry.counts().total() == registry.total_count()


def test_registry_has_one_block_tag_per_layer():
    _, registry = build_model({**TINY_MODEL, "num_blocks": 12})
    blocks = {entry.tag.block for entry in registry if entry.tag.kind is TagKind.BLOCK}
    assert blocks == set(range(1, 13))
    assert registry.counts().block_indices() == list(range(1, 13))


def test_same_seed_gives_identical_bytes():
    _, first = build_model(TINY_MODEL, seed=3)
    _, second = build_model(TINY_MODEL, seed=3)
    _, other = build_model(TINY_MODEL, seed=4)
    assert first.snapshot() == second.snapshot()
    assert first.snapshot() != other.snapshot()
    assert first.names() == second.names()


def test_invalid_config_is_a_config_error():
    with pytest.raises(ConfigError):
        build_model({**TINY_MODEL, "num_heads": 3})
    with pytest.raises(ConfigError):
        build_model({**TINY_MODEL, "num_blocks": 0})


def test_initialisation_convention(tiny_model):
    _, registry = tiny_model
    for entry in registry:
        data = entry.tensor.data
        if entry.name.endswith((".bias", ".beta")):
            assert not data.any()
        elif entry.name.endswith(".gamma"):
            assert (data == 1.0).all()
        else:
            assert np.abs(data).max() <= 2 * 0.02


def test_registry_rejects_duplicates_and_bad_blocks():
    registry = ParameterRegistry(num_blocks=2)
    registry.register("w", Tensor([1.0]), ParameterTag.in_block(1))
    with pytest.raises(StateError):
        registry.register("w", Tensor([1.0]), ParameterTag.in_block(1))
    with pytest.raises(ConfigError):
        registry.register("v", Tensor([1.0]), ParameterTag.in_block(3))
    with pytest.raises(StateError):
        registry.set_trainable(["missing"])


def test_tag_codes_round_trip():
    for tag in (
        ParameterTag.embedding(),
        ParameterTag.head(),
        ParameterTag.in_block(7),
        ParameterTag.bias_term(12),
        ParameterTag.adapter_in(3),
        ParameterTag.lora_factor(24, "Wv"),
    ):
        assert ParameterTag.from_code(tag.code) == tag
    assert str(ParameterTag.lora_factor(2, "Wq")) == "LoraFactor(Block 2, Wq)"


def test_block_preserves_shape(tiny_model):
    model, _ = tiny_model
    for b, s in ((1, 1), (2, 5), (3, 2)):
        x = Tensor(np.random.default_rng(b * s).standard_normal((b, s, 8)))
        assert block_forward(model.block(1), x).shape == (b, s, 8)


def test_block_rejects_wrong_width(tiny_model):
    model, _ = tiny_model
    with pytest.raises(ShapeError):
        block_forward(model.block(1), Tensor(np.zeros((1, 2, 4))))


def test_single_position_attention_is_the_value_projection(tiny_model):
    model, _ = tiny_model
    attention = model.block(1).attention
    x = Tensor(np.random.default_rng(0).standard_normal((2, 1, 8)))
    assert np.allclose(attention(x).data, attention.output(attention.value(x)).data, atol=1e-12)


def test_classifier_logits_shape_and_finiteness():
    model, _ = build_model({**TINY_MODEL, "num_classes": 3})
    ids, mask = _ids(2, 5, 11)
    logits = forward(model, ids, mask)
    assert logits.shape == (2, 3)
    assert np.isfinite(logits.data).all()


def test_span_head_logits_shape():
    model, _ = build_model({**TINY_MODEL, "head_kind": "qa_span"})
    ids, mask = _ids(2, 5, 11)
    assert forward(model, ids, mask).shape == (2, 5, 2)


def test_batch_permutation_permutes_logits(tiny_model):
    model, _ = tiny_model
    ids, mask = _ids(4, 6, 11, seed=2)
    perm = np.array([2, 0, 3, 1])
    logits = forward(model, ids, mask).data
    assert np.allclose(forward(model, ids[perm], mask[perm]).data, logits[perm], atol=1e-12)


def test_overlong_and_out_of_vocab_inputs(tiny_model):
    model, _ = tiny_model
    with pytest.raises(LengthError):
        forward(model, np.ones((1, 17), dtype=np.int64))
    with pytest.raises(IndexOutOfRangeError):
        forward(model, np.array([[1, 11]]))
    with pytest.raises(ShapeError):
        forward(model, np.array([1, 2, 3]))


def test_padding_does_not_change_logits(tiny_model):
    model, _ = tiny_model
    sequences = ["1 5 7 3", "1 9 2"]
    short = forward(model, *tokenize_batch(sequences, 4, 11)).data
    padded = forward(model, *tokenize_batch(sequences, 8, 11)).data
    assert np.allclose(short, padded, atol=1e-10)


def test_all_padding_row_gives_finite_logits(tiny_model):
    model, _ = tiny_model
    ids, mask = tokenize_batch(["5 7", ""], 4, 11)
    logits = forward(model, ids, mask).data
    assert np.isfinite(logits).all()
    assert np.allclose(logits[0], forward(model, *tokenize_batch(["5 7"], 4, 11)).data[0], atol=1e-10)


def _gradcheck_model(config):
    model, registry = build_model({**config, "initializer_range": 0.3}, seed=5)
    for entry in registry:
        if entry.name.endswith((".bias", ".beta")):
            entry.tensor.data = np.random.default_rng(len(entry.name)).standard_normal(entry.tensor.shape) * 0.1
    return model, registry


def _checked_params(registry):
    # key biases only shift attention scores uniformly per query: exactly zero gradient
    return {name: t for name, t in registry.tensors().items() if not name.endswith("attention.key.bias")}


def test_two_block_encoder_passes_grad_check():
    model, registry = _gradcheck_model(TINY_MODEL)
    ids, mask = tokenize_batch(["1 4 6 2", "1 3 8"], 4, 11)
    labels = np.array([1, 0])

    def loss():
        return ops.softmax_cross_entropy(forward(model, ids, mask), labels)

    report = grad_check(loss, _checked_params(registry))
    assert report.max_relative_error < 1e-4

    for name in registry.names():
        if name.endswith("attention.key.bias"):
            assert np.allclose(registry[name].tensor.grad, 0.0, atol=1e-10)


def test_single_block_passes_grad_check():
    model, registry = _gradcheck_model(TINY_MODEL)
    block = model.block(2)
    x = Tensor(np.random.default_rng(1).standard_normal((2, 3, 8)))
    weights = np.random.default_rng(2).standard_normal((2, 3, 8))
    params = {n: t for n, t in _checked_params(registry).items() if n.startswith("blocks.2.")}

    report = grad_check(lambda: ops.sum(ops.mul(block_forward(block, x), weights)), params)
    assert report.max_relative_error < 1e-4
    assert len(report.per_parameter) == len(registry.block_names(2)) - 1


def test_lower_blocks_and_head_receive_gradient(tiny_model):
    model, registry = tiny_model
    ids, mask = _ids(3, 5, 11, seed=4)
    leaves = list(registry.tensors().values())
    backward(ops.softmax_cross_entropy(forward(model, ids, mask), np.array([0, 1, 1])), leaves)
    for name in registry.block_names(1):
        if not name.endswith("attention.key.bias"):
            assert np.abs(registry[name].tensor.grad).sum() > 0, name
    assert np.abs(registry["head.weight"].tensor.grad).sum() > 0
    assert np.abs(registry["head.bias"].tensor.grad).sum() > 0


def test_model_config_dims_view(tiny_config):
    dims = tiny_config.dims()
    assert dims.type_vocab_size == 0
    assert dims.num_blocks == tiny_config.num_blocks
    assert ModelConfig.parse(tiny_config.model_dump()) == tiny_config
