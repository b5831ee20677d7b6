import pytest

from conftest import TINY_MODEL
from progtune.core.errors import ConfigError
from progtune.modeling.config import SHIPPED_ARCHITECTURES, ModelConfig, resolve_architecture
from progtune.modeling.counting import static_param_count
from progtune.modeling.encoder import build_model
from progtune.modeling.registry import TagKind
from progtune.peft.config import PeftConfig
from progtune.peft.methods import apply_peft
from progtune.schedule.ledger import count_updated_params, predicted_reduction
from progtune.schedule.stages import ScheduleVariant, make_schedule

PEFT_KINDS = [
    {"kind": "full"},
    {"kind": "adapter", "bottleneck": 3},
    {"kind": "bitfit"},
    {"kind": "lora", "rank": 2, "alpha": 4.0, "targets": ["Wq", "Wk", "Wv", "Wo"]},
    {"kind": "lora", "rank": 3, "alpha": 3.0},
]


def _cumulative(arch, epochs, variant, head="classifier"):
    counts = static_param_count(arch, head)
    return count_updated_params(make_schedule(SHIPPED_ARCHITECTURES[arch].num_blocks, epochs, variant), counts).cumulative


def test_bert_base_total_is_about_110m():
    assert static_param_count("bert-base").total() == pytest.approx(110e6, rel=0.02)


def test_bert_base_three_epoch_fine_tuning_is_about_330m():
    assert _cumulative("bert-base", 3, ScheduleVariant.FULL) == pytest.approx(330e6, rel=0.02)


def test_bert_base_span_head_three_epochs():
    assert _cumulative("bert-base", 3, ScheduleVariant.FULL, "qa_span") == pytest.approx(326.7e6, rel=0.02)
    assert _cumulative("bert-base", 3, ScheduleVariant.STANDARD, "qa_span") == pytest.approx(241.6e6, rel=0.02)


def test_bert_base_span_head_two_epochs():
    assert _cumulative("bert-base", 2, ScheduleVariant.FULL, "qa_span") == pytest.approx(217.7e6, rel=0.02)
    assert _cumulative("bert-base", 2, ScheduleVariant.STANDARD, "qa_span") == pytest.approx(175.3e6, rel=0.02)


def test_bert_large_classifier_three_epochs():
    full = _cumulative("bert-large", 3, ScheduleVariant.FULL)
    progressive = _cumulative("bert-large", 3, ScheduleVariant.STANDARD)
    assert full == pytest.approx(1005.4e6, rel=0.02)
    assert progressive == pytest.approx(703.1e6, rel=0.02)
    assert 1 - progressive / full == pytest.approx(0.30, abs=0.01)


def test_reduction_claims():
    base = predicted_reduction(12, 3, static_param_count("bert-base"))
    assert 0.22 <= base <= 0.28
    squad_v2 = predicted_reduction(12, 2, static_param_count("bert-base", "qa_span"))
    assert 0.17 <= squad_v2 <= 0.23


def test_pooler_switch():
    with_pooler = static_param_count("bert-base", "qa_span", include_pooler=True).total()
    without = static_param_count("bert-base", "qa_span").total()
    assert with_pooler - without == 768 * 768 + 768
    assert static_param_count("bert-base").total() - static_param_count("bert-base", include_pooler=False).total() == 768 * 769


def test_adapter_and_lora_closed_forms():
    plain = static_param_count("bert-base").by_kind()
    adapter = static_param_count("bert-base", peft=PeftConfig(kind="adapter", bottleneck=64)).by_kind()
    assert adapter[TagKind.ADAPTER] == 12 * 198_272
    lora = static_param_count("bert-base", peft=PeftConfig(kind="lora", rank=8, targets=("Wq",))).by_kind()
    assert lora[TagKind.LORA] == 12 * 12_288
    assert TagKind.ADAPTER not in plain and TagKind.LORA not in plain


@pytest.mark.parametrize(
    "peft",
    [PeftConfig(kind="adapter", bottleneck=768), PeftConfig(kind="adapter", bottleneck=4096), PeftConfig(kind="lora", rank=768)],
)
def test_static_counts_reject_peft_wider_than_hidden(peft):
    with pytest.raises(ConfigError):
        static_param_count("bert-base", peft=peft)

def test_unknown_architecture_needs_dims():
    with pytest.raises(ConfigError):
        static_param_count("gpt-7")
    dims = ModelConfig.parse(TINY_MODEL).dims()
    assert resolve_architecture("custom", dims) == dims


@pytest.mark.parametrize("head", ["classifier", "qa_span"])
@pytest.mark.parametrize("peft", PEFT_KINDS)
def test_static_counts_match_instantiated_registry(head, peft):
    config = ModelConfig.parse({**TINY_MODEL, "head_kind": head})
    model, registry = build_model(config)
    apply_peft(model, registry, peft)
    static = static_param_count(config.dims(), head, PeftConfig.parse(peft), include_pooler=False)
    assert static == registry.counts()
    assert static.total() == registry.total_count()
