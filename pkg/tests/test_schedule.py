import pytest

from conftest import TINY_MODEL
from progtune.core.errors import ConfigError, ContractError
from progtune.modeling.encoder import build_model
from progtune.modeling.registry import TagKind
from progtune.peft.methods import apply_peft, peft_trainable_set
from progtune.schedule.stages import (
    ScheduleVariant,
    build_probe_schedule,
    build_stages,
    make_schedule,
    partition_blocks,
    trainable_set,
)

VARIANTS = [ScheduleVariant.STANDARD, ScheduleVariant.WOLB, ScheduleVariant.FROMHB]


def _oracle_parts(L, T):
    size = L // T
    blocks = list(range(1, L + 1))
    parts = [blocks[(t - 1) * size: t * size] for t in range(1, T)]
    parts.append(blocks[(T - 1) * size:])
    return parts


def _oracle_stage(variant, t, T):
    if variant is ScheduleVariant.STANDARD:
        return {p for p in range(1, T + 1) if p >= t}
    if variant is ScheduleVariant.WOLB:
        return {p for p in range(1, T + 1) if p >= t + 1}
    return {p for p in range(1, T + 1) if p >= T - t + 1}


def test_partition_examples():
    assert partition_blocks(12, 3).parts == ((1, 4), (5, 8), (9, 12))
    assert partition_blocks(24, 3).parts == ((1, 8), (9, 16), (17, 24))
    assert partition_blocks(14, 4).parts == ((1, 3), (4, 6), (7, 9), (10, 14))
    assert partition_blocks(5, 1).blocks_of(1) == (1, 2, 3, 4, 5)


@pytest.mark.parametrize("L,T", [(3, 4), (3, 0), (0, 0), (2, -1)])
def test_partition_rejects_bad_part_counts(L, T):
    with pytest.raises(ConfigError):
        partition_blocks(L, T)


def test_three_stage_variants():
    plan = partition_blocks(12, 3)
    assert build_stages(plan, "standard").stages == (frozenset({1, 2, 3}), frozenset({2, 3}), frozenset({3}))
    wolb = build_stages(plan, "without_low_blocks")
    assert wolb.stages[2] == frozenset()
    assert wolb.blocks(3) == ()
    assert build_stages(plan, "from_high_blocks").stages == (frozenset({3}), frozenset({2, 3}), frozenset({1, 2, 3}))
    assert all(build_stages(plan, v).embeddings_always for v in VARIANTS)


@pytest.mark.parametrize("variant", VARIANTS)
def test_stages_match_enumeration_oracle(variant):
    for L in range(2, 9):
        for T in range(1, L + 1):
            schedule = make_schedule(L, T, variant)
            assert [list(schedule.plan.blocks_of(p)) for p in range(1, T + 1)] == _oracle_parts(L, T)
            covered = set()
            for t in range(1, T + 1):
                assert set(schedule.parts(t)) == _oracle_stage(variant, t, T)
                covered.update(schedule.parts(t))
            excluded = {1} if variant is ScheduleVariant.WOLB else set()
            assert covered | excluded == set(range(1, T + 1))


def test_standard_shrinks_and_from_high_grows():
    for L in range(2, 9):
        for T in range(2, L + 1):
            standard = make_schedule(L, T, "standard")
            growing = make_schedule(L, T, "fromhb")
            for t in range(1, T):
                assert set(standard.parts(t + 1)) < set(standard.parts(t))
                assert set(growing.parts(t)) < set(growing.parts(t + 1))
            assert set(standard.blocks(1)) == set(range(1, L + 1))
            assert set(growing.blocks(T)) == set(range(1, L + 1))


def test_full_schedule_is_not_bounded_by_block_count():
    schedule = make_schedule(2, 5, ScheduleVariant.FULL)
    assert schedule.num_epochs == 5
    assert all(schedule.blocks(t) == (1, 2) for t in range(1, 6))


def test_variant_names():
    assert ScheduleVariant.parse("ft") is ScheduleVariant.FULL
    assert ScheduleVariant.parse("FromHB") is ScheduleVariant.FROMHB
    with pytest.raises(ConfigError):
        ScheduleVariant.parse("sideways")
    with pytest.raises(ConfigError):
        build_stages(partition_blocks(4, 2), "probe")
    with pytest.raises(ConfigError):
        make_schedule(4, 2, "probe")


def test_epoch_outside_schedule_is_a_contract_error():
    schedule = make_schedule(4, 2)
    with pytest.raises(ContractError):
        schedule.parts(3)
    with pytest.raises(ContractError):
        schedule.embeddings_trainable(0)


def _registry(num_blocks, peft):
    model, registry = build_model({**TINY_MODEL, "num_blocks": num_blocks})
    apply_peft(model, registry, peft)
    return registry, peft_trainable_set(registry)


def _names(registry, predicate):
    return frozenset(entry.name for entry in registry if predicate(entry))


def test_first_standard_stage_trains_everything():
    registry, groups = _registry(12, {"kind": "full"})
    assert trainable_set(make_schedule(12, 3), 1, registry, groups) == frozenset(registry.names())


def test_last_standard_stage_keeps_embedding_top_part_and_head():
    registry, groups = _registry(12, {"kind": "full"})
    expected = _names(
        registry,
        lambda e: e.tag.kind in (TagKind.EMBEDDING, TagKind.HEAD) or (e.tag.block is not None and e.tag.block >= 9),
    )
    assert trainable_set(make_schedule(12, 3), 3, registry, groups) == expected


def test_lora_second_stage_selects_factors_of_upper_blocks():
    registry, groups = _registry(12, {"kind": "lora", "rank": 2, "targets": ["Wq", "Wv"]})
    expected = _names(
        registry,
        lambda e: e.tag.kind is TagKind.HEAD or (e.tag.kind is TagKind.LORA and e.tag.block >= 5),
    )
    selected = trainable_set(make_schedule(12, 3), 2, registry, groups)
    assert selected == expected
    assert len(selected) == 8 * 4 + 2


def test_embeddings_can_follow_the_lowest_part():
    registry, groups = _registry(4, {"kind": "full"})
    schedule = make_schedule(4, 2, embeddings_always=False)
    assert schedule.embeddings_trainable(1) and not schedule.embeddings_trainable(2)
    second = trainable_set(schedule, 2, registry, groups)
    assert not any(registry[n].tag.kind is TagKind.EMBEDDING for n in second)


def test_probe_schedule_trains_one_block():
    registry, groups = _registry(6, {"kind": "full"})
    schedule = build_probe_schedule(6, 3, 5)
    assert schedule.num_epochs == 3
    expected = _names(
        registry, lambda e: e.tag.kind in (TagKind.EMBEDDING, TagKind.HEAD) or e.tag.block == 5
    )
    assert all(trainable_set(schedule, t, registry, groups) == expected for t in (1, 2, 3))
    assert make_schedule(6, 3, "probe", probe_block=5).stages == schedule.stages
    with pytest.raises(ContractError):
        build_probe_schedule(6, 3, 7)
