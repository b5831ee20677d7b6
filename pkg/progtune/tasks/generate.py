"""Seeded synthetic tasks.

Every sequence starts with ``START_ID`` (the position the classifier reads) and
ids from 2 upwards carry meaning per task; 0 is padding.
"""

from __future__ import annotations

import logging
from typing import Callable, Dict, List, Mapping, Set, Tuple, Union

import numpy as np

from ..core.errors import ConfigError
from .data import START_ID, Split, TaskDataset, TaskSpec, tokenize_batch

logger = logging.getLogger(__name__)

KEYWORD_ID = 2
MARKER_A, MARKER_B = 2, 3
ANSWER_ID = 2

Example = Tuple[List[int], Union[int, Tuple[int, int]]]
Generator = Callable[[np.random.Generator, TaskSpec, int], Example]

_MAX_ATTEMPTS_PER_EXAMPLE = 200


def _length(rng: np.random.Generator, spec: TaskSpec) -> int:
    return int(rng.integers(spec.shortest, spec.seq_len + 1))


def _fillers(rng: np.random.Generator, first: int, vocab_size: int, n: int) -> List[int]:
    return [int(x) for x in rng.integers(first, vocab_size, size=n)]


def _keyword(rng: np.random.Generator, spec: TaskSpec, label: int) -> Example:
    body = _fillers(rng, KEYWORD_ID + 1, spec.vocab_size, _length(rng, spec) - 1)
    if label == 1:
        body[int(rng.integers(len(body)))] = KEYWORD_ID
    return [START_ID] + body, label


def _majority(rng: np.random.Generator, spec: TaskSpec, label: int) -> Example:
    """Filler id ``x`` belongs to class ``(x - 2) % K``; the label class holds a strict majority."""
    k, first = spec.num_classes, 2
    n_body = _length(rng, spec) - 1
    winners = n_body // 2 + 1
    others = [c for c in range(k) if c != label]
    classes = [label] * winners + [int(c) for c in rng.choice(others, size=n_body - winners)]
    rng.shuffle(classes)
    ids_per_class = (spec.vocab_size - first - 1 - np.arange(k)) // k + 1
    body = [first + c + k * int(rng.integers(ids_per_class[c])) for c in classes]
    return [START_ID] + body, label


def _depth(rng: np.random.Generator, spec: TaskSpec, label: int) -> Example:
    """Label 1 iff marker A precedes marker B; each marker occurs exactly once."""
    body = _fillers(rng, MARKER_B + 1, spec.vocab_size, _length(rng, spec) - 1)
    i, j = sorted(int(p) for p in rng.choice(len(body), size=2, replace=False))
    first, second = (MARKER_A, MARKER_B) if label == 1 else (MARKER_B, MARKER_A)
    body[i], body[j] = first, second
    return [START_ID] + body, label


def _span(rng: np.random.Generator, spec: TaskSpec, label: int) -> Example:
    """One run of ``ANSWER_ID`` tokens; the target is its (start, end) position, inclusive."""
    body = _fillers(rng, ANSWER_ID + 1, spec.vocab_size, _length(rng, spec) - 1)
    run = int(rng.integers(1, min(3, len(body)) + 1))
    start = int(rng.integers(0, len(body) - run + 1))
    body[start:start + run] = [ANSWER_ID] * run
    return [START_ID] + body, (start + 1, start + run)


_GENERATORS: Dict[str, Generator] = {
    "keyword_detect": _keyword,
    "majority_class": _majority,
    "depth_pattern": _depth,
    "span_extract": _span,
}

_MIN_VOCAB = {"keyword_detect": 4, "depth_pattern": 5, "span_extract": 4}


def _check_spec(spec: TaskSpec) -> None:
    needed = _MIN_VOCAB.get(spec.kind, 2 + spec.num_classes)
    if spec.vocab_size < needed:
        raise ConfigError(
            f"{spec.kind} needs vocab_size >= {needed}, got {spec.vocab_size}",
            {"kind": spec.kind, "vocab_size": spec.vocab_size, "minimum": needed},
        )
    if spec.kind == "depth_pattern" and spec.shortest < 3:
        raise ConfigError("depth_pattern needs sequences of at least 3 tokens", {"shortest": spec.shortest})


def _labels(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    return rng.permutation(np.arange(n) % k)


def _draw(
    rng: np.random.Generator,
    spec: TaskSpec,
    n: int,
    exclude: Set[Tuple[int, ...]],
) -> List[Example]:
    make = _GENERATORS[spec.kind]
    k = 2 if spec.kind == "span_extract" else spec.num_classes
    examples = []
    for label in _labels(rng, n, k):
        for _ in range(_MAX_ATTEMPTS_PER_EXAMPLE):
            tokens, target = make(rng, spec, int(label))
            if tuple(tokens) not in exclude:
                break
        else:
            raise ConfigError(
                f"could not draw {n} eval examples disjoint from train; enlarge vocab_size or seq_len",
                {"kind": spec.kind, "vocab_size": spec.vocab_size, "seq_len": spec.seq_len},
            )
        examples.append((tokens, target))
    return examples


def _to_split(examples: List[Example], spec: TaskSpec) -> Split:
    ids, mask = tokenize_batch([tokens for tokens, _ in examples], spec.seq_len, spec.vocab_size)
    labels = np.asarray([target for _, target in examples], dtype=np.int64)
    return Split(ids, mask, labels)


def generate_task(spec: Union[TaskSpec, Mapping]) -> TaskDataset:
    """Deterministic (train, eval) splits; eval sequences never occur in train."""
    spec = TaskSpec.parse(spec)
    _check_spec(spec)
    train_seq, eval_seq = np.random.SeedSequence(spec.seed).spawn(2)
    train = _draw(np.random.default_rng(train_seq), spec, spec.train_n, exclude=set())
    seen = {tuple(tokens) for tokens, _ in train}
    evaluation = _draw(np.random.default_rng(eval_seq), spec, spec.eval_n, exclude=seen)
    logger.debug(f"Generated {spec.kind}: {len(train)} train / {len(evaluation)} eval examples")
    return TaskDataset(spec=spec, train=_to_split(train, spec), eval=_to_split(evaluation, spec))
