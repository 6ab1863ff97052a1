"""Contrastive tuples (anchor, positive, negatives) from mined word-groups.

Negatives counterfactually flip each selected group. The positive keeps every
group word intact and masks the remaining candidate-word occurrences
independently with probability `mask_prob`, so the positive stays semantically
aligned with the anchor while the negatives are the flipped variants.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import MASK_TOKEN, AntonymLexicon, TokenizedSample, Vocabulary
from .errors import AcwgError
from .wordgroup import GroupSet, WordGroup, counterfactual_flip

_SEED_MASK = (1 << 63) - 1


@dataclass(frozen=True)
class AugmentedSet:
    sample_id: str
    anchor: TokenizedSample
    positive: TokenizedSample
    negatives: tuple[TokenizedSample, ...]
    groups: tuple[WordGroup, ...]  # aligned with negatives, score order
    rng_seed: int


def derive_seed(global_seed: int, sample_id: str) -> int:
    """Stable per-sample seed; independent of sample ordering and platform."""
    digest = hashlib.sha256(f"{global_seed}:{sample_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & _SEED_MASK


def make_negatives(
    sample: TokenizedSample,
    groups: Sequence[WordGroup],
    antonyms: AntonymLexicon,
    vocab: Vocabulary,
) -> list[TokenizedSample]:
    """One flipped sample per group, in the groups' score order."""
    if not groups:
        raise AcwgError(f"sample {sample.sample_id}: no word-groups to build negatives from")
    return [counterfactual_flip(sample, g, antonyms, vocab) for g in groups]


def make_positive(
    sample: TokenizedSample,
    candidate_words: Iterable[str],
    group_words: Iterable[str],
    vocab: Vocabulary,
    mask_prob: float = 0.5,
    rng: np.random.Generator | None = None,
) -> TokenizedSample:
    """Mask non-group candidate occurrences independently with `mask_prob`."""
    rng = rng if rng is not None else np.random.default_rng(0)
    maskable = set(candidate_words) - set(group_words)
    tokens = list(sample.tokens)
    for i, token in enumerate(tokens):
        if token in maskable and rng.random() < mask_prob:
            tokens[i] = MASK_TOKEN
    tokens = tuple(tokens)
    return TokenizedSample(sample_id=sample.sample_id, tokens=tokens, token_ids=vocab.encode(tokens))


def build_augmented_batch(
    samples: Sequence[TokenizedSample],
    group_sets: Mapping[str, GroupSet],
    antonyms: AntonymLexicon,
    vocab: Vocabulary,
    mask_prob: float = 0.5,
    seed: int = 0,
) -> tuple[list[AugmentedSet], list[str]]:
    """Per-sample contrastive tuples plus the ids skipped for lack of groups.

    Seeds derive from (seed, sample id), so regeneration is stable under input
    reordering. Samples whose group set is empty are skipped and reported.
    """
    missing = [s.sample_id for s in samples if s.sample_id not in group_sets]
    if missing:
        raise AcwgError(f"missing group reports for sample id(s): {', '.join(missing)}")
    augmented: list[AugmentedSet] = []
    skipped: list[str] = []
    for sample in samples:
        gs = group_sets[sample.sample_id]
        if gs.is_empty:
            skipped.append(sample.sample_id)
            continue
        sample_seed = derive_seed(seed, sample.sample_id)
        rng = np.random.default_rng(sample_seed)
        group_words = set().union(*(g.members for g in gs.groups))
        positive = make_positive(sample, gs.candidates, group_words, vocab, mask_prob, rng)
        negatives = make_negatives(sample, gs.groups, antonyms, vocab)
        augmented.append(
            AugmentedSet(
                sample_id=sample.sample_id,
                anchor=sample,
                positive=positive,
                negatives=tuple(negatives),
                groups=gs.groups,
                rng_seed=sample_seed,
            )
        )
    return augmented, skipped


def write_augmentation_dump(augmented: Iterable[AugmentedSet], path: str | Path) -> None:
    """jsonl per sample: {id, anchor, positive, negatives[], groups[], rng_seed}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for aug in augmented:
            fh.write(
                json.dumps(
                    {
                        "id": aug.sample_id,
                        "anchor": list(aug.anchor.tokens),
                        "positive": list(aug.positive.tokens),
                        "negatives": [list(n.tokens) for n in aug.negatives],
                        "groups": [list(g.members) for g in aug.groups],
                        "rng_seed": aug.rng_seed,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_augmentation_dump(path: str | Path, vocab: Vocabulary) -> list[AugmentedSet]:
    result = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)

            def tok(tokens: list[str], sample_id: str) -> TokenizedSample:
                tokens = tuple(tokens)
                return TokenizedSample(
                    sample_id=sample_id, tokens=tokens, token_ids=vocab.encode(tokens)
                )

            result.append(
                AugmentedSet(
                    sample_id=obj["id"],
                    anchor=tok(obj["anchor"], obj["id"]),
                    positive=tok(obj["positive"], obj["id"]),
                    negatives=tuple(tok(n, obj["id"]) for n in obj["negatives"]),
                    groups=tuple(WordGroup(members=tuple(m)) for m in obj["groups"]),
                    rng_seed=obj["rng_seed"],
                )
            )
    return result
