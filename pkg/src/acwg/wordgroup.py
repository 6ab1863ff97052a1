"""Causal-effect scoring and beam search over word combinations.

A word-group is a set of candidate word *types*; flipping a group replaces
every occurrence of each member with its first lexicon antonym, falling back
to the mask token. The causal effect of a group is the symmetrized KL
divergence between the model's output distributions before and after the
flip. The beam keeps the top-K groups per length, accumulates every kept
group across lengths, and returns the best `num_groups` overall.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import MASK_TOKEN, AntonymLexicon, TokenizedSample, Vocabulary
from .errors import ConfigError, SearchError
from .model import ClassifierParams, forward

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class WordGroup:
    members: tuple[str, ...]  # lexicographically sorted, distinct
    score: float | None = None

    @classmethod
    def of(cls, words: Iterable[str], score: float | None = None) -> "WordGroup":
        members = tuple(sorted(set(words)))
        if not members:
            raise SearchError("a word-group must have at least one member")
        return cls(members=members, score=score)

    def sort_key(self) -> tuple:
        return (-(self.score if self.score is not None else -np.inf), len(self.members), self.members)


@dataclass(frozen=True)
class GroupSet:
    """Scored word-groups for one sample, best first."""

    sample_id: str
    groups: tuple[WordGroup, ...]
    candidates: tuple[str, ...]  # the per-sample candidate word list searched
    best_singleton: WordGroup | None

    @property
    def is_empty(self) -> bool:
        return not self.groups


@dataclass(frozen=True)
class SearchConfig:
    beam_width: int = 2
    max_group_len: int = 3
    num_groups: int = 3

    def validate(self) -> "SearchConfig":
        if self.beam_width < 1 or self.max_group_len < 1 or self.num_groups < 1:
            raise ConfigError("beam_width, max_group_len, and num_groups must all be >= 1")
        return self


def counterfactual_flip(
    sample: TokenizedSample,
    group: Sequence[str] | WordGroup,
    antonyms: AntonymLexicon,
    vocab: Vocabulary,
) -> TokenizedSample:
    """Replace every occurrence of each group member by antonym-else-mask."""
    members = group.members if isinstance(group, WordGroup) else tuple(group)
    member_set = set(members)
    missing = member_set - set(sample.tokens)
    if missing:
        raise SearchError(
            f"sample {sample.sample_id}: group member(s) {sorted(missing)} not in sample"
        )
    replacement = {w: antonyms.first(w) or MASK_TOKEN for w in member_set}
    tokens = tuple(replacement.get(t, t) for t in sample.tokens)
    return TokenizedSample(sample_id=sample.sample_id, tokens=tokens, token_ids=vocab.encode(tokens))


def symmetric_kl(p: np.ndarray, q: np.ndarray) -> float:
    """0.5*KL(q||p) + 0.5*KL(p||q), natural log, probabilities clamped to >= 1e-12."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_FLOOR, None)
    q = np.clip(np.asarray(q, dtype=np.float64), PROB_FLOOR, None)
    value = 0.5 * float(np.sum(q * (np.log(q) - np.log(p)))) + 0.5 * float(
        np.sum(p * (np.log(p) - np.log(q)))
    )
    if not np.isfinite(value):
        raise SearchError("non-finite divergence value")
    return value


def causal_effect(
    params: ClassifierParams, sample: TokenizedSample, flipped: TokenizedSample
) -> float:
    """Symmetrized KL between model outputs on the sample and its flip."""
    if not sample.token_ids or not flipped.token_ids:
        raise SearchError("causal_effect requires non-empty samples")
    p = forward(params, sample.token_ids).probs
    q = forward(params, flipped.token_ids).probs
    return symmetric_kl(q, p)


def _score_group(
    params: ClassifierParams,
    sample: TokenizedSample,
    base_probs: np.ndarray,
    members: tuple[str, ...],
    antonyms: AntonymLexicon,
    vocab: Vocabulary,
) -> float:
    flipped = counterfactual_flip(sample, members, antonyms, vocab)
    q = forward(params, flipped.token_ids).probs
    return symmetric_kl(q, base_probs)


def beam_search(
    params: ClassifierParams,
    sample: TokenizedSample,
    candidate_words: Sequence[str],
    config: SearchConfig,
    antonyms: AntonymLexicon,
    vocab: Vocabulary,
) -> GroupSet:
    """Level-wise beam over word combinations, accumulating top-K per length."""
    config.validate()
    words = tuple(dict.fromkeys(candidate_words))
    if not words:
        return GroupSet(sample_id=sample.sample_id, groups=(), candidates=(), best_singleton=None)

    base_probs = forward(params, sample.token_ids).probs
    scored: dict[tuple[str, ...], float] = {}

    def score(members: tuple[str, ...]) -> float:
        if members not in scored:
            scored[members] = _score_group(params, sample, base_probs, members, antonyms, vocab)
        return scored[members]

    accumulated: list[WordGroup] = []
    best_singleton: WordGroup | None = None
    level_cands = {(w,) for w in words}
    for level in range(1, config.max_group_len + 1):
        if not level_cands:
            break
        level_groups = sorted(
            (WordGroup(members=m, score=score(m)) for m in level_cands),
            key=WordGroup.sort_key,
        )
        if level == 1:
            best_singleton = level_groups[0]
        kept = level_groups[: config.beam_width]
        accumulated.extend(kept)
        level_cands = {
            tuple(sorted(set(g.members) | {w}))
            for g in kept
            for w in words
            if w not in g.members
        }

    accumulated.sort(key=WordGroup.sort_key)
    return GroupSet(
        sample_id=sample.sample_id,
        groups=tuple(accumulated[: config.num_groups]),
        candidates=words,
        best_singleton=best_singleton,
    )


def brute_force_groups(
    params: ClassifierParams,
    sample: TokenizedSample,
    candidate_words: Sequence[str],
    max_group_len: int,
    num_groups: int,
    antonyms: AntonymLexicon,
    vocab: Vocabulary,
) -> GroupSet:
    """Exhaustive enumeration oracle over all subsets of size <= max_group_len."""
    words = tuple(dict.fromkeys(candidate_words))
    if len(words) > 12:
        raise SearchError(f"brute force limited to 12 candidate words, got {len(words)}")
    if not words:
        return GroupSet(sample_id=sample.sample_id, groups=(), candidates=(), best_singleton=None)

    base_probs = forward(params, sample.token_ids).probs
    all_groups = []
    for size in range(1, min(max_group_len, len(words)) + 1):
        for combo in itertools.combinations(sorted(words), size):
            score = _score_group(params, sample, base_probs, combo, antonyms, vocab)
            all_groups.append(WordGroup(members=combo, score=score))
    all_groups.sort(key=WordGroup.sort_key)
    singletons = [g for g in all_groups if len(g.members) == 1]
    return GroupSet(
        sample_id=sample.sample_id,
        groups=tuple(all_groups[:num_groups]),
        candidates=words,
        best_singleton=min(singletons, key=WordGroup.sort_key) if singletons else None,
    )


def write_group_reports(
    group_sets: Iterable[GroupSet], config: SearchConfig, path: str | Path
) -> None:
    """jsonl per sample: {id, groups: [{members, score}], candidates, best_singleton, config}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    config_dict = {
        "beam_width": config.beam_width,
        "max_group_len": config.max_group_len,
        "num_groups": config.num_groups,
    }
    with path.open("w", encoding="utf-8") as fh:
        for gs in group_sets:
            fh.write(
                json.dumps(
                    {
                        "id": gs.sample_id,
                        "groups": [
                            {"members": list(g.members), "score": g.score} for g in gs.groups
                        ],
                        "candidates": list(gs.candidates),
                        "best_singleton": (
                            None
                            if gs.best_singleton is None
                            else {
                                "members": list(gs.best_singleton.members),
                                "score": gs.best_singleton.score,
                            }
                        ),
                        "config": config_dict,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_group_reports(path: str | Path) -> dict[str, GroupSet]:
    reports: dict[str, GroupSet] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            best = obj.get("best_singleton")
            reports[obj["id"]] = GroupSet(
                sample_id=obj["id"],
                groups=tuple(
                    WordGroup(members=tuple(g["members"]), score=g["score"])
                    for g in obj["groups"]
                ),
                candidates=tuple(obj.get("candidates", ())),
                best_singleton=(
                    None
                    if best is None
                    else WordGroup(members=tuple(best["members"]), score=best["score"])
                ),
            )
    return reports
