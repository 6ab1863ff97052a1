"""End-to-end mining: attribution -> corpus scores -> candidates -> group search.

Per-sample attribution and beam search are pure functions over a frozen model,
so they optionally fan out over a process pool; results are merged in input
order, making the output independent of the worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .attribution import (
    AttributionRecord,
    CandidateSet,
    CorpusScoreTable,
    candidates_for_sample,
    compute_corpus_scores,
    integrated_gradients,
    select_candidates,
)
from .corpus import AntonymLexicon, TokenizedSample, Vocabulary
from .errors import ConfigError
from .model import ClassifierParams
from .wordgroup import GroupSet, SearchConfig, beam_search


@dataclass
class MiningResult:
    records: list[AttributionRecord]
    table: CorpusScoreTable
    candidates: CandidateSet
    group_sets: dict[str, GroupSet]


def _sample_selector(selector: str, label: int | None) -> str:
    if selector == "true_prob":
        if label is None:
            raise ConfigError("selector 'true_prob' needs per-sample labels")
        return f"prob:{label}"
    return selector


def _attribution_chunk(
    params: ClassifierParams,
    chunk: list[tuple[TokenizedSample, int | None]],
    steps: int,
    selector: str,
) -> list[AttributionRecord]:
    return [
        integrated_gradients(params, ts, steps, _sample_selector(selector, label))
        for ts, label in chunk
    ]


def _search_chunk(
    params: ClassifierParams,
    chunk: list[TokenizedSample],
    candidates: CandidateSet,
    config: SearchConfig,
    antonyms: AntonymLexicon,
    vocab: Vocabulary,
) -> list[GroupSet]:
    return [
        beam_search(params, ts, candidates_for_sample(candidates, ts), config, antonyms, vocab)
        for ts in chunk
    ]


def _chunked(items: list, jobs: int) -> list[list]:
    size = max(1, (len(items) + jobs - 1) // jobs)
    return [items[i : i + size] for i in range(0, len(items), size)]


def compute_attributions(
    params: ClassifierParams,
    tokenized: Sequence[TokenizedSample],
    labels: Sequence[int] | None = None,
    steps: int = 50,
    selector: str = "true_prob",
    jobs: int = 1,
) -> list[AttributionRecord]:
    """Per-sample attribution records, in input order."""
    paired = [
        (ts, labels[i] if labels is not None else None) for i, ts in enumerate(tokenized)
    ]
    if jobs <= 1 or len(paired) < 2 * jobs:
        return _attribution_chunk(params, paired, steps, selector)
    chunks = _chunked(paired, jobs)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(_attribution_chunk, params, chunk, steps, selector) for chunk in chunks
        ]
        results = []
        for future in futures:
            results.extend(future.result())
    return results


def search_group_sets(
    params: ClassifierParams,
    tokenized: Sequence[TokenizedSample],
    candidates: CandidateSet,
    config: SearchConfig,
    antonyms: AntonymLexicon,
    vocab: Vocabulary,
    jobs: int = 1,
) -> dict[str, GroupSet]:
    """Beam-search every sample against the global candidate set."""
    items = list(tokenized)
    if jobs <= 1 or len(items) < 2 * jobs:
        group_sets = _search_chunk(params, items, candidates, config, antonyms, vocab)
    else:
        group_sets = []
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_search_chunk, params, chunk, candidates, config, antonyms, vocab)
                for chunk in _chunked(items, jobs)
            ]
            for future in futures:
                group_sets.extend(future.result())
    return {gs.sample_id: gs for gs in group_sets}


def mine(
    params: ClassifierParams,
    tokenized: Sequence[TokenizedSample],
    labels: Sequence[int],
    vocab: Vocabulary,
    antonyms: AntonymLexicon,
    search_config: SearchConfig,
    ig_steps: int = 50,
    selector: str = "true_prob",
    candidate_fraction: float = 0.2,
    jobs: int = 1,
) -> MiningResult:
    """Full mining pass over a corpus with one frozen model."""
    records = compute_attributions(params, tokenized, labels, ig_steps, selector, jobs)
    table = compute_corpus_scores(records, vocab)
    candidates = select_candidates(table, candidate_fraction)
    group_sets = search_group_sets(
        params, tokenized, candidates, search_config, antonyms, vocab, jobs
    )
    return MiningResult(
        records=records, table=table, candidates=candidates, group_sets=group_sets
    )
