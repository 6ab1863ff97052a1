"""Path-integral token attribution and corpus-level candidate-word mining.

Attribution for token i is

    (x_i - 0) * (1/m) * sum_{j=1..m} grad f(j/m * x) wrt x_i

i.e. a right-endpoint Riemann sum along the straight line from the all-zero
embedding to the sample's embedding matrix, with every token interpolated
jointly. The per-token L2 norms feed a corpus-level score (mean norm over all
occurrences of a word), and the top fraction of scored words become the
candidate causal words.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import TokenizedSample, Vocabulary
from .errors import AttributionError, ConfigError
from .model import ClassifierParams, _activate, _activation_grad, forward, selector_value_and_grad, softmax


@dataclass
class AttributionRecord:
    sample_id: str
    tokens: tuple[str, ...]
    vectors: np.ndarray  # (len, d) per-token attribution vectors
    norms: np.ndarray  # (len,) L2 norms of the vectors
    steps: int


@dataclass
class CorpusScoreTable:
    """word -> mean attribution norm over every corpus occurrence, plus Freq."""

    scores: dict[str, float]
    freqs: dict[str, int]

    def __len__(self) -> int:
        return len(self.scores)


@dataclass(frozen=True)
class CandidateSet:
    """Global candidate causal words, in selection order (best first)."""

    words: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_word_set", frozenset(self.words))

    def __contains__(self, word: str) -> bool:
        return word in self._word_set  # type: ignore[attr-defined]

    def __len__(self) -> int:
        return len(self.words)


def _resolve_selector(selector: str, params: ClassifierParams, token_ids: Sequence[int]) -> str:
    # The path integral needs one fixed scalar functional; pin the predicted
    # class at the endpoint rather than letting it drift along the path.
    if selector == "pred_prob":
        out = forward(params, token_ids)
        return f"prob:{int(np.argmax(out.probs))}"
    return selector


def integrated_gradients(
    params: ClassifierParams,
    sample: TokenizedSample,
    steps: int = 50,
    output_selector: str = "pred_prob",
) -> AttributionRecord:
    """Riemann-sum attribution from the all-zero embedding baseline."""
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    if not sample.token_ids:
        raise AttributionError(f"sample {sample.sample_id} is empty")
    selector = _resolve_selector(output_selector, params, sample.token_ids)

    x = params.embedding[np.asarray(sample.token_ids, dtype=np.int64)]
    n = x.shape[0]
    pooled_full = x.mean(axis=0)

    # All interpolation points share the pooled direction, so the whole path
    # evaluates as one batched forward/backward over the step axis.
    alphas = np.arange(1, steps + 1, dtype=np.float64) / steps
    pooled = alphas[:, None] * pooled_full[None, :]
    u = pooled @ params.w1.T + params.b1
    h = _activate(params, u)
    logits = h @ params.w2.T + params.b2
    probs = softmax(logits)

    dlogits = np.empty_like(logits)
    for j in range(steps):
        _, dlogits[j] = selector_value_and_grad(selector, logits[j], probs[j])
        if not np.all(np.isfinite(dlogits[j])):
            raise AttributionError(f"non-finite gradient at interpolation step {j + 1}")
    dh = dlogits @ params.w2
    du = dh * _activation_grad(params, h)
    dpooled = du @ params.w1
    if not np.all(np.isfinite(dpooled)):
        bad = int(np.argwhere(~np.isfinite(dpooled).all(axis=1))[0, 0]) + 1
        raise AttributionError(f"non-finite gradient at interpolation step {bad}")

    mean_grad = dpooled.mean(axis=0) / n
    vectors = x * mean_grad[None, :]
    return AttributionRecord(
        sample_id=sample.sample_id,
        tokens=sample.tokens,
        vectors=vectors,
        norms=np.linalg.norm(vectors, axis=1),
        steps=steps,
    )


def completeness_gap(
    params: ClassifierParams,
    sample: TokenizedSample,
    record: AttributionRecord,
    output_selector: str = "pred_prob",
) -> float:
    """|sum of attributions - (f(x) - f(baseline))|, the quadrature residual."""
    selector = _resolve_selector(output_selector, params, sample.token_ids)
    out_x = forward(params, sample.token_ids)
    n = len(sample.token_ids)
    zeros = np.zeros((n, params.config.embed_dim))
    out_0 = forward(params, sample.token_ids, embedding_override=zeros)
    fx, _ = selector_value_and_grad(selector, out_x.logits, out_x.probs)
    f0, _ = selector_value_and_grad(selector, out_0.logits, out_0.probs)
    return abs(float(record.vectors.sum()) - (fx - f0))


def compute_corpus_scores(
    records: Iterable[AttributionRecord], vocab: Vocabulary
) -> CorpusScoreTable:
    """Mean attribution norm per vocabulary word over all corpus occurrences.

    Raises if the accumulated occurrence counts disagree with the vocabulary's
    frequency table (which means the records do not cover the corpus exactly).
    """
    totals: dict[str, float] = {}
    counts: dict[str, int] = {}
    for record in records:
        for token, norm in zip(record.tokens, record.norms):
            if token in vocab:
                totals[token] = totals.get(token, 0.0) + float(norm)
                counts[token] = counts.get(token, 0) + 1
    for word in vocab.words:
        expected = vocab.freq(word)
        got = counts.get(word, 0)
        if got != expected:
            raise AttributionError(
                f"occurrence count for {word!r} is {got}, vocabulary says {expected}"
            )
    scores = {w: totals[w] / counts[w] for w in counts}
    return CorpusScoreTable(scores=scores, freqs={w: vocab.freq(w) for w in counts})


def select_candidates(table: CorpusScoreTable, fraction: float = 0.2) -> CandidateSet:
    """Top ceil(fraction * n) words by score, ties broken by (freq, word)."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    if len(table) == 0:
        raise AttributionError("cannot select candidates from an empty score table")
    ranked = sorted(
        table.scores,
        key=lambda w: (-table.scores[w], -table.freqs[w], w),
    )
    keep = math.ceil(fraction * len(ranked))
    return CandidateSet(words=tuple(ranked[:keep]))


def candidates_for_sample(candidates: CandidateSet, sample: TokenizedSample) -> list[str]:
    """Distinct candidate words occurring in the sample, first-occurrence order."""
    seen: set[str] = set()
    result = []
    for token in sample.tokens:
        if token in candidates and token not in seen:
            seen.add(token)
            result.append(token)
    return result


def write_attribution_dump(records: Iterable[AttributionRecord], path: str | Path) -> None:
    """jsonl per sample: {id, tokens, norms, m}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(
                json.dumps(
                    {
                        "id": record.sample_id,
                        "tokens": list(record.tokens),
                        "norms": [float(v) for v in record.norms],
                        "m": record.steps,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def write_candidates(candidates: CandidateSet, table: CorpusScoreTable, path: str | Path) -> None:
    """tsv `word<TAB>score<TAB>freq`, in selection order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for word in candidates.words:
            fh.write(f"{word}\t{table.scores[word]!r}\t{table.freqs[word]}\n")


def read_candidates(path: str | Path) -> CandidateSet:
    words = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                words.append(line.split("\t")[0])
    return CandidateSet(words=tuple(words))
