"""Accuracy, label-flipping rate, budgeted word-substitution attack, fairness.

All routines are read-only over a frozen model and score candidate texts
through the same single-sequence forward as the search code, so results are
deterministic and comparable across evaluators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import MASK_TOKEN, AntonymLexicon, AttributePairLexicon, TokenizedSample, Vocabulary
from .errors import EvaluationError
from .model import ClassifierParams, forward
from .wordgroup import GroupSet, WordGroup, counterfactual_flip

LFR_MODES = ("single_word", "group_l1", "group_l3")

Example = tuple[TokenizedSample, int]


def predict_label(params: ClassifierParams, sample: TokenizedSample) -> int:
    return int(np.argmax(forward(params, sample.token_ids).probs))


def evaluate_accuracy(params: ClassifierParams, examples: Sequence[Example]) -> float:
    """Fraction of argmax-correct predictions."""
    if not examples:
        raise EvaluationError("cannot evaluate accuracy on an empty set")
    correct = sum(1 for ts, label in examples if predict_label(params, ts) == label)
    return correct / len(examples)


def confusion_matrix(params: ClassifierParams, examples: Sequence[Example]) -> np.ndarray:
    """2x2 matrix indexed [label, prediction]."""
    matrix = np.zeros((2, 2), dtype=np.int64)
    for ts, label in examples:
        matrix[label, predict_label(params, ts)] += 1
    return matrix


@dataclass(frozen=True)
class LFRReport:
    mode: str
    lfr: float
    n_flipped: int
    n_evaluated: int
    n_skipped: int  # samples without any mined group

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "lfr": self.lfr,
            "n_flipped": self.n_flipped,
            "n_evaluated": self.n_evaluated,
            "n_skipped": self.n_skipped,
        }


def _flips_label(
    params: ClassifierParams,
    sample: TokenizedSample,
    label: int,
    group: WordGroup,
    antonyms: AntonymLexicon,
    vocab: Vocabulary,
) -> bool:
    flipped = counterfactual_flip(sample, group, antonyms, vocab)
    return predict_label(params, flipped) != label


def label_flipping_rate(
    params: ClassifierParams,
    examples: Sequence[Example],
    mode: str,
    group_sets: Mapping[str, GroupSet],
    antonyms: AntonymLexicon,
    vocab: Vocabulary,
) -> LFRReport:
    """Fraction of samples whose counterfactual edit defeats the true label.

    single_word flips the best level-1 singleton, group_l1 the top group,
    group_l3 counts success if any of the top three groups flips.
    """
    if mode not in LFR_MODES:
        raise EvaluationError(f"mode must be one of {LFR_MODES}")
    missing = [ts.sample_id for ts, _ in examples if ts.sample_id not in group_sets]
    if missing:
        raise EvaluationError(f"missing group reports for: {', '.join(missing[:5])}")
    n_flipped = n_evaluated = n_skipped = 0
    for ts, label in examples:
        gs = group_sets[ts.sample_id]
        if gs.is_empty or gs.best_singleton is None:
            n_skipped += 1
            continue
        n_evaluated += 1
        if mode == "single_word":
            flipped = _flips_label(params, ts, label, gs.best_singleton, antonyms, vocab)
        elif mode == "group_l1":
            flipped = _flips_label(params, ts, label, gs.groups[0], antonyms, vocab)
        else:
            flipped = any(
                _flips_label(params, ts, label, g, antonyms, vocab) for g in gs.groups[:3]
            )
        n_flipped += int(flipped)
    if n_evaluated == 0:
        raise EvaluationError("no samples with mined groups to evaluate")
    return LFRReport(
        mode=mode,
        lfr=n_flipped / n_evaluated,
        n_flipped=n_flipped,
        n_evaluated=n_evaluated,
        n_skipped=n_skipped,
    )


@dataclass(frozen=True)
class AttackResult:
    attacked: TokenizedSample
    success: bool
    substitutions: int
    flip_step: int | None  # 0 = already misclassified; None = never flipped


def greedy_attack(
    params: ClassifierParams,
    sample: TokenizedSample,
    label: int,
    budget: int,
    antonyms: AntonymLexicon,
    vocab: Vocabulary,
) -> AttackResult:
    """Up to `budget` antonym-else-mask substitutions by deletion importance.

    Each round masks every remaining position in turn, ranks positions by the
    drop in true-class probability, substitutes the most important one, and
    stops as soon as the argmax leaves the true label.
    """
    if budget < 0:
        raise EvaluationError("attack budget must be >= 0")
    tokens = list(sample.tokens)
    attacked_positions: set[int] = set()

    def current() -> TokenizedSample:
        frozen = tuple(tokens)
        return TokenizedSample(sample_id=sample.sample_id, tokens=frozen, token_ids=vocab.encode(frozen))

    if predict_label(params, current()) != label:
        return AttackResult(attacked=current(), success=True, substitutions=0, flip_step=0)

    for step in range(1, budget + 1):
        remaining = [i for i in range(len(tokens)) if i not in attacked_positions]
        if not remaining:
            break
        p_true = float(forward(params, current().token_ids).probs[label])
        best_pos, best_drop = -1, -np.inf
        for i in remaining:
            kept = tokens[i]
            tokens[i] = MASK_TOKEN
            p_masked = float(forward(params, current().token_ids).probs[label])
            tokens[i] = kept
            drop = p_true - p_masked
            if drop > best_drop:
                best_pos, best_drop = i, drop
        word = tokens[best_pos]
        tokens[best_pos] = antonyms.first(word) or MASK_TOKEN
        attacked_positions.add(best_pos)
        if predict_label(params, current()) != label:
            return AttackResult(
                attacked=current(), success=True, substitutions=step, flip_step=step
            )
    return AttackResult(
        attacked=current(), success=False, substitutions=len(attacked_positions), flip_step=None
    )


@dataclass(frozen=True)
class AttackReport:
    budgets: tuple[int, ...]
    pre_accuracy: float
    post_accuracy: dict[int, float]
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "budgets": list(self.budgets),
            "pre_accuracy": self.pre_accuracy,
            "post_accuracy": {str(k): v for k, v in self.post_accuracy.items()},
            "n_samples": self.n_samples,
        }


def run_attack(
    params: ClassifierParams,
    examples: Sequence[Example],
    budgets: Sequence[int],
    antonyms: AntonymLexicon,
    vocab: Vocabulary,
) -> AttackReport:
    """Post-attack accuracy per budget; one greedy pass at the largest budget.

    The greedy trajectory is deterministic and stops at the first flip, so the
    outcome at budget k is "flipped iff flip_step <= k" from the max-budget run.
    """
    if not examples:
        raise EvaluationError("cannot attack an empty set")
    budgets = tuple(sorted(set(int(b) for b in budgets)))
    if not budgets:
        raise EvaluationError("no attack budgets given")
    max_budget = budgets[-1]
    flip_steps: list[int | None] = []
    for ts, label in examples:
        result = greedy_attack(params, ts, label, max_budget, antonyms, vocab)
        flip_steps.append(result.flip_step)
    n = len(examples)
    pre = sum(1 for s in flip_steps if s != 0) / n
    post = {
        k: sum(1 for s in flip_steps if s is None or s > k) / n for k in budgets
    }
    return AttackReport(budgets=budgets, pre_accuracy=pre, post_accuracy=post, n_samples=n)


def swap_attributes(
    sample: TokenizedSample, attributes: AttributePairLexicon, vocab: Vocabulary
) -> TokenizedSample:
    """Replace every attribute-term occurrence by its paired opposite."""
    tokens = tuple(attributes.swap(t) or t for t in sample.tokens)
    return TokenizedSample(sample_id=sample.sample_id, tokens=tokens, token_ids=vocab.encode(tokens))


@dataclass(frozen=True)
class PCRResult:
    pcr: float
    n_evaluated: int
    n_changed: int

    def to_dict(self) -> dict:
        return {"pcr": self.pcr, "n_evaluated": self.n_evaluated, "n_changed": self.n_changed}


def perturbation_consistency_rate(
    params: ClassifierParams,
    examples: Sequence[Example],
    attributes: AttributePairLexicon,
    vocab: Vocabulary,
) -> PCRResult:
    """Fraction of attribute-bearing samples whose argmax survives the swap."""
    subset = [ts for ts, _ in examples if any(t in attributes for t in ts.tokens)]
    if not subset:
        raise EvaluationError("no samples contain attribute terms")
    changed = 0
    for ts in subset:
        before = predict_label(params, ts)
        after = predict_label(params, swap_attributes(ts, attributes, vocab))
        changed += int(before != after)
    return PCRResult(
        pcr=(len(subset) - changed) / len(subset), n_evaluated=len(subset), n_changed=changed
    )


def assign_attribute_group(tokens: Sequence[str], attributes: AttributePairLexicon) -> str | None:
    """'a' or 'b' by majority attribute-term occurrences; ties and no-terms -> None."""
    count_a = sum(1 for t in tokens if attributes.side(t) == "a")
    count_b = sum(1 for t in tokens if attributes.side(t) == "b")
    if count_a == count_b:
        return None
    return "a" if count_a > count_b else "b"


@dataclass(frozen=True)
class FairnessReport:
    fped: float | None
    fned: float | None
    rates: dict[str, float | None] = field(default_factory=dict)
    group_sizes: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "fped": self.fped,
            "fned": self.fned,
            "rates": dict(self.rates),
            "group_sizes": dict(self.group_sizes),
        }


def _rate(hits: int, denom: int) -> float | None:
    return hits / denom if denom > 0 else None


def equality_differences(
    predictions: Sequence[int],
    labels: Sequence[int],
    groups: Sequence[str | None],
) -> FairnessReport:
    """Sums of |group FPR/FNR - overall rate| over the assigned groups.

    Overall rates are computed on the union of assigned samples. A group with
    an undefined rate (no negatives or no positives) makes the corresponding
    difference not-applicable (None) rather than zero.
    """
    if not (len(predictions) == len(labels) == len(groups)):
        raise EvaluationError("predictions, labels, and groups must align")
    keys = ("all", "a", "b")
    fp = {k: 0 for k in keys}
    neg = {k: 0 for k in keys}
    fn = {k: 0 for k in keys}
    pos = {k: 0 for k in keys}
    sizes = {"a": 0, "b": 0}
    for pred, label, group in zip(predictions, labels, groups):
        if group not in ("a", "b"):
            continue
        sizes[group] += 1
        for k in ("all", group):
            if label == 0:
                neg[k] += 1
                fp[k] += int(pred == 1)
            else:
                pos[k] += 1
                fn[k] += int(pred == 0)
    rates: dict[str, float | None] = {}
    for k in keys:
        rates[f"fpr_{k}"] = _rate(fp[k], neg[k])
        rates[f"fnr_{k}"] = _rate(fn[k], pos[k])

    def diff_sum(metric: str) -> float | None:
        overall = rates[f"{metric}_all"]
        if overall is None:
            return None
        parts = [rates[f"{metric}_a"], rates[f"{metric}_b"]]
        if any(p is None for p in parts):
            return None
        return float(sum(abs(p - overall) for p in parts))  # type: ignore[arg-type]

    return FairnessReport(
        fped=diff_sum("fpr"), fned=diff_sum("fnr"), rates=rates, group_sizes=sizes
    )
