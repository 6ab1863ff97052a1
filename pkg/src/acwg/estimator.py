"""scikit-learn style estimators wrapping the two-phase training pipeline."""

from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .augmentation import build_augmented_batch
from .corpus import (
    PAD_ID,
    AntonymLexicon,
    Sample,
    build_vocab,
    normalize_text,
    tokenize,
    tokenize_sample,
)
from .errors import ConfigError
from .mining import mine
from .model import ClassifierParams, ModelConfig, forward, init_params
from .training import TrainConfig, init_projection, init_voting, train_acwg, train_erm
from .wordgroup import GroupSet, SearchConfig

logger = logging.getLogger(__name__)


def check_texts(X) -> list[str]:
    """Validate a 1-d collection of strings."""
    if isinstance(X, str):
        raise ConfigError("X must be a sequence of texts, not a single string")
    texts = list(np.asarray(X, dtype=object).ravel()) if hasattr(X, "shape") else list(X)
    if not texts:
        raise ConfigError("X is empty")
    for i, t in enumerate(texts):
        if not isinstance(t, str):
            raise ConfigError(f"X[{i}] is not a string (got {type(t).__name__})")
    return texts


def check_binary_labels(y, n: int) -> np.ndarray:
    labels = np.asarray(y).ravel()
    if labels.shape[0] != n:
        raise ConfigError(f"X has {n} rows but y has {labels.shape[0]}")
    try:
        labels = labels.astype(np.int64)
    except (TypeError, ValueError):
        raise ConfigError("y must contain integer class labels")
    if not np.isin(labels, (0, 1)).all():
        raise ConfigError("y must contain only the labels 0 and 1")
    return labels


class ErmTextClassifier(BaseEstimator, ClassifierMixin):
    """Plain cross-entropy text classifier (the mining / baseline model)."""

    def __init__(
        self,
        embed_dim: int = 64,
        hidden_dim: int = 128,
        learning_rate: float = 1e-3,
        batch_size: int = 64,
        epochs: int = 5,
        min_count: int = 1,
        random_state: int = 0,
    ):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.min_count = min_count
        self.random_state = random_state

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            seed=self.random_state,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
        ).validate()

    def _prepare_training_corpus(self, X, y):
        texts = check_texts(X)
        labels = check_binary_labels(y, len(texts))
        samples = []
        dropped = 0
        for i, text in enumerate(texts):
            cleaned = normalize_text(text)
            if not cleaned:
                dropped += 1
                continue
            samples.append(Sample(id=f"fit-{i:06d}", text=cleaned, label=int(labels[i])))
        if dropped:
            logger.info("fit: dropped %d empty-after-normalization text(s)", dropped)
        if not samples:
            raise ConfigError("every training text normalized to the empty string")
        vocab = build_vocab(samples, min_count=self.min_count)
        tokenized = [
            TokenizedSample(s.id, tuple(tokenize(s.text)), vocab.encode(tokenize(s.text)))
            for s in samples
        ]
        examples = [(ts, s.label) for ts, s in zip(tokenized, samples)]
        return vocab, tokenized, examples

    def fit(self, X, y):
        vocab, _, examples = self._prepare_training_corpus(X, y)
        params = init_params(self._model_config(), len(vocab))
        self.params_, self.loss_curve_ = train_erm(params, examples, params.config)
        self.vocab_ = vocab
        self.classes_ = np.array([0, 1])
        return self

    def _encode(self, text: str) -> tuple[int, ...]:
        tokens = tokenize(normalize_text(text))
        # Empty texts fall back to the zero (pad) embedding: the model prior.
        return self.vocab_.encode(tokens) if tokens else (PAD_ID,)

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        texts = check_texts(X)
        return np.vstack([forward(self.params_, self._encode(t)).probs for t in texts])

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


class AcwgTextClassifier(ErmTextClassifier):
    """Two-phase classifier: ERM, word-group mining, counterfactual contrast.

    `antonyms` maps words to antonym lists (dict, AntonymLexicon, or None);
    group members without an antonym flip to the mask token.
    """

    def __init__(
        self,
        embed_dim: int = 64,
        hidden_dim: int = 128,
        learning_rate: float = 1e-3,
        batch_size: int = 64,
        epochs: int = 5,
        min_count: int = 1,
        random_state: int = 0,
        lambda_: float = 0.01,
        margin: float = 1.0,
        loss_form: str = "canonical",
        ablation: str = "none",
        beam_width: int = 2,
        max_group_len: int = 3,
        num_groups: int = 3,
        mask_prob: float = 0.5,
        ig_steps: int = 50,
        candidate_fraction: float = 0.2,
        attribution_selector: str = "true_prob",
        projection_dim: int = 64,
        acwg_epochs: int = 5,
        antonyms=None,
        n_jobs: int = 1,
    ):
        super().__init__(
            embed_dim=embed_dim,
            hidden_dim=hidden_dim,
            learning_rate=learning_rate,
            batch_size=batch_size,
            epochs=epochs,
            min_count=min_count,
            random_state=random_state,
        )
        self.lambda_ = lambda_
        self.margin = margin
        self.loss_form = loss_form
        self.ablation = ablation
        self.beam_width = beam_width
        self.max_group_len = max_group_len
        self.num_groups = num_groups
        self.mask_prob = mask_prob
        self.ig_steps = ig_steps
        self.candidate_fraction = candidate_fraction
        self.attribution_selector = attribution_selector
        self.projection_dim = projection_dim
        self.acwg_epochs = acwg_epochs
        self.antonyms = antonyms
        self.n_jobs = n_jobs

    def _antonym_lexicon(self) -> AntonymLexicon:
        if self.antonyms is None:
            return AntonymLexicon()
        if isinstance(self.antonyms, AntonymLexicon):
            return self.antonyms
        return AntonymLexicon(dict(self.antonyms))

    def fit(self, X, y):
        vocab, tokenized, examples = self._prepare_training_corpus(X, y)
        antonyms = self._antonym_lexicon()
        search = SearchConfig(
            beam_width=self.beam_width,
            max_group_len=self.max_group_len,
            num_groups=self.num_groups,
        ).validate()

        params = init_params(self._model_config(), len(vocab))
        base_params, self.loss_curve_ = train_erm(params, examples, params.config)

        labels = [label for _, label in examples]
        mining = mine(
            base_params,
            tokenized,
            labels,
            vocab,
            antonyms,
            search,
            ig_steps=self.ig_steps,
            selector=self.attribution_selector,
            candidate_fraction=self.candidate_fraction,
            jobs=self.n_jobs,
        )
        group_sets = mining.group_sets
        if self.ablation == "wo-wordgroups":
            group_sets = {
                sid: GroupSet(
                    sample_id=sid,
                    groups=(gs.best_singleton,) if gs.best_singleton else (),
                    candidates=gs.candidates,
                    best_singleton=gs.best_singleton,
                )
                for sid, gs in group_sets.items()
            }
        augmented, skipped = build_augmented_batch(
            tokenized, group_sets, antonyms, vocab, self.mask_prob, self.random_state
        )
        if skipped:
            logger.info("fit: %d sample(s) have no word-groups; CE-only", len(skipped))

        tconf = TrainConfig(
            lambda_=self.lambda_,
            margin=self.margin,
            loss_form=self.loss_form,
            ablation=self.ablation,
            projection_dim=self.projection_dim,
            num_groups=self.num_groups,
            epochs=self.acwg_epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            seed=self.random_state,
        ).validate()
        proj = init_projection(self.hidden_dim, self.projection_dim, self.random_state)
        voting = init_voting(self.projection_dim, self.num_groups)
        self.params_, self.projection_, self.voting_, self.training_log_ = train_acwg(
            base_params, proj, voting, examples, {a.sample_id: a for a in augmented}, tconf
        )
        self.base_params_ = base_params
        self.vocab_ = vocab
        self.candidates_ = mining.candidates
        self.group_sets_ = group_sets
        self.classes_ = np.array([0, 1])
        return self
