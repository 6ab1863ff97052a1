"""Causal word-group mining, counterfactual augmentation, and robust training."""

from .corpus import (
    MASK_TOKEN,
    PAD_TOKEN,
    UNK_TOKEN,
    AntonymLexicon,
    AttributePairLexicon,
    Sample,
    TokenizedSample,
    Vocabulary,
    build_vocab,
    load_dataset,
    normalize_text,
    tokenize,
    tokenize_corpus,
    tokenize_sample,
)
from .errors import (
    AcwgError,
    AttributionError,
    ConfigError,
    DatasetError,
    DependencyError,
    EvaluationError,
    LexiconError,
    ModelError,
    SearchError,
    TrainingError,
)
from .model import (
    ClassifierParams,
    ModelConfig,
    PredictionOutput,
    forward,
    grad_wrt_embeddings,
    init_params,
    load_params,
    predict_batch,
    save_params,
)
from .attribution import (
    AttributionRecord,
    CandidateSet,
    CorpusScoreTable,
    candidates_for_sample,
    compute_corpus_scores,
    integrated_gradients,
    select_candidates,
)
from .wordgroup import (
    GroupSet,
    SearchConfig,
    WordGroup,
    beam_search,
    brute_force_groups,
    causal_effect,
    counterfactual_flip,
    symmetric_kl,
)
from .augmentation import AugmentedSet, build_augmented_batch, make_negatives, make_positive
from .training import (
    LossBreakdown,
    ProjectionParams,
    TrainConfig,
    VotingParams,
    contrastive_loss,
    init_projection,
    init_voting,
    project,
    total_loss,
    train_acwg,
    train_erm,
    voting_weights,
)
from .evaluation import (
    AttackReport,
    FairnessReport,
    LFRReport,
    PCRResult,
    equality_differences,
    evaluate_accuracy,
    greedy_attack,
    label_flipping_rate,
    perturbation_consistency_rate,
    run_attack,
    swap_attributes,
)
from .estimator import AcwgTextClassifier, ErmTextClassifier

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
