"""Training loops: plain cross-entropy (ERM) and the contrastive objective.

The contrastive objective per sample with projections z (anchor), z+ and
z-_1..z-_l is

    max(0, margin - cos(z, z+) + sum_i alpha_i * cos(z, z-_i))      (canonical)
    max(0, margin + cos(z, z+) - sum_i alpha_i * cos(z, z-_i))      (literal)

where alpha = softmax(concat(z-_1..z-_l) @ W + b) is a learned vote over the
negatives. The batch loss is  CE + lambda * mean-over-augmented-samples(hinge).
All gradients are derived by hand and validated against central finite
differences in the test suite; everything runs in float64.

With lambda == 0 the loop skips the contrastive computation entirely, so an
ERM run and a lambda=0 contrastive run produce bit-identical trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .augmentation import AugmentedSet
from .corpus import PAD_ID, TokenizedSample
from .errors import ConfigError, TrainingError
from .model import ClassifierParams, ModelConfig, _activate, _activation_grad

LOSS_FORMS = ("canonical", "literal")
ABLATIONS = ("none", "wo-voting", "wo-wordgroups")
_NORM_FLOOR = 1e-30

TrainExample = tuple[TokenizedSample, int]


@dataclass(frozen=True)
class TrainConfig:
    lambda_: float = 0.01
    margin: float = 1.0
    loss_form: str = "canonical"
    ablation: str = "none"
    projection_dim: int = 64
    num_groups: int = 3
    epochs: int = 5
    learning_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.lambda_ < 0:
            raise ConfigError("lambda must be >= 0")
        if self.loss_form not in LOSS_FORMS:
            raise ConfigError(f"loss_form must be one of {LOSS_FORMS}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}")
        if self.projection_dim < 2:
            raise ConfigError("projection_dim must be >= 2")
        if self.num_groups < 1 or self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("invalid training settings")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        return self


@dataclass
class ProjectionParams:
    p1: np.ndarray  # (dz, H)
    c1: np.ndarray  # (dz,)
    p2: np.ndarray  # (dz, dz)
    c2: np.ndarray  # (dz,)

    def trainable(self) -> dict[str, np.ndarray]:
        return {"proj_p1": self.p1, "proj_c1": self.c1, "proj_p2": self.p2, "proj_c2": self.c2}

    def copy(self) -> "ProjectionParams":
        return ProjectionParams(self.p1.copy(), self.c1.copy(), self.p2.copy(), self.c2.copy())


@dataclass
class VotingParams:
    w: np.ndarray  # (dz * l, l)
    b: np.ndarray  # (l,)

    def trainable(self) -> dict[str, np.ndarray]:
        return {"vote_w": self.w, "vote_b": self.b}

    def copy(self) -> "VotingParams":
        return VotingParams(self.w.copy(), self.b.copy())


@dataclass(frozen=True)
class LossBreakdown:
    step: int
    ce: float
    cl: float
    total: float
    alpha_mean: tuple[float, ...]


def init_projection(hidden_dim: int, projection_dim: int, seed: int) -> ProjectionParams:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
    return ProjectionParams(
        p1=rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), size=(projection_dim, hidden_dim)),
        c1=np.zeros(projection_dim),
        p2=rng.normal(0.0, 1.0 / np.sqrt(projection_dim), size=(projection_dim, projection_dim)),
        c2=np.zeros(projection_dim),
    )


def init_voting(projection_dim: int, num_groups: int) -> VotingParams:
    # Zero init makes the initial vote uniform over the negatives.
    return VotingParams(w=np.zeros((projection_dim * num_groups, num_groups)), b=np.zeros(num_groups))


def project(proj: ProjectionParams, h: np.ndarray) -> np.ndarray:
    """Two affine layers with tanh between; shared across all tuple members."""
    z, _ = _project_forward(proj, np.asarray(h, dtype=np.float64))
    return z


def _project_forward(proj: ProjectionParams, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = np.tanh(h @ proj.p1.T + proj.c1)
    return t @ proj.p2.T + proj.c2, t


def _project_backward(
    proj: ProjectionParams, h: np.ndarray, t: np.ndarray, dz: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    dt = dz @ proj.p2
    dq = dt * (1.0 - t * t)
    grads = {
        "proj_p2": dz.T @ t,
        "proj_c2": dz.sum(axis=0),
        "proj_p1": dq.T @ h,
        "proj_c1": dq.sum(axis=0),
    }
    return dq @ proj.p1, grads


def voting_weights(
    voting: VotingParams, z_negatives: np.ndarray, valid: np.ndarray | None = None
) -> np.ndarray:
    """softmax over l logits from the concatenated projected negatives.

    `valid` masks padded slots: their logits go to -inf, so their weight is
    exactly zero and the rest still sums to one.
    """
    z_negatives = np.asarray(z_negatives, dtype=np.float64)
    num_groups = voting.b.shape[0]
    if z_negatives.shape != (num_groups, voting.w.shape[0] // num_groups):
        raise TrainingError(
            f"expected {num_groups} projected negatives of dim "
            f"{voting.w.shape[0] // num_groups}, got shape {z_negatives.shape}"
        )
    logits = z_negatives.reshape(-1) @ voting.w + voting.b
    if valid is None:
        valid = np.ones(num_groups, dtype=bool)
    if not valid.any():
        raise TrainingError("voting requires at least one valid negative")
    alpha = np.zeros(num_groups)
    shifted = logits[valid] - logits[valid].max()
    exp = np.exp(shifted)
    alpha[valid] = exp / exp.sum()
    return alpha


def _cosine(a: np.ndarray, b: np.ndarray) -> tuple[float, float, float]:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < _NORM_FLOOR or nb < _NORM_FLOOR:
        raise TrainingError("cosine similarity undefined for a zero-norm projection")
    return float(a @ b) / (na * nb), na, nb


def _cosine_backward(
    a: np.ndarray, b: np.ndarray, c: float, na: float, nb: float
) -> tuple[np.ndarray, np.ndarray]:
    da = b / (na * nb) - c * a / (na * na)
    db = a / (na * nb) - c * b / (nb * nb)
    return da, db


def contrastive_loss(
    z: np.ndarray,
    z_pos: np.ndarray,
    z_negatives: np.ndarray,
    alpha: np.ndarray,
    margin: float = 1.0,
    form: str = "canonical",
) -> float:
    """Margin hinge over cosine similarities; see the module docstring."""
    if form not in LOSS_FORMS:
        raise ConfigError(f"loss form must be one of {LOSS_FORMS}")
    c_pos, _, _ = _cosine(z, z_pos)
    voted = 0.0
    for i in range(z_negatives.shape[0]):
        if alpha[i] != 0.0:
            c_neg, _, _ = _cosine(z, z_negatives[i])
            voted += float(alpha[i]) * c_neg
    t = margin - c_pos + voted if form == "canonical" else margin + c_pos - voted
    return max(0.0, t)


def total_loss(ce: float, cl: float, lambda_: float) -> float:
    if lambda_ < 0:
        raise ConfigError("lambda must be >= 0")
    return ce + lambda_ * cl


class Adam:
    """Standard adaptive-moment optimizer over named arrays (updated in place)."""

    def __init__(
        self,
        arrays: dict[str, np.ndarray],
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.arrays = arrays
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for key, grad in grads.items():
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            self.arrays[key] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def _pad_batch(id_seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    max_len = max(len(ids) for ids in id_seqs)
    ids = np.full((len(id_seqs), max_len), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(id_seqs), max_len))
    for i, seq in enumerate(id_seqs):
        ids[i, : len(seq)] = seq
        mask[i, : len(seq)] = 1.0
    return ids, mask


def _ce_batch(
    params: ClassifierParams, ids: np.ndarray, mask: np.ndarray, labels: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch and its gradients."""
    batch = ids.shape[0]
    x = params.embedding[ids] * mask[:, :, None]
    counts = mask.sum(axis=1)
    pooled = x.sum(axis=1) / counts[:, None]
    u = pooled @ params.w1.T + params.b1
    h = _activate(params, u)
    logits = h @ params.w2.T + params.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - logz[:, None]
    ce = -float(logp[np.arange(batch), labels].mean())

    probs = np.exp(logp)
    dlogits = probs.copy()
    dlogits[np.arange(batch), labels] -= 1.0
    dlogits /= batch
    dh = dlogits @ params.w2
    du = dh * _activation_grad(params, h)
    dpooled = du @ params.w1
    dx = (dpooled / counts[:, None])[:, None, :] * mask[:, :, None]
    dembedding = np.zeros_like(params.embedding)
    np.add.at(dembedding, ids.ravel(), dx.reshape(-1, params.config.embed_dim))
    grads = {
        "embedding": dembedding,
        "w1": du.T @ pooled,
        "b1": du.sum(axis=0),
        "w2": dlogits.T @ h,
        "b2": dlogits.sum(axis=0),
    }
    return ce, grads


def _stack_tuple(aug: AugmentedSet, num_groups: int) -> tuple[np.ndarray, np.ndarray]:
    """(2 + l, n) id matrix: anchor, positive, then negatives padded by repeats."""
    negatives = list(aug.negatives[:num_groups])
    valid = np.zeros(num_groups, dtype=bool)
    valid[: len(negatives)] = True
    while len(negatives) < num_groups:
        negatives.append(negatives[-1])
    rows = [aug.anchor.token_ids, aug.positive.token_ids] + [n.token_ids for n in negatives]
    return np.asarray(rows, dtype=np.int64), valid


def _contrastive_sample(
    params: ClassifierParams,
    proj: ProjectionParams,
    voting: VotingParams,
    aug: AugmentedSet,
    config: TrainConfig,
    emb_grad_out: np.ndarray | None,
) -> tuple[float, np.ndarray, dict[str, np.ndarray] | None]:
    """Hinge loss and vote vector for one sample; gradients if a buffer is given.

    Non-embedding gradients come back in the dict; the embedding gradient is
    scattered (unscaled) into `emb_grad_out` to avoid allocating a table-sized
    array per sample.
    """
    ids, valid = _stack_tuple(aug, config.num_groups)
    n_tokens = ids.shape[1]
    x = params.embedding[ids]
    pooled = x.mean(axis=1)
    u = pooled @ params.w1.T + params.b1
    h = _activate(params, u)
    z_all, t_all = _project_forward(proj, h)

    z, z_pos, z_neg = z_all[0], z_all[1], z_all[2:]
    if config.ablation == "wo-voting":
        alpha = np.zeros(config.num_groups)
        alpha[0] = 1.0  # highest-scored group only
    else:
        alpha = voting_weights(voting, z_neg, valid)

    c_pos, n_a, n_p = _cosine(z, z_pos)
    c_neg = np.zeros(config.num_groups)
    norms_neg = np.zeros(config.num_groups)
    for i in range(config.num_groups):
        c_neg[i], _, norms_neg[i] = _cosine(z, z_neg[i])
    voted = float(alpha @ c_neg)

    sign = 1.0 if config.loss_form == "canonical" else -1.0
    # canonical: margin - c_pos + voted ; literal: margin + c_pos - voted
    t_val = config.margin - sign * c_pos + sign * voted
    loss = max(0.0, t_val)
    if emb_grad_out is None or loss == 0.0:
        return loss, alpha, None

    dc_pos = -sign
    dc_neg = sign * alpha
    dalpha = sign * c_neg

    dz_all = np.zeros_like(z_all)
    da, db = _cosine_backward(z, z_pos, c_pos, n_a, n_p)
    dz_all[0] += dc_pos * da
    dz_all[1] += dc_pos * db
    for i in range(config.num_groups):
        if dc_neg[i] != 0.0:
            da, db = _cosine_backward(z, z_neg[i], c_neg[i], n_a, norms_neg[i])
            dz_all[0] += dc_neg[i] * da
            dz_all[2 + i] += dc_neg[i] * db

    grads: dict[str, np.ndarray] = {}
    if config.ablation != "wo-voting":
        # softmax backward; padded slots have alpha == 0, so they drop out.
        ds = alpha * (dalpha - float(dalpha @ alpha))
        flat = z_neg.reshape(-1)
        grads["vote_w"] = np.outer(flat, ds)
        grads["vote_b"] = ds
        dz_all[2:] += (voting.w @ ds).reshape(config.num_groups, -1)

    dh, proj_grads = _project_backward(proj, h, t_all, dz_all)
    grads.update(proj_grads)
    du = dh * _activation_grad(params, h)
    grads["w1"] = du.T @ pooled
    grads["b1"] = du.sum(axis=0)
    dpooled = du @ params.w1
    dx = np.repeat(dpooled[:, None, :] / n_tokens, n_tokens, axis=1)
    np.add.at(emb_grad_out, ids.ravel(), dx.reshape(-1, params.config.embed_dim))
    return loss, alpha, grads


def _accumulate(into: dict[str, np.ndarray], grads: dict[str, np.ndarray], scale: float) -> None:
    for key, grad in grads.items():
        if key in into:
            into[key] += scale * grad
        else:
            into[key] = scale * grad


def _batch_step(
    params: ClassifierParams,
    proj: ProjectionParams | None,
    voting: VotingParams | None,
    batch: Sequence[TrainExample],
    augmented: Mapping[str, AugmentedSet] | None,
    config: TrainConfig | None,
    want_grads: bool,
) -> tuple[float, float, tuple[float, ...], dict[str, np.ndarray] | None]:
    """(ce, cl, mean alpha, grads) for one batch; grads=None on forward-only."""
    ids, mask = _pad_batch([ts.token_ids for ts, _ in batch])
    labels = np.asarray([label for _, label in batch], dtype=np.int64)
    ce, grads = _ce_batch(params, ids, mask, labels)
    cl = 0.0
    alpha_mean: tuple[float, ...] = ()
    if config is not None and augmented is not None:
        assert proj is not None and voting is not None
        with_aug = [ts for ts, _ in batch if ts.sample_id in augmented]
        if with_aug:
            emb_buffer = np.zeros_like(params.embedding) if want_grads else None
            cl_sum = 0.0
            cl_grads: dict[str, np.ndarray] = {}
            alphas = []
            for ts in with_aug:
                loss, alpha, sample_grads = _contrastive_sample(
                    params, proj, voting, augmented[ts.sample_id], config, emb_buffer
                )
                cl_sum += loss
                alphas.append(alpha)
                if sample_grads is not None:
                    _accumulate(cl_grads, sample_grads, 1.0)
            cl = cl_sum / len(with_aug)
            alpha_mean = tuple(float(v) for v in np.mean(alphas, axis=0))
            if want_grads:
                scale = config.lambda_ / len(with_aug)
                _accumulate(grads, cl_grads, scale)
                grads["embedding"] += scale * emb_buffer
        if want_grads:
            # Step every parameter every batch so Adam bias correction is uniform.
            for key, arr in {**proj.trainable(), **voting.trainable()}.items():
                grads.setdefault(key, np.zeros_like(arr))
    return ce, cl, alpha_mean, (grads if want_grads else None)


def acwg_batch_loss(
    params: ClassifierParams,
    proj: ProjectionParams,
    voting: VotingParams,
    batch: Sequence[TrainExample],
    augmented: Mapping[str, AugmentedSet],
    config: TrainConfig,
) -> tuple[float, float, float]:
    """(total, ce, cl) for one batch; pure forward, used by the FD checks."""
    ce, cl, _, _ = _batch_step(params, proj, voting, batch, augmented, config, False)
    return total_loss(ce, cl, config.lambda_), ce, cl


def acwg_batch_grads(
    params: ClassifierParams,
    proj: ProjectionParams,
    voting: VotingParams,
    batch: Sequence[TrainExample],
    augmented: Mapping[str, AugmentedSet],
    config: TrainConfig,
) -> tuple[float, dict[str, np.ndarray]]:
    """Analytic gradients of the batch objective, keyed like the trainables."""
    ce, cl, _, grads = _batch_step(params, proj, voting, batch, augmented, config, True)
    assert grads is not None
    return total_loss(ce, cl, config.lambda_), grads


def _run_loop(
    params: ClassifierParams,
    examples: Sequence[TrainExample],
    *,
    epochs: int,
    batch_size: int,
    learning_rate: float,
    seed: int,
    contrastive: tuple[ProjectionParams, VotingParams, Mapping[str, AugmentedSet], TrainConfig] | None,
) -> tuple[ClassifierParams, ProjectionParams | None, VotingParams | None, list[LossBreakdown]]:
    if not examples:
        raise TrainingError("training set is empty")
    params = params.copy()
    proj = vot = None
    augmented: Mapping[str, AugmentedSet] | None = None
    tconf: TrainConfig | None = None
    arrays = dict(params.trainable())
    if contrastive is not None:
        proj, vot, augmented, tconf = contrastive
        proj, vot = proj.copy(), vot.copy()
        arrays.update(proj.trainable())
        arrays.update(vot.trainable())
    optimizer = Adam(arrays, learning_rate)
    rng = np.random.default_rng(seed)
    logs: list[LossBreakdown] = []
    step = 0
    lam = tconf.lambda_ if tconf is not None else 0.0
    for _ in range(epochs):
        order = rng.permutation(len(examples))
        for start in range(0, len(examples), batch_size):
            batch = [examples[i] for i in order[start : start + batch_size]]
            ce, cl, alpha_mean, grads = _batch_step(
                params, proj, vot, batch, augmented, tconf, True
            )
            assert grads is not None
            total = total_loss(ce, cl, lam)
            if not np.isfinite(total):
                raise TrainingError(
                    f"non-finite loss at step {step} (ce={ce!r}, cl={cl!r}); aborting"
                )
            optimizer.step(grads)
            logs.append(LossBreakdown(step=step, ce=ce, cl=cl, total=total, alpha_mean=alpha_mean))
            step += 1
    return params, proj, vot, logs


def train_erm(
    params: ClassifierParams, examples: Sequence[TrainExample], config: ModelConfig
) -> tuple[ClassifierParams, list[float]]:
    """Cross-entropy training producing the mining model; returns per-epoch means."""
    config.validate()
    trained, _, _, logs = _run_loop(
        params,
        examples,
        epochs=config.epochs,
        batch_size=config.batch_size,
        learning_rate=config.learning_rate,
        seed=config.seed,
        contrastive=None,
    )
    per_epoch = _epoch_means([log.ce for log in logs], len(examples), config.batch_size, config.epochs)
    return trained, per_epoch


def train_acwg(
    params: ClassifierParams,
    proj: ProjectionParams,
    voting: VotingParams,
    examples: Sequence[TrainExample],
    augmented: Mapping[str, AugmentedSet],
    config: TrainConfig,
) -> tuple[ClassifierParams, ProjectionParams, VotingParams, list[LossBreakdown]]:
    """Joint training on CE + lambda * contrastive hinge over augmented tuples."""
    config.validate()
    contrastive = (proj, voting, augmented, config) if config.lambda_ > 0 else None
    trained, proj_out, vot_out, logs = _run_loop(
        params,
        examples,
        epochs=config.epochs,
        batch_size=config.batch_size,
        learning_rate=config.learning_rate,
        seed=config.seed,
        contrastive=contrastive,
    )
    return trained, proj_out if proj_out is not None else proj.copy(), (
        vot_out if vot_out is not None else voting.copy()
    ), logs


def _epoch_means(values: list[float], n: int, batch_size: int, epochs: int) -> list[float]:
    if epochs == 0:
        return []
    per_epoch = (n + batch_size - 1) // batch_size
    return [
        float(np.mean(values[e * per_epoch : (e + 1) * per_epoch])) for e in range(epochs)
    ]
