"""Linear two-layer GCN surrogate: ``softmax(Â Â X W)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyLabeledSet, ValidationError
from .graph import Graph, NormalizedAdjacency, normalize_adjacency
from .optim import Adam, glorot_uniform, log_softmax, softmax


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError("epochs must be non-negative")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be non-negative")


@dataclass(frozen=True, eq=False)
class SurrogateParams:
    W: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.W)):
            raise ValidationError("surrogate weights must be finite")


@dataclass(frozen=True, eq=False)
class PredictionTable:
    probs: np.ndarray
    pseudo_labels: np.ndarray
    confidences: np.ndarray

    @property
    def n(self) -> int:
        return self.probs.shape[0]


def derive_seed(base_seed: int, step: int) -> int:
    """Per-step retraining seed, reproducible and decorrelated across steps."""
    return int(np.random.SeedSequence([int(base_seed) & 0xFFFFFFFF, int(step)]).generate_state(1)[0])


def propagate(a_hat: NormalizedAdjacency, features: np.ndarray) -> np.ndarray:
    """Two rounds of normalized aggregation, ``Â Â X``."""
    return a_hat @ (a_hat @ features)


def logits(params: SurrogateParams, g: Graph, a_hat: NormalizedAdjacency | None = None) -> np.ndarray:
    if params.W.shape[0] != g.d:
        raise DimensionMismatch(f"W has {params.W.shape[0]} rows, features have {g.d} columns")
    if a_hat is None:
        a_hat = normalize_adjacency(g)
    return a_hat @ (a_hat @ (g.features @ params.W))


def forward(params: SurrogateParams, g: Graph, a_hat: NormalizedAdjacency | None = None) -> np.ndarray:
    return softmax(logits(params, g, a_hat))


def _labeled_targets(g: Graph, labeled) -> tuple[np.ndarray, np.ndarray]:
    idx = np.asarray(sorted(labeled), dtype=np.int64)
    if idx.size == 0:
        raise EmptyLabeledSet("surrogate training needs at least one labeled node")
    y = g.labels[idx]
    if (y < 0).any():
        raise ValidationError(f"labeled nodes without a label: {idx[y < 0][:10].tolist()}")
    return idx, y


def init_params(g: Graph, seed: int) -> np.ndarray:
    return glorot_uniform(np.random.default_rng(seed), g.d, g.k)


def train(
    g: Graph,
    labeled,
    cfg: TrainConfig = TrainConfig(),
    a_hat: NormalizedAdjacency | None = None,
    loss_trace: list | None = None,
) -> SurrogateParams:
    """Fit W by full-batch Adam on the mean cross-entropy of ``labeled``.

    The propagated features ``Â Â X`` do not depend on W, so only their
    labeled rows are computed once and reused every epoch. If ``loss_trace``
    is given, the regularized loss before each update is appended to it.
    """
    idx, y = _labeled_targets(g, labeled)
    if a_hat is None:
        a_hat = normalize_adjacency(g)
    z = propagate(a_hat, g.features)[idx]
    onehot = np.zeros((idx.size, g.k))
    onehot[np.arange(idx.size), y] = 1.0

    W = init_params(g, cfg.seed)
    opt = Adam([W], lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    for _ in range(cfg.epochs):
        out = z @ W
        if loss_trace is not None:
            ce = -log_softmax(out)[np.arange(idx.size), y].mean()
            loss_trace.append(ce + 0.5 * cfg.weight_decay * float(np.sum(W * W)))
        grad_out = (softmax(out) - onehot) / idx.size
        opt.step([z.T @ grad_out])
    return SurrogateParams(W)


def pseudo_label_table(params: SurrogateParams, g: Graph, a_hat: NormalizedAdjacency | None = None) -> PredictionTable:
    probs = forward(params, g, a_hat)
    # np.argmax returns the first maximum, i.e. the smallest class index on ties
    labels = probs.argmax(axis=1)
    conf = probs[np.arange(g.n), labels]
    return PredictionTable(probs=probs, pseudo_labels=labels, confidences=conf)
