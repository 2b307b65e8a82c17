"""Nonlinear two-layer GCN victim and the multi-seed evaluation protocol."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import EmptyLabeledSet, EmptyTestSet, ParseError, ValidationError
from .graph import Graph, NormalizedAdjacency, normalize_adjacency
from .optim import Adam, glorot_uniform, softmax


@dataclass(frozen=True)
class VictimConfig:
    hidden_dim: int = 16
    dropout: float = 0.5
    epochs: int = 200
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    n_trials: int = 10
    base_seed: int = 0

    def __post_init__(self):
        if self.hidden_dim < 1 or self.n_trials < 1 or self.epochs < 0:
            raise ValidationError("hidden_dim and n_trials must be positive, epochs non-negative")
        if not 0 <= self.dropout < 1:
            raise ValidationError("dropout must lie in [0, 1)")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValidationError("learning_rate must be positive and weight_decay non-negative")


@dataclass(eq=False)
class VictimParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def arrays(self):
        return [self.W1, self.b1, self.W2, self.b2]


@dataclass(eq=False)
class EvalReport:
    per_trial_accuracy: list[float]
    seeds: list[int] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_trial_accuracy))

    @property
    def std(self) -> float:
        # population std, as in "mean ± std" tables
        return float(np.std(self.per_trial_accuracy))


def _feature_operand(features: np.ndarray):
    # sparse bag-of-words features make input dropout and X^T G much cheaper
    if features.size and np.count_nonzero(features) < 0.1 * features.size:
        return sp.csr_matrix(features)
    return features


def _dropout(x, rate, rng):
    if rate == 0:
        return x
    keep = 1.0 - rate
    if sp.issparse(x):
        out = x.copy()
        out.data = out.data * (rng.random(out.data.size) < keep) / keep
        return out
    return x * (rng.random(x.shape) < keep) / keep


def init_victim(d: int, k: int, cfg: VictimConfig, rng: np.random.Generator) -> VictimParams:
    return VictimParams(
        W1=glorot_uniform(rng, d, cfg.hidden_dim),
        b1=np.zeros(cfg.hidden_dim),
        W2=glorot_uniform(rng, cfg.hidden_dim, k),
        b2=np.zeros(k),
    )


def train_victim(
    g: Graph,
    labeled,
    cfg: VictimConfig = VictimConfig(),
    seed: int = 0,
    a_hat: NormalizedAdjacency | None = None,
) -> VictimParams:
    """Train ``softmax(Â relu(Â X W1 + b1) W2 + b2)`` on the labeled nodes.

    Dropout is applied to the input features and to the hidden layer; all
    randomness (initialization and dropout masks) comes from ``seed``.
    """
    idx = np.asarray(sorted(labeled), dtype=np.int64)
    if idx.size == 0:
        raise EmptyLabeledSet("victim training needs at least one labeled node")
    y = g.labels[idx]
    if (y < 0).any():
        raise ValidationError("every labeled node needs a label")
    if a_hat is None:
        a_hat = normalize_adjacency(g)
    rng = np.random.default_rng(seed)
    params = init_victim(g.d, g.k, cfg, rng)
    X = _feature_operand(g.features)
    onehot = np.zeros((idx.size, g.k))
    onehot[np.arange(idx.size), y] = 1.0

    opt = Adam(params.arrays(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    keep = 1.0 - cfg.dropout
    for _ in range(cfg.epochs):
        Xd = _dropout(X, cfg.dropout, rng)
        pre = a_hat @ (Xd @ params.W1) + params.b1
        hidden = np.maximum(pre, 0.0)
        if cfg.dropout:
            mask = (rng.random(hidden.shape) < keep) / keep
            hidden_d = hidden * mask
        else:
            mask = None
            hidden_d = hidden
        out = a_hat @ (hidden_d @ params.W2) + params.b2

        G_out = np.zeros_like(out)
        G_out[idx] = (softmax(out[idx]) - onehot) / idx.size
        gb2 = G_out.sum(axis=0)
        G_hw = a_hat @ G_out
        gW2 = hidden_d.T @ G_hw
        G_hidden = G_hw @ params.W2.T
        if mask is not None:
            G_hidden *= mask
        G_pre = G_hidden * (pre > 0)
        gb1 = G_pre.sum(axis=0)
        gW1 = Xd.T @ (a_hat @ G_pre)
        opt.step([np.asarray(gW1), gb1, gW2, gb2])
    return params


def predict(params: VictimParams, g: Graph, a_hat: NormalizedAdjacency | None = None) -> np.ndarray:
    if a_hat is None:
        a_hat = normalize_adjacency(g)
    hidden = np.maximum(a_hat @ (g.features @ params.W1) + params.b1, 0.0)
    return softmax(a_hat @ (hidden @ params.W2) + params.b2)


def accuracy(probs: np.ndarray, test, true_labels) -> float:
    idx = np.asarray(sorted(test), dtype=np.int64)
    if idx.size == 0:
        raise EmptyTestSet("no test nodes")
    truth = np.asarray(true_labels)[idx]
    if (truth < 0).any():
        raise ValidationError("test nodes need ground-truth labels")
    return float(np.mean(probs[idx].argmax(axis=1) == truth))


def evaluate(params: VictimParams, g: Graph, test, true_labels, a_hat=None) -> float:
    """Fraction of ``test`` whose argmax prediction (ties -> class 0 side) is correct."""
    return accuracy(predict(params, g, a_hat), test, true_labels)


def trial_suite(g: Graph, labeled, test, cfg: VictimConfig = VictimConfig(), true_labels=None) -> EvalReport:
    """Train and score ``cfg.n_trials`` victims with seeds base_seed, base_seed+1, ..."""
    if true_labels is None:
        true_labels = g.labels
    if len(list(test)) == 0:
        raise EmptyTestSet("no test nodes")
    a_hat = normalize_adjacency(g)
    seeds = [cfg.base_seed + t for t in range(cfg.n_trials)]
    accs = [evaluate(train_victim(g, labeled, cfg, seed, a_hat), g, test, true_labels, a_hat) for seed in seeds]
    return EvalReport(per_trial_accuracy=accs, seeds=seeds)


def format_report(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "seed", "accuracy"])
    for t, (seed, acc) in enumerate(zip(report.seeds, report.per_trial_accuracy)):
        w.writerow([t, seed, repr(acc)])
    w.writerow(["mean", "", repr(report.mean)])
    w.writerow(["std", "", repr(report.std)])
    return buf.getvalue()


def parse_report(text: str, path="<report>") -> EvalReport:
    accs, seeds = [], []
    rows = list(csv.reader(io.StringIO(text)))
    for line_no, row in enumerate(rows, start=1):
        if not row or row[0] in ("trial", "mean", "std"):
            continue
        if len(row) != 3:
            raise ParseError(path, line_no, "expected trial,seed,accuracy")
        try:
            seeds.append(int(row[1]))
            accs.append(float(row[2]))
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
    return EvalReport(per_trial_accuracy=accs, seeds=seeds)
