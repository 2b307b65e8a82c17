"""Greedy gradient-guided edge flipping, plus the Random and DICE baselines."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoCandidates, ParseError, ValidationError
from .graph import Direction, EdgeFlip, Graph, apply_flip, normalize_adjacency
from .structgrad import AttackObjective, StructuralGradient, structural_gradient
from .surrogate import TrainConfig, derive_seed, pseudo_label_table, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttackConfig:
    budget_fraction: float = 0.05
    objective: AttackObjective = AttackObjective.GRAD_DEBIAS
    retrain_every: int = 1
    base_seed: int = 0
    train_cfg: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        object.__setattr__(self, "objective", AttackObjective.parse(self.objective))
        # 0 is accepted as the "clean graph" point of a budget sweep
        if not 0 <= self.budget_fraction <= 0.5:
            raise ValidationError(f"budget_fraction must be in (0, 0.5], got {self.budget_fraction}")
        if self.retrain_every < 1:
            raise ValidationError("retrain_every must be a positive integer")

    def budget(self, num_edges: int) -> int:
        """Number of flips: floor(fraction * |E|), at least 1 for a positive fraction."""
        if self.budget_fraction == 0:
            return 0
        return max(1, math.floor(self.budget_fraction * num_edges + 1e-9))

    def config_hash(self) -> str:
        d = dataclasses.asdict(self)
        d["objective"] = self.objective.value
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class FlipRecord:
    step: int
    flip: EdgeFlip
    score: float


@dataclass(eq=False)
class AttackRun:
    flips: list[FlipRecord]
    final_graph: Graph
    budget: int
    method: str
    truncated: bool = False
    config_hash: str = ""
    confidence_snapshots: list[np.ndarray] | None = None

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [r.flip.pair for r in self.flips]


# ---------------------------------------------------------------------------
# candidate scoring


def candidate_scores(g: Graph, grad: StructuralGradient | np.ndarray, forbidden=()) -> dict[tuple[int, int], float]:
    """Sign-consistent flip candidates and their saliency.

    An absent pair with positive gradient is an Add candidate, a present pair
    with negative gradient a Remove candidate; the score is the gradient
    magnitude. Everything else (and ``forbidden`` pairs) is dropped.
    """
    score = _score_matrix(g, grad)
    for i, j in forbidden:
        score[min(i, j), max(i, j)] = 0.0
    ii, jj = np.nonzero(score > 0)
    return {(int(i), int(j)): float(score[i, j]) for i, j in zip(ii, jj)}


def select_flip(scores: dict[tuple[int, int], float], g: Graph | None = None) -> EdgeFlip:
    """Highest score wins; ties go to the lexicographically smallest pair.

    The direction is read from ``g`` when given, otherwise reported as ADD.
    """
    if not scores:
        raise NoCandidates("no sign-consistent candidate left")
    (i, j), _ = min(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    direction = Direction.REMOVE if g is not None and g.has_edge(i, j) else Direction.ADD
    return EdgeFlip(i, j, direction)


def _score_matrix(g: Graph, grad) -> np.ndarray:
    m = grad.matrix if isinstance(grad, StructuralGradient) else np.asarray(grad)
    if m.shape != (g.n, g.n):
        raise ValidationError(f"gradient is {m.shape}, graph has {g.n} nodes")
    # +grad on absent pairs, -grad on present ones: positive iff sign-consistent
    score = m * (1.0 - 2.0 * g.adjacency)
    score = np.triu(score, k=1)
    score[~(score > 0)] = 0.0
    return score


def _best_flip(g: Graph, grad: np.ndarray, forbidden: np.ndarray) -> tuple[EdgeFlip, float]:
    score = grad * (1.0 - 2.0 * g.adjacency)
    score[forbidden] = 0.0
    flat = int(np.argmax(score))  # first maximum in row-major order: smallest (i, j)
    best = float(score.flat[flat])
    if not best > 0:
        raise NoCandidates("no sign-consistent candidate left")
    i, j = divmod(flat, g.n)
    direction = Direction.REMOVE if g.adjacency[i, j] else Direction.ADD
    return EdgeFlip(i, j, direction), best


def _lower_and_diag(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n), dtype=bool))


# ---------------------------------------------------------------------------
# gradient attack


def run_attack(
    g: Graph,
    labeled,
    cfg: AttackConfig,
    grad_scale: float = 1.0,
    record_confidence: bool = False,
) -> AttackRun:
    """Poison ``g`` with ``cfg.budget(|E|)`` greedy flips.

    The surrogate never sees labels outside ``labeled``. Pseudo-labels are
    fixed from a surrogate trained on the clean graph; the objective covers
    every unlabeled node. ``grad_scale`` multiplies the gradient before
    selection (positive scaling must not change any choice).
    """
    if grad_scale <= 0:
        raise ValidationError("grad_scale must be positive")
    labeled = sorted(set(int(v) for v in labeled))
    g_seen = g.mask_labels(labeled)
    budget = cfg.budget(g.num_edges)
    targets = np.setdiff1d(np.arange(g.n), labeled)

    clean_cfg = dataclasses.replace(cfg.train_cfg, seed=derive_seed(cfg.base_seed, 0))
    table = pseudo_label_table(train(g_seen, labeled, clean_cfg), g_seen)

    forbidden = _lower_and_diag(g.n)
    current = g_seen
    records: list[FlipRecord] = []
    snapshots: list[np.ndarray] | None = [] if record_confidence else None
    truncated = False
    params = None
    for t in range(1, budget + 1):
        a_hat = normalize_adjacency(current)
        if (t - 1) % cfg.retrain_every == 0:
            step_cfg = dataclasses.replace(cfg.train_cfg, seed=derive_seed(cfg.base_seed, t))
            params = train(current, labeled, step_cfg, a_hat=a_hat)
        grad = structural_gradient(params, current, targets, table, cfg.objective, a_hat)
        if snapshots is not None:
            snapshots.append(pseudo_label_table(params, current, a_hat).probs[targets, table.pseudo_labels[targets]])
        matrix = grad.matrix if grad_scale == 1.0 else grad.matrix * grad_scale
        try:
            flip, score = _best_flip(current, matrix, forbidden)
        except NoCandidates:
            log.info("no candidates left at step %d of %d", t, budget)
            truncated = True
            break
        current = apply_flip(current, flip)
        forbidden[flip.i, flip.j] = True
        records.append(FlipRecord(t, flip, score))
        log.debug("step %d: %s (%d, %d) score=%.3g", t, flip.direction.value, flip.i, flip.j, score)

    final = current.with_labels(g.labels)
    return AttackRun(
        flips=records,
        final_graph=final,
        budget=budget,
        method=cfg.objective.value,
        truncated=truncated,
        config_hash=cfg.config_hash(),
        confidence_snapshots=snapshots,
    )


# ---------------------------------------------------------------------------
# baselines


def _pair_from_index(n: int, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map linear indices over the strict upper triangle to (i, j)."""
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(n, dtype=np.int64)
    offsets = rows * n - rows * (rows + 1) // 2  # index of (i, i+1)
    i = np.searchsorted(offsets, idx, side="right") - 1
    j = idx - offsets[i] + i + 1
    return i, j


def random_baseline(g: Graph, cfg: AttackConfig, seed: int) -> AttackRun:
    """Flip ``budget`` distinct pairs chosen uniformly at random."""
    budget = cfg.budget(g.num_edges)
    total = g.n * (g.n - 1) // 2
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(budget, total), replace=False)
    current = g
    records = []
    for t, (i, j) in enumerate(zip(*_pair_from_index(g.n, picks)), start=1):
        flip = EdgeFlip(int(i), int(j), Direction.REMOVE if current.has_edge(int(i), int(j)) else Direction.ADD)
        current = apply_flip(current, flip)
        records.append(FlipRecord(t, flip, 0.0))
    return AttackRun(records, current, budget, "random", truncated=len(records) < budget, config_hash=cfg.config_hash())


def attacker_labels(g: Graph, labeled, train_cfg: TrainConfig = TrainConfig()) -> np.ndarray:
    """Known labels on ``labeled`` and surrogate pseudo-labels elsewhere."""
    labeled = sorted(set(int(v) for v in labeled))
    g_seen = g.mask_labels(labeled)
    table = pseudo_label_table(train(g_seen, labeled, train_cfg), g_seen)
    out = table.pseudo_labels.copy()
    out[labeled] = g.labels[labeled]
    return out


def dice_baseline(g: Graph, labels, cfg: AttackConfig, seed: int, p_remove: float = 0.5) -> AttackRun:
    """Delete edges inside classes, connect nodes across classes.

    Each step removes a random same-class edge with probability ``p_remove``
    and otherwise adds a random cross-class non-edge; when one action has no
    candidates the other is used.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (g.n,) or (labels < 0).any():
        raise ValidationError("DICE needs a class for every node")
    budget = cfg.budget(g.num_edges)
    rng = np.random.default_rng(seed)
    n = g.n
    used: set[tuple[int, int]] = set()
    counts = np.bincount(labels)
    cross_pairs = (n * n - int(np.sum(counts * counts))) // 2

    current = g
    records = []
    truncated = False
    for t in range(1, budget + 1):
        e = current.edges
        same = labels[e[:, 0]] == labels[e[:, 1]]
        removable = [tuple(map(int, p)) for p in e[same] if tuple(map(int, p)) not in used]
        cross_present = int(np.count_nonzero(~same))
        cross_used_absent = sum(1 for (i, j) in used if labels[i] != labels[j] and not current.has_edge(i, j))
        n_addable = cross_pairs - cross_present - cross_used_absent

        want_remove = rng.random() < p_remove
        if want_remove and not removable:
            want_remove = False
        elif not want_remove and n_addable <= 0:
            want_remove = True
        if want_remove and not removable:
            truncated = True
            break

        if want_remove:
            i, j = removable[int(rng.integers(len(removable)))]
            flip = EdgeFlip(i, j, Direction.REMOVE)
        else:
            i, j = _sample_cross_nonedge(current, labels, used, rng)
            flip = EdgeFlip(i, j, Direction.ADD)
        current = apply_flip(current, flip)
        used.add(flip.pair)
        records.append(FlipRecord(t, flip, 0.0))
    return AttackRun(records, current, budget, "dice", truncated=truncated, config_hash=cfg.config_hash())


def _sample_cross_nonedge(g: Graph, labels: np.ndarray, used, rng, tries: int = 1000) -> tuple[int, int]:
    n = g.n
    for _ in range(tries):
        i, j = (int(x) for x in rng.integers(n, size=2))
        if i == j or labels[i] == labels[j]:
            continue
        i, j = min(i, j), max(i, j)
        if (i, j) in used or g.has_edge(i, j):
            continue
        return i, j
    # dense fallback when valid pairs are rare; still uniform over them
    ok = (labels[:, None] != labels[None, :]) & (g.adjacency == 0)
    ok = np.triu(ok, k=1)
    for i, j in used:
        ok[i, j] = False
    ii, jj = np.nonzero(ok)
    pick = int(rng.integers(ii.size))
    return int(ii[pick]), int(jj[pick])


# ---------------------------------------------------------------------------
# flip log


LOG_COLUMNS = ("step", "i", "j", "direction", "score")


def format_log(run: AttackRun) -> str:
    lines = [
        "# graphpoison flip log",
        f"# method={run.method}\tbudget={run.budget}\tflips={len(run.flips)}\t"
        f"truncated={int(run.truncated)}\tconfig_hash={run.config_hash}",
        "\t".join(LOG_COLUMNS),
    ]
    for r in run.flips:
        lines.append(f"{r.step}\t{r.flip.i}\t{r.flip.j}\t{r.flip.direction.value}\t{r.score!r}")
    return "\n".join(lines) + "\n"


def parse_log(text: str, path="<log>") -> tuple[dict[str, str], list[FlipRecord]]:
    header: dict[str, str] = {}
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            for item in line[1:].strip().split("\t"):
                if "=" in item:
                    key, value = item.split("=", 1)
                    header[key.strip()] = value.strip()
            continue
        parts = line.split("\t")
        if tuple(parts) == LOG_COLUMNS:
            continue
        if len(parts) != 5:
            raise ParseError(path, line_no, f"expected 5 tab-separated fields, got {len(parts)}")
        try:
            step, i, j = int(parts[0]), int(parts[1]), int(parts[2])
            direction = Direction(parts[3])
            score = float(parts[4])
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
        records.append(FlipRecord(step, EdgeFlip(i, j, direction), score))
    return header, records


def replay(g: Graph, records) -> Graph:
    for r in records:
        g = apply_flip(g, r.flip if isinstance(r, FlipRecord) else r)
    return g
