"""TSV dataset bundles and a seeded stochastic-block-model generator.

A dataset directory holds:

``edges.tsv``     ``u<TAB>v`` per line, 0-based, each unordered pair once
``features.tsv``  ``id<TAB>v1,v2,...`` (dense) or ``id<TAB>idx:val idx:val`` (sparse);
                  optional -- identity features are used when it is missing
``labels.tsv``    ``id<TAB>class`` for every node
``split.tsv``     ``id<TAB>train|test`` for every node

Lines starting with ``#`` are comments; ``# dim=<d>`` in features.tsv pins
the feature dimension for sparse files.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DuplicateEdge, InconsistentSplit, ParseError, SelfLoopInInput, ValidationError
from .graph import Graph, extract_lcc

log = logging.getLogger(__name__)

LABELED_FRACTION = 0.1


@dataclass(eq=False)
class DatasetBundle:
    graph: Graph
    labeled: np.ndarray
    unlabeled: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.labeled = np.asarray(sorted(int(v) for v in self.labeled), dtype=np.int64)
        self.unlabeled = np.asarray(sorted(int(v) for v in self.unlabeled), dtype=np.int64)
        both = np.concatenate([self.labeled, self.unlabeled])
        if both.size != self.graph.n or not np.array_equal(np.sort(both), np.arange(self.graph.n)):
            raise InconsistentSplit("labeled and unlabeled sets must partition the nodes")

    def attacker_view(self) -> Graph:
        """The graph with only the training labels visible."""
        return self.graph.mask_labels(self.labeled)

    def with_graph(self, graph: Graph, name: str | None = None) -> DatasetBundle:
        return DatasetBundle(graph, self.labeled, self.unlabeled, self.name if name is None else name)

    def lcc(self) -> DatasetBundle:
        sub, kept = extract_lcc(self.graph)
        pos = np.full(self.graph.n, -1)
        pos[kept] = np.arange(kept.size)
        lab = pos[self.labeled]
        unl = pos[self.unlabeled]
        return DatasetBundle(sub, lab[lab >= 0], unl[unl >= 0], f"{self.name}-lcc" if self.name else "lcc")


@dataclass(frozen=True)
class SbmSpec:
    blocks: tuple[int, ...] = (100, 100)
    p_in: float = 0.1
    p_out: float = 0.01
    feature_dim: int = 16
    feature_noise: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(int(b) for b in self.blocks))
        if not self.blocks or min(self.blocks) < 1:
            raise ValidationError("block sizes must be positive")
        if not 0 <= self.p_out <= self.p_in <= 1:
            raise ValidationError("need 0 <= p_out <= p_in <= 1")
        if self.feature_dim < len(self.blocks):
            raise ValidationError("feature_dim must be at least the number of blocks")
        if self.feature_noise < 0:
            raise ValidationError("feature_noise must be non-negative")


def stratified_split(labels: np.ndarray, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-class sample of ``round(fraction * n)`` nodes (largest-remainder allocation)."""
    labels = np.asarray(labels)
    n = labels.size
    classes, counts = np.unique(labels, return_counts=True)
    total = int(round(fraction * n))
    quota = counts * fraction
    take = np.floor(quota).astype(int)
    order = np.argsort(-(quota - take), kind="stable")
    take[order[: total - take.sum()]] += 1
    chosen = []
    for c, t in zip(classes, take):
        members = np.flatnonzero(labels == c)
        chosen.append(rng.choice(members, size=t, replace=False))
    labeled = np.sort(np.concatenate(chosen)) if chosen else np.empty(0, dtype=np.int64)
    return labeled, np.setdiff1d(np.arange(n), labeled)


def generate_sbm(spec: SbmSpec, name: str = "sbm") -> DatasetBundle:
    rng = np.random.default_rng(spec.seed)
    sizes = np.asarray(spec.blocks)
    labels = np.repeat(np.arange(sizes.size), sizes)
    n = labels.size
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, spec.p_in, spec.p_out)
    draw = rng.random((n, n)) < prob
    edges = np.argwhere(np.triu(draw, k=1))

    features = rng.normal(0.0, spec.feature_noise, size=(n, spec.feature_dim)) if spec.feature_noise else np.zeros((n, spec.feature_dim))
    features[np.arange(n), labels] += 1.0
    graph = Graph(n, edges, features, labels, sizes.size)
    labeled, unlabeled = stratified_split(labels, LABELED_FRACTION, rng)
    return DatasetBundle(graph, labeled, unlabeled, name)


# ---------------------------------------------------------------------------
# reading


def _lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            yield line_no, line


def _int(path, line_no, text):
    try:
        return int(text)
    except ValueError:
        raise ParseError(path, line_no, f"not an integer: {text!r}") from None


def _read_labels(path: Path) -> np.ndarray:
    seen: dict[int, int] = {}
    for line_no, line in _lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(path, line_no, "expected id<TAB>class")
        node, cls = _int(path, line_no, parts[0]), _int(path, line_no, parts[1])
        if node < 0 or cls < 0:
            raise ParseError(path, line_no, "ids and classes must be non-negative")
        if node in seen:
            raise ParseError(path, line_no, f"node {node} labeled twice")
        seen[node] = cls
    n = max(seen) + 1 if seen else 0
    if len(seen) != n:
        missing = sorted(set(range(n)) - set(seen))[:10]
        raise ValidationError(f"{path}: labels missing for nodes {missing}")
    labels = np.empty(n, dtype=np.int64)
    for node, cls in seen.items():
        labels[node] = cls
    return labels


def _read_edges(path: Path, n: int) -> np.ndarray:
    pairs: set[tuple[int, int]] = set()
    out = []
    for line_no, line in _lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(path, line_no, "expected u<TAB>v")
        u, v = _int(path, line_no, parts[0]), _int(path, line_no, parts[1])
        if u == v:
            raise SelfLoopInInput(path, line_no, f"self-loop on node {u}")
        if not (0 <= u < n and 0 <= v < n):
            raise ParseError(path, line_no, f"node id out of range [0, {n})")
        key = (min(u, v), max(u, v))
        if key in pairs:
            raise DuplicateEdge(path, line_no, f"edge {key} listed twice")
        pairs.add(key)
        out.append(key)
    return np.asarray(out, dtype=np.int64).reshape(-1, 2)


def _read_features(path: Path, n: int) -> np.ndarray:
    dim = None
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            if raw.startswith("# dim="):
                dim = int(raw.split("=", 1)[1])
                break
            if not raw.startswith("#"):
                break
    rows: dict[int, object] = {}
    sparse_width = 0
    for line_no, line in _lines(path):
        node_text, _, body = line.partition("\t")
        node = _int(path, line_no, node_text)
        if not 0 <= node < n:
            raise ParseError(path, line_no, f"node id out of range [0, {n})")
        if node in rows:
            raise ParseError(path, line_no, f"features for node {node} given twice")
        body = body.strip()
        try:
            if ":" in body or body == "":
                entries = []
                for tok in body.split():
                    idx, val = tok.split(":")
                    entries.append((int(idx), float(val)))
                    sparse_width = max(sparse_width, int(idx) + 1)
                rows[node] = entries
            else:
                rows[node] = np.array([float(x) for x in body.split(",")])
        except ValueError as exc:
            raise ParseError(path, line_no, f"bad feature entry: {exc}") from None
    if len(rows) != n:
        raise ValidationError(f"{path}: features missing for {n - len(rows)} nodes")
    dense_widths = {r.size for r in rows.values() if isinstance(r, np.ndarray)}
    if len(dense_widths) > 1:
        raise ValidationError(f"{path}: dense rows have differing lengths {sorted(dense_widths)}")
    d = dim if dim is not None else max(dense_widths | {sparse_width})
    X = np.zeros((n, d))
    for node, row in rows.items():
        if isinstance(row, np.ndarray):
            if row.size != d:
                raise ValidationError(f"{path}: node {node} has {row.size} features, expected {d}")
            X[node] = row
        else:
            for idx, val in row:
                if idx >= d:
                    raise ValidationError(f"{path}: feature index {idx} >= dim {d}")
                X[node, idx] = val
    return X


def _read_split(path: Path, n: int) -> tuple[np.ndarray, np.ndarray]:
    kinds: dict[int, str] = {}
    for line_no, line in _lines(path):
        parts = line.split("\t")
        if len(parts) != 2 or parts[1] not in ("train", "test"):
            raise ParseError(path, line_no, "expected id<TAB>train|test")
        node = _int(path, line_no, parts[0])
        if node in kinds:
            raise InconsistentSplit(f"{path}:{line_no}: node {node} listed twice")
        if not 0 <= node < n:
            raise InconsistentSplit(f"{path}:{line_no}: node {node} out of range")
        kinds[node] = parts[1]
    if len(kinds) != n:
        raise InconsistentSplit(f"{path}: split covers {len(kinds)} of {n} nodes")
    labeled = np.asarray(sorted(v for v, k in kinds.items() if k == "train"), dtype=np.int64)
    unlabeled = np.asarray(sorted(v for v, k in kinds.items() if k == "test"), dtype=np.int64)
    return labeled, unlabeled


def load_dataset(path) -> DatasetBundle:
    path = Path(path)
    labels = _read_labels(path / "labels.tsv")
    n = labels.size
    edges = _read_edges(path / "edges.tsv", n)
    feat_path = path / "features.tsv"
    features = _read_features(feat_path, n) if feat_path.exists() else np.eye(n)
    labeled, unlabeled = _read_split(path / "split.tsv", n)
    if labeled.size == 0:
        raise InconsistentSplit(f"{path}: no training nodes")
    if abs(labeled.size - LABELED_FRACTION * n) > 1:
        log.warning("%s: %d of %d nodes labeled (expected about %.0f)", path, labeled.size, n, LABELED_FRACTION * n)
    k = int(labels.max()) + 1 if n else 0
    return DatasetBundle(Graph(n, edges, features, labels, k), labeled, unlabeled, path.name)


# ---------------------------------------------------------------------------
# writing


def write_edges(path, graph: Graph) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, j in graph.edges:
            fh.write(f"{i}\t{j}\n")


def write_dataset(bundle: DatasetBundle, path, sparse_features: bool | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    g = bundle.graph
    write_edges(path / "edges.tsv", g)
    X = g.features
    if sparse_features is None:
        sparse_features = np.count_nonzero(X) <= 0.5 * X.size
    with open(path / "features.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# dim={g.d}\n")
        for v in range(g.n):
            if sparse_features:
                nz = np.flatnonzero(X[v])
                body = " ".join(f"{c}:{float(X[v, c])!r}" for c in nz)
            else:
                body = ",".join(repr(float(x)) for x in X[v])
            fh.write(f"{v}\t{body}\n")
    with open(path / "labels.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for v, c in enumerate(g.labels):
            fh.write(f"{v}\t{c}\n")
    train = set(bundle.labeled.tolist())
    with open(path / "split.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for v in range(g.n):
            fh.write(f"{v}\t{'train' if v in train else 'test'}\n")
    return path


def random_instance(n: int = 20, edge_prob: float = 0.15, d: int = 8, k: int = 3, seed: int = 0, labeled_fraction: float = 0.25):
    """Small Erdős–Rényi graph with class-shifted Gaussian features.

    Returns ``(graph, labeled)``; used for gradient checks.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, k, size=n)
    edges = np.argwhere(np.triu(rng.random((n, n)) < edge_prob, k=1))
    centers = rng.normal(0.0, 1.0, size=(k, d))
    features = centers[labels] + rng.normal(0.0, 1.0, size=(n, d))
    labeled = np.sort(rng.choice(n, size=max(1, int(round(labeled_fraction * n))), replace=False))
    return Graph(n, edges, features, labels, k), labeled
