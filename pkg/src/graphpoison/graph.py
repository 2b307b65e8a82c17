"""Undirected simple graphs with node features and partial labels."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import FlipStateMismatch, SelfLoop, SizeMismatch, ValidationError

UNLABELED = -1


class Direction(enum.Enum):
    ADD = "add"
    REMOVE = "remove"


@dataclass(frozen=True)
class EdgeFlip:
    i: int
    j: int
    direction: Direction

    def __post_init__(self):
        if self.i == self.j:
            raise SelfLoop(f"flip ({self.i}, {self.j}) is a self-loop")
        if self.i > self.j:
            # canonical orientation
            i, j = self.j, self.i
            object.__setattr__(self, "i", i)
            object.__setattr__(self, "j", j)

    @property
    def pair(self) -> tuple[int, int]:
        return self.i, self.j


def _pair_keys(n: int, edges) -> np.ndarray:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    return lo * n + hi


class Graph:
    """Immutable attributed graph.

    The structure is kept as a sorted array of unordered-pair keys
    ``i * n + j`` (``i < j``); the dense adjacency is materialized lazily.
    ``labels`` holds ``UNLABELED`` (-1) for nodes whose class is unknown.
    """

    __slots__ = ("n", "k", "features", "labels", "_keys", "__dict__")

    def __init__(self, n: int, edges, features, labels=None, k: int | None = None):
        n = int(n)
        keys = _pair_keys(n, edges)
        if keys.size:
            e = np.stack([keys // n, keys % n], axis=1)
            if (e < 0).any() or (e >= n).any():
                raise ValidationError("edge endpoint out of range")
            if (e[:, 0] == e[:, 1]).any():
                raise SelfLoop("self-loops are not allowed")
        keys = np.unique(keys)
        keys.setflags(write=False)

        features = np.array(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != n:
            raise SizeMismatch(f"features must be {n}×d, got {features.shape}")
        features.setflags(write=False)

        if labels is None:
            labels = np.full(n, UNLABELED, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64).copy()
        if labels.shape != (n,):
            raise SizeMismatch(f"labels must have length {n}")
        if k is None:
            k = int(labels.max()) + 1 if (labels >= 0).any() else 0
        if (labels < UNLABELED).any() or (labels >= k).any():
            raise ValidationError(f"labels must be in [0, {k}) or {UNLABELED}")
        labels.setflags(write=False)

        self.n = n
        self.k = int(k)
        self.features = features
        self.labels = labels
        self._keys = keys

    def _replace(self, keys=None, labels=None) -> Graph:
        g = object.__new__(Graph)
        if keys is not None:
            keys.setflags(write=False)
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64).copy()
            if labels.shape != (self.n,) or (labels < UNLABELED).any() or (labels >= self.k).any():
                raise ValidationError("invalid label vector")
            labels.setflags(write=False)
        g.n, g.k, g.features = self.n, self.k, self.features
        g._keys = self._keys if keys is None else keys
        g.labels = self.labels if labels is None else labels
        return g

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.num_edges}, d={self.d}, k={self.k})"

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and self.k == other.k
            and np.array_equal(self._keys, other._keys)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return int(self._keys.size)

    @property
    def edges(self) -> np.ndarray:
        """(m, 2) array of ``i < j`` pairs in lexicographic order."""
        return np.stack([self._keys // self.n, self._keys % self.n], axis=1)

    def has_edge(self, i: int, j: int) -> bool:
        if i == j:
            return False
        key = min(i, j) * self.n + max(i, j)
        pos = np.searchsorted(self._keys, key)
        return bool(pos < self._keys.size and self._keys[pos] == key)

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.float64)
        e = self.edges
        a[e[:, 0], e[:, 1]] = 1.0
        a[e[:, 1], e[:, 0]] = 1.0
        a.setflags(write=False)
        return a

    def sparse_adjacency(self) -> sp.csr_matrix:
        e = self.edges
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.ones(rows.size)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def degrees(self) -> np.ndarray:
        e = self.edges
        return np.bincount(e.ravel(), minlength=self.n)

    def with_edges(self, edges) -> Graph:
        return Graph(self.n, edges, self.features, self.labels, self.k)

    def with_labels(self, labels) -> Graph:
        return self._replace(labels=labels)

    def mask_labels(self, keep) -> Graph:
        """Copy with every label outside ``keep`` hidden."""
        labels = np.full(self.n, UNLABELED, dtype=np.int64)
        keep = np.asarray(sorted(keep), dtype=np.int64)
        labels[keep] = self.labels[keep]
        return self.with_labels(labels)

    def subgraph(self, nodes) -> Graph:
        nodes = np.asarray(sorted(nodes), dtype=np.int64)
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[nodes] = np.arange(nodes.size)
        e = remap[self.edges]
        e = e[(e >= 0).all(axis=1)]
        return Graph(nodes.size, e, self.features[nodes], self.labels[nodes], self.k)


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """``D^{-1/2} (A + I) D^{-1/2}`` with D the degree matrix of ``A + I``."""

    sparse: sp.csr_matrix
    source_degrees: np.ndarray

    @cached_property
    def matrix(self) -> np.ndarray:
        return self.sparse.toarray()

    @property
    def inv_sqrt_degrees(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.source_degrees)

    def __matmul__(self, other):
        return self.sparse @ other


def normalize_adjacency(g: Graph) -> NormalizedAdjacency:
    m = g.sparse_adjacency() + sp.identity(g.n, format="csr")
    deg = np.asarray(m.sum(axis=1)).ravel()
    s = 1.0 / np.sqrt(deg)
    a_hat = sp.csr_matrix(m.multiply(s[:, None]).multiply(s[None, :]))
    a_hat.sort_indices()
    return NormalizedAdjacency(sparse=a_hat, source_degrees=deg.astype(np.int64))


def apply_flip(g: Graph, f: EdgeFlip) -> Graph:
    if f.i == f.j:
        raise SelfLoop(f"flip ({f.i}, {f.j}) is a self-loop")
    if not (0 <= f.i < g.n and 0 <= f.j < g.n):
        raise ValidationError(f"flip ({f.i}, {f.j}) out of range for n={g.n}")
    key = f.i * g.n + f.j
    pos = int(np.searchsorted(g._keys, key))
    present = pos < g._keys.size and g._keys[pos] == key
    if f.direction is Direction.ADD:
        if present:
            raise FlipStateMismatch(f"cannot add existing edge ({f.i}, {f.j})")
        keys = np.insert(g._keys, pos, key)
    else:
        if not present:
            raise FlipStateMismatch(f"cannot remove absent edge ({f.i}, {f.j})")
        keys = np.delete(g._keys, pos)
    return g._replace(keys=keys)


def toggle(g: Graph, i: int, j: int) -> tuple[Graph, EdgeFlip]:
    """Flip pair (i, j) whichever way its current state allows."""
    f = EdgeFlip(i, j, Direction.REMOVE if g.has_edge(i, j) else Direction.ADD)
    return apply_flip(g, f), f


def perturbation_norm(a: Graph, b: Graph) -> int:
    """L0 norm of ``A_a - A_b``; each flipped unordered pair counts twice."""
    if a.n != b.n:
        raise SizeMismatch(f"graphs have {a.n} and {b.n} nodes")
    return 2 * int(np.setxor1d(a._keys, b._keys, assume_unique=True).size)


def extract_lcc(g: Graph) -> tuple[Graph, np.ndarray]:
    """Largest connected component and the old id of each kept node.

    Ties between equally large components go to the one holding the
    smallest node id. Relative node order is preserved.
    """
    if g.n == 0:
        return g, np.arange(0)
    _, comp = connected_components(g.sparse_adjacency(), directed=False)
    sizes = np.bincount(comp)
    first = np.full(sizes.size, g.n)
    np.minimum.at(first, comp, np.arange(g.n))
    tied = np.flatnonzero(sizes == sizes.max())
    best = int(tied[np.argmin(first[tied])])
    kept = np.flatnonzero(comp == best)
    return g.subgraph(kept), kept
