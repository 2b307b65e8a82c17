"""Attack objectives and their exact gradients with respect to the adjacency.

The attacker maximizes ``J = sum_{i in targets} phi(p_i)`` where ``p_i`` is
the surrogate's probability of node i's (fixed) pseudo-label on the current
graph and ``phi`` is the per-node objective:

* ``NEG_CE``: ``phi(p) = -log p`` (cross-entropy on the pseudo-label),
* ``GRAD_DEBIAS``: ``phi(p) = -p`` (lower every node's confidence equally).

Both share ``dJ/dA = sum_i phi'(p_i) dp_i/dA``; with ``phi'(p) = -1/p`` the
cross-entropy objective reweights each node's contribution by its inverse
confidence, the debiased one does not.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, MissingPseudoLabel, ValidationError
from .graph import Graph, NormalizedAdjacency, normalize_adjacency
from .optim import softmax
from .surrogate import PredictionTable, SurrogateParams


class AttackObjective(enum.Enum):
    NEG_CE = "neg-ce"
    GRAD_DEBIAS = "grad-debias"

    @classmethod
    def parse(cls, value) -> AttackObjective:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"negce": "neg-ce", "ce": "neg-ce", "grad": "grad-debias", "gd": "grad-debias", "grad-debiased": "grad-debias"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValidationError(f"unknown objective {value!r}; expected one of neg-ce, grad-debias") from None


@dataclass(frozen=True, eq=False)
class StructuralGradient:
    matrix: np.ndarray
    objective_value: float = float("nan")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def scaled(self, factor: float) -> StructuralGradient:
        return StructuralGradient(self.matrix * factor, self.objective_value * factor)


@dataclass(frozen=True, eq=False)
class PartialGradient:
    node: int
    matrix: np.ndarray
    l2_norm: float


def _check_confidence(p):
    p = np.asarray(p, dtype=np.float64)
    if np.any(~(p > 0)) or np.any(p > 1):
        raise DomainError(f"confidence must lie in (0, 1], got {p}")
    return p


def node_objective(obj: AttackObjective, p, y=None):
    """Per-node term of the maximized attack objective.

    ``y`` is accepted for signature symmetry; the value only depends on the
    probability already selected for the pseudo-label class.
    """
    p = _check_confidence(p)
    if obj is AttackObjective.NEG_CE:
        out = -np.log(p)
    else:
        out = -p
    return float(out) if out.ndim == 0 else out


def objective_weight(obj: AttackObjective, p):
    """d(node_objective)/dp: -1/p for NEG_CE, -1 for GRAD_DEBIAS."""
    p = _check_confidence(p)
    out = -1.0 / p if obj is AttackObjective.NEG_CE else -np.ones_like(p)
    return float(out) if out.ndim == 0 else out


def _targets_and_labels(targets, table: PredictionTable) -> tuple[np.ndarray, np.ndarray]:
    idx = np.asarray(sorted(targets), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.n):
        raise MissingPseudoLabel("target outside the prediction table")
    y = table.pseudo_labels[idx]
    if (y < 0).any():
        raise MissingPseudoLabel(f"targets without a pseudo-label: {idx[y < 0][:10].tolist()}")
    return idx, y


class _Forward:
    """Cached forward quantities of the linear surrogate on one graph."""

    def __init__(self, params: SurrogateParams, g: Graph, a_hat: NormalizedAdjacency | None):
        if a_hat is None:
            a_hat = normalize_adjacency(g)
        self.a_hat = a_hat
        self.s = a_hat.inv_sqrt_degrees
        self.deg = a_hat.source_degrees.astype(np.float64)
        coo = a_hat.sparse.tocoo()
        # nonzeros of A + I coincide with those of Â
        self.rows, self.cols = coo.row.astype(np.int64), coo.col.astype(np.int64)
        self.H = g.features @ params.W
        self.Y1 = a_hat @ self.H
        self.Z = a_hat @ self.Y1
        self.P = softmax(self.Z)

    def logit_grad(self, obj: AttackObjective, idx: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """dJ/dZ restricted to target rows, plus the per-target probabilities."""
        p = self.P[idx, y]
        # dp/dZ = p (e_y - P); scale = phi'(p) * p, written out so p -> 0 stays finite
        scale = -np.ones_like(p) if obj is AttackObjective.NEG_CE else -p
        g_rows = -self.P[idx]
        g_rows[np.arange(idx.size), y] += 1.0
        g_rows *= scale[:, None]
        return g_rows, p

    def degree_grad(self, g_ahat_at_nnz: np.ndarray) -> np.ndarray:
        """dJ/d(deg) given dJ/dÂ sampled at the nonzeros of A + I."""
        n = self.s.size
        ds = np.bincount(self.rows, g_ahat_at_nnz * self.s[self.cols], minlength=n)
        ds += np.bincount(self.cols, g_ahat_at_nnz * self.s[self.rows], minlength=n)
        return ds * (-0.5) * self.deg ** (-1.5)


def _symmetrize(raw: np.ndarray) -> np.ndarray:
    out = raw + raw.T
    np.fill_diagonal(out, 0.0)
    return out


def _gradient_from_logit_grad(fw: _Forward, G_Z: np.ndarray) -> np.ndarray:
    # Z = Â Y1, Y1 = Â H  =>  dJ/dÂ = G_Z Y1^T + (Â G_Z) H^T   (Â symmetric)
    G_Y1 = fw.a_hat @ G_Z
    G_ahat = np.hstack([G_Z, G_Y1]) @ np.hstack([fw.Y1, fw.H]).T
    g_deg = fw.degree_grad(G_ahat[fw.rows, fw.cols])
    G_ahat *= fw.s[:, None]
    G_ahat *= fw.s[None, :]
    G_ahat += g_deg[:, None]
    return _symmetrize(G_ahat)


def structural_gradient(
    params: SurrogateParams,
    g: Graph,
    targets,
    table: PredictionTable,
    obj: AttackObjective,
    a_hat: NormalizedAdjacency | None = None,
) -> StructuralGradient:
    """Exact ``dJ/dA`` for symmetric A, one backward pass over the summed objective.

    Entry (i, j) is the derivative under a simultaneous change of A[i, j] and
    A[j, i], i.e. ``M + M^T`` of the unconstrained gradient M; the diagonal
    is zero because self-loops are not flippable. Degrees of ``A + I`` are
    differentiated through.
    """
    obj = AttackObjective.parse(obj)
    idx, y = _targets_and_labels(targets, table)
    fw = _Forward(params, g, a_hat)
    G_Z = np.zeros_like(fw.Z)
    rows, p = fw.logit_grad(obj, idx, y)
    G_Z[idx] = rows
    value = float(np.sum(node_objective(obj, np.clip(p, np.finfo(float).tiny, 1.0)))) if idx.size else 0.0
    return StructuralGradient(_gradient_from_logit_grad(fw, G_Z), value)


def partial_gradient(
    params: SurrogateParams,
    g: Graph,
    v: int,
    table: PredictionTable,
    obj: AttackObjective,
    a_hat: NormalizedAdjacency | None = None,
) -> PartialGradient:
    grad = structural_gradient(params, g, [v], table, obj, a_hat).matrix
    return PartialGradient(node=int(v), matrix=grad, l2_norm=float(np.linalg.norm(grad)))


def partial_gradient_norms(
    params: SurrogateParams,
    g: Graph,
    nodes,
    table: PredictionTable,
    obj: AttackObjective,
    a_hat: NormalizedAdjacency | None = None,
) -> np.ndarray:
    """Frobenius norms of the per-node partial gradients without forming them.

    For a single node v the logit gradient has one nonzero row ``u``, so the
    unsymmetrized gradient is the rank-3 matrix

        e_v (s_v s * Y1 u)^T + (s * Â[:, v]) (s * H u)^T + g_deg 1^T

    and the norm of its symmetrized, zero-diagonal form follows from 6x6 Gram
    matrices in O(n) per node.
    """
    obj = AttackObjective.parse(obj)
    idx, y = _targets_and_labels(nodes, table)
    fw = _Forward(params, g, a_hat)
    n = g.n
    s = fw.s
    ones = np.ones(n)
    csc = fw.a_hat.sparse.tocsc()
    g_rows, _ = fw.logit_grad(obj, idx, y)
    Y1u_all = fw.Y1 @ g_rows.T
    Hu_all = fw.H @ g_rows.T
    norms = np.empty(idx.size)
    for t, v in enumerate(idx):
        a_vec = Y1u_all[:, t]
        b_vec = Hu_all[:, t]
        c_vec = csc[:, v].toarray().ravel()
        # dJ/dÂ = e_v a^T + c b^T, sampled on the nonzeros of A + I
        at_nnz = c_vec[fw.rows] * b_vec[fw.cols]
        at_nnz[fw.rows == v] += a_vec[fw.cols[fw.rows == v]]
        g_deg = fw.degree_grad(at_nnz)
        e_v = np.zeros(n)
        e_v[v] = s[v]
        U = np.stack([e_v, s * c_vec, g_deg], axis=1)
        W = np.stack([s * a_vec, s * b_vec, ones], axis=1)
        P = np.hstack([U, W])
        Q = np.hstack([W, U])
        sq = float(np.sum((P.T @ P) * (Q.T @ Q)))
        diag = np.einsum("ir,ir->i", P, Q)
        norms[t] = np.sqrt(max(sq - float(diag @ diag), 0.0))
    return norms


def objective_from_dense(
    adjacency: np.ndarray,
    features: np.ndarray,
    W: np.ndarray,
    idx: np.ndarray,
    y: np.ndarray,
    obj: AttackObjective,
) -> float:
    """J evaluated from a real-valued dense adjacency, straight from the definition."""
    n = adjacency.shape[0]
    m = adjacency + np.eye(n)
    deg = m.sum(axis=1)
    a_hat = m / np.sqrt(np.outer(deg, deg))
    probs = softmax(a_hat @ (a_hat @ (features @ W)))
    p = probs[idx, y]
    if obj is AttackObjective.NEG_CE:
        return float(-np.sum(np.log(p)))
    return float(-np.sum(p))


def finite_difference_gradient(
    params: SurrogateParams,
    g: Graph,
    targets,
    table: PredictionTable,
    obj: AttackObjective,
    eps: float = 1e-5,
) -> np.ndarray:
    """Central-difference oracle for :func:`structural_gradient`.

    Each unordered pair is perturbed symmetrically by ``±eps`` in a
    real-valued copy of A; degrees and normalization are recomputed.
    """
    if eps <= 0:
        raise ValidationError("eps must be positive")
    obj = AttackObjective.parse(obj)
    idx, y = _targets_and_labels(targets, table)
    base = np.array(g.adjacency, dtype=np.float64)
    out = np.zeros((g.n, g.n))
    for i in range(g.n):
        for j in range(i + 1, g.n):
            base[i, j] += eps
            base[j, i] += eps
            plus = objective_from_dense(base, g.features, params.W, idx, y, obj)
            base[i, j] -= 2 * eps
            base[j, i] -= 2 * eps
            minus = objective_from_dense(base, g.features, params.W, idx, y, obj)
            base[i, j] += eps
            base[j, i] += eps
            out[i, j] = out[j, i] = (plus - minus) / (2 * eps)
    return out


def two_hop_closed(g: Graph, v: int) -> np.ndarray:
    """Boolean mask of nodes within two hops of v in ``A + I``."""
    adj = g.sparse_adjacency()
    one = np.zeros(g.n, dtype=bool)
    one[v] = True
    one |= adj[v].toarray().ravel() > 0
    two = one | (adj.T @ one.astype(np.float64) > 0)
    return two
