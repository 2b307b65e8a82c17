"""Diagnostics: confidence vs gradient-norm scatter, confidence histograms,
accuracy-vs-budget curves. Everything is emitted as CSV; nothing is plotted."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .attacker import AttackConfig, attacker_labels, dice_baseline, random_baseline, run_attack
from .datasets import DatasetBundle
from .errors import ParseError, ValidationError
from .graph import Graph
from .structgrad import AttackObjective, partial_gradient_norms
from .surrogate import PredictionTable, SurrogateParams, TrainConfig
from .victim import VictimConfig, predict, train_victim, trial_suite


@dataclass(frozen=True)
class ScatterRecord:
    node: int
    confidence: float
    partial_norm: float
    objective: AttackObjective


def confidence_gradient_scatter(
    params: SurrogateParams,
    g: Graph,
    targets,
    table: PredictionTable,
    obj: AttackObjective,
) -> list[ScatterRecord]:
    obj = AttackObjective.parse(obj)
    nodes = np.asarray(sorted(targets), dtype=np.int64)
    norms = partial_gradient_norms(params, g, nodes, table, obj)
    return [
        ScatterRecord(int(v), float(table.confidences[v]), float(nv), obj)
        for v, nv in zip(nodes, norms)
    ]


@dataclass(eq=False)
class HistogramReport:
    bin_edges: np.ndarray
    counts: dict[str, np.ndarray]

    def bin_count(self, graph: str, lo: float) -> int:
        """Count of the bin starting at ``lo``."""
        pos = int(np.argmin(np.abs(self.bin_edges[:-1] - lo)))
        return int(self.counts[graph][pos])


def confidence_histogram(
    graphs: dict[str, Graph],
    labeled,
    reference: str = "clean",
    victim_cfg: VictimConfig = VictimConfig(),
    seed: int = 0,
    bins: int = 10,
    nodes=None,
) -> HistogramReport:
    """Bin every node's probability of its clean-graph pseudo-label.

    A fresh victim-style GCN (same seed for every graph) is trained per graph.
    The pseudo-labels come from the model trained on ``graphs[reference]``.
    """
    if reference not in graphs:
        raise ValidationError(f"reference graph {reference!r} missing")
    sizes = {g.n for g in graphs.values()}
    if len(sizes) != 1:
        raise ValidationError("all graphs must share the node set")
    n = sizes.pop()
    nodes = np.arange(n) if nodes is None else np.asarray(sorted(nodes), dtype=np.int64)
    edges = np.linspace(0.0, 1.0, bins + 1)

    probs = {}
    for name, g in graphs.items():
        probs[name] = predict(train_victim(g, labeled, victim_cfg, seed), g)
    pseudo = probs[reference].argmax(axis=1)
    counts = {}
    for name, p in probs.items():
        conf = p[nodes, pseudo[nodes]]
        counts[name] = np.histogram(conf, bins=edges)[0]
    return HistogramReport(edges, counts)


@dataclass(frozen=True)
class CurveRow:
    objective: str
    budget_fraction: float
    mean_acc: float
    std_acc: float


BASELINES = ("random", "dice")


def perturb(bundle: DatasetBundle, method: str, budget_fraction: float, seed: int = 0, train_cfg: TrainConfig = TrainConfig(), retrain_every: int = 1):
    """Run one attack method; returns the AttackRun."""
    g = bundle.graph
    if method in BASELINES:
        cfg = AttackConfig(budget_fraction, base_seed=seed, train_cfg=train_cfg)
        if method == "random":
            return random_baseline(g, cfg, seed)
        return dice_baseline(g, attacker_labels(g, bundle.labeled, train_cfg), cfg, seed)
    cfg = AttackConfig(budget_fraction, AttackObjective.parse(method), retrain_every, seed, train_cfg)
    return run_attack(g, bundle.labeled, cfg)


def attack_curve(
    bundle: DatasetBundle,
    objectives,
    budgets,
    victim_cfg: VictimConfig = VictimConfig(),
    seed: int = 0,
    train_cfg: TrainConfig = TrainConfig(),
) -> list[CurveRow]:
    budgets = [float(b) for b in budgets]
    if budgets != sorted(budgets):
        raise ValidationError("budgets must be ascending")
    if 0.0 not in budgets:
        budgets = [0.0] + budgets
    clean = trial_suite(bundle.graph, bundle.labeled, bundle.unlabeled, victim_cfg)
    rows = []
    for obj in objectives:
        name = obj if obj in BASELINES else AttackObjective.parse(obj).value
        for b in budgets:
            if b == 0.0:
                rep = clean
            else:
                run = perturb(bundle, name, b, seed, train_cfg)
                rep = trial_suite(run.final_graph, bundle.labeled, bundle.unlabeled, victim_cfg)
            rows.append(CurveRow(name, b, rep.mean, rep.std))
    return rows


# ---------------------------------------------------------------------------
# CSV


def _write(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read(text: str, header, path):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != tuple(header):
        raise ParseError(path, 1, f"expected header {','.join(header)}")
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(path, line_no, f"expected {len(header)} fields")
        yield line_no, row


SCATTER_HEADER = ("node", "confidence", "partial_norm", "objective")
HIST_HEADER = ("bin_lo", "bin_hi", "graph", "count")
CURVE_HEADER = ("objective", "budget_fraction", "mean_acc", "std_acc")


def format_scatter(records: list[ScatterRecord]) -> str:
    return _write(SCATTER_HEADER, [(r.node, repr(r.confidence), repr(r.partial_norm), r.objective.value) for r in records])


def parse_scatter(text: str, path="<scatter>") -> list[ScatterRecord]:
    out = []
    for line_no, row in _read(text, SCATTER_HEADER, path):
        try:
            out.append(ScatterRecord(int(row[0]), float(row[1]), float(row[2]), AttackObjective.parse(row[3])))
        except (ValueError, ValidationError) as exc:
            raise ParseError(path, line_no, str(exc)) from None
    return out


def format_histogram(report: HistogramReport) -> str:
    rows = []
    for name, counts in report.counts.items():
        for lo, hi, c in zip(report.bin_edges[:-1], report.bin_edges[1:], counts):
            rows.append((repr(float(lo)), repr(float(hi)), name, int(c)))
    return _write(HIST_HEADER, rows)


def parse_histogram(text: str, path="<histogram>") -> HistogramReport:
    edges: list[float] = []
    counts: dict[str, list[int]] = {}
    for line_no, row in _read(text, HIST_HEADER, path):
        try:
            lo, hi, count = float(row[0]), float(row[1]), int(row[3])
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
        bucket = counts.setdefault(row[2], [])
        if len(counts) == 1:
            if not edges:
                edges.append(lo)
            edges.append(hi)
        bucket.append(count)
    return HistogramReport(np.asarray(edges), {k: np.asarray(v) for k, v in counts.items()})


def format_curve(rows: list[CurveRow]) -> str:
    return _write(CURVE_HEADER, [(r.objective, repr(r.budget_fraction), repr(r.mean_acc), repr(r.std_acc)) for r in rows])


def parse_curve(text: str, path="<curve>") -> list[CurveRow]:
    out = []
    for line_no, row in _read(text, CURVE_HEADER, path):
        try:
            out.append(CurveRow(row[0], float(row[1]), float(row[2]), float(row[3])))
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
    return out
