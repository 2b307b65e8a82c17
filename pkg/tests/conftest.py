import numpy as np
import pytest

from graphpoison.datasets import SbmSpec, generate_sbm, random_instance
from graphpoison.graph import Graph

# Cora-like desk-scale instance used by the acceptance criteria: 4 classes,
# mean degree ~4.3, edge homophily ~0.82, clean victim accuracy ~0.80.
ACCEPTANCE_SBM = SbmSpec(blocks=(50, 50, 50, 50), p_in=0.065, p_out=0.0053, feature_dim=32, feature_noise=1.0, seed=0)

# well-separated two-block instance; clean accuracy is ~1.0
EASY_SBM = SbmSpec(blocks=(100, 100), p_in=0.1, p_out=0.01, feature_dim=16, feature_noise=0.5, seed=0)


@pytest.fixture(scope="session")
def sbm_bundle():
    return generate_sbm(ACCEPTANCE_SBM)


@pytest.fixture(scope="session")
def small_instance():
    return random_instance(n=12, edge_prob=0.25, d=5, k=3, seed=7)


def path_graph(n=3, features=None, labels=None, k=None):
    edges = [(i, i + 1) for i in range(n - 1)]
    if features is None:
        features = np.eye(n)
    return Graph(n, edges, features, labels, k)


def dense_normalized(adjacency):
    """Reference D^-1/2 (A+I) D^-1/2 straight from the definition."""
    m = np.asarray(adjacency, dtype=float) + np.eye(len(adjacency))
    deg = m.sum(axis=1)
    out = np.empty_like(m)
    for i in range(len(m)):
        for j in range(len(m)):
            out[i, j] = m[i, j] / np.sqrt(deg[i] * deg[j])
    return out


_acceptance_lines = []


def record_criterion(number, name, passed, detail):
    """Queue one line for the summary; ``passed=None`` marks a skipped criterion."""
    status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
    line = f"[{status}] criterion {number}: {name}: {detail}"
    _acceptance_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
