"""Untargeted poisoning attacks on graph structure driven by surrogate-GCN gradients."""

from .attacker import AttackConfig, AttackRun, run_attack
from .datasets import DatasetBundle, SbmSpec, generate_sbm, load_dataset
from .graph import Direction, EdgeFlip, Graph, apply_flip, normalize_adjacency, perturbation_norm
from .structgrad import AttackObjective, structural_gradient
from .surrogate import TrainConfig, train
from .victim import VictimConfig, trial_suite

__all__ = [
    "AttackConfig",
    "AttackObjective",
    "AttackRun",
    "DatasetBundle",
    "Direction",
    "EdgeFlip",
    "Graph",
    "SbmSpec",
    "TrainConfig",
    "VictimConfig",
    "apply_flip",
    "generate_sbm",
    "load_dataset",
    "normalize_adjacency",
    "perturbation_norm",
    "run_attack",
    "structural_gradient",
    "train",
    "trial_suite",
]
