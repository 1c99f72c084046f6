from __future__ import annotations

from typing import Iterable, Optional

import numpy as np
import pytest

from gnnanatomy.graph import Graph, GraphTask, NodeTask
from gnnanatomy.stats import SolvableSet
from gnnanatomy.synth import SynthSpec, generate
from gnnanatomy.training import TrainConfig


def random_graph(rng: np.random.Generator, n: int, feat_dim: int = 3, p: float = 0.4) -> Graph:
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    return Graph.from_edges(n, edges, rng.standard_normal((n, feat_dim)))


def make_set(
    ids: Iterable[int],
    universe: Iterable[int],
    model: str = "gcn",
    dataset: str = "d",
    propagation: Optional[str] = None,
) -> SolvableSet:
    return SolvableSet(
        dataset_name=dataset,
        model_name=model,
        prediction_ids=tuple(ids),
        universe=tuple(universe),
        alpha=0.001,
        n_runs=100,
        num_classes=2,
        critical_count=66,
        propagation=propagation,
    )


@pytest.fixture
def path_graph() -> Graph:
    """0 - 1 - 2 with scalar features 1, 2, 3"""
    return Graph.from_edges(3, [(0, 1), (1, 2)], [[1.0], [2.0], [3.0]])


@pytest.fixture
def star_graph() -> Graph:
    """center 0 with leaves 1, 2, 3 carrying features 1, 2, 3"""
    return Graph.from_edges(4, [(0, 1), (0, 2), (0, 3)], [[0.0], [1.0], [2.0], [3.0]])


@pytest.fixture
def small_node_task() -> NodeTask:
    return generate(SynthSpec(kind="feature", num_nodes=60, num_classes=2, feat_dim=4, seed=3))


@pytest.fixture
def small_graph_task() -> GraphTask:
    return generate(SynthSpec(kind="structure", task="graph", num_graphs=30, nodes_per_graph=6, num_classes=2, seed=5))


@pytest.fixture
def fast_config() -> TrainConfig:
    return TrainConfig(max_epochs=40, patience=5, learning_rate=0.01, n_runs=3, hidden_width=8)
