from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Tuple

import networkx as nx
import numpy as np

from .errors import DomainError
from .graph import Graph, GraphTask, NodeTask, Task

logger = logging.getLogger(__name__)

SYNTH_KINDS = ("feature", "structure", "joint")
SPLIT_FRACTIONS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    task: str = "node"
    num_nodes: int = 600
    num_graphs: int = 200
    nodes_per_graph: int = 20
    num_classes: int = 4
    feat_dim: int = 8
    noise_rate: float = 0.0
    seed: int = 0
    avg_degree: float = 4.0

    def __post_init__(self) -> None:
        if self.kind not in SYNTH_KINDS:
            raise DomainError(f"synth kind must be one of {SYNTH_KINDS}, got {self.kind!r}")
        if self.task not in ("node", "graph"):
            raise DomainError(f"synth task must be 'node' or 'graph', got {self.task!r}")
        if self.num_classes < 2:
            raise DomainError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.kind == "joint" and self.num_classes != 2:
            raise DomainError("joint (XOR) tasks are binary: num_classes must be 2")
        if not (0.0 <= self.noise_rate < 0.5):
            raise DomainError(f"noise_rate must lie in [0, 0.5), got {self.noise_rate}")
        if self.feat_dim < 1:
            raise DomainError("feat_dim must be >= 1")
        units = self.num_nodes if self.task == "node" else self.num_graphs
        # every class needs at least one member in each split
        if units < 5 * self.num_classes:
            raise DomainError(f"need at least {5 * self.num_classes} {self.task}s for {self.num_classes} classes")
        if self.task == "node" and self.kind == "joint" and self.num_nodes % 2:
            raise DomainError("joint node tasks use a 3-regular graph: num_nodes must be even")
        if self.task == "graph" and self.nodes_per_graph < 2:
            raise DomainError("nodes_per_graph must be >= 2")
        if self.avg_degree <= 0:
            raise DomainError("avg_degree must be positive")

    @property
    def name(self) -> str:
        return f"synth-{self.task}-{self.kind}-s{self.seed}"


def _nx_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))


def balanced_labels(n: int, c: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(n) % c)


def quantile_buckets(values: np.ndarray, c: int) -> np.ndarray:
    """Rank ``values`` (stable) and cut the ranks into c buckets of sizes within one."""
    n = len(values)
    order = np.argsort(values, kind="stable")
    labels = np.empty(n, dtype=np.int64)
    labels[order] = (np.arange(n) * c) // n
    return labels


def permute_noisy(labels: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Shuffle the labels of a ``rate`` share of items among themselves; class counts stay exact."""
    labels = labels.copy()
    k = int(round(rate * len(labels)))
    if k < 2:
        return labels
    idx = rng.choice(len(labels), size=k, replace=False)
    labels[idx] = labels[idx][rng.permutation(k)]
    return labels


def stratified_split(labels: np.ndarray, c: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """60/20/20 split inside every class."""
    train: List[np.ndarray] = []
    val: List[np.ndarray] = []
    test: List[np.ndarray] = []
    for cls in range(c):
        members = rng.permutation(np.flatnonzero(labels == cls))
        m = len(members)
        n_train = int(round(SPLIT_FRACTIONS[0] * m))
        n_val = int(round((SPLIT_FRACTIONS[0] + SPLIT_FRACTIONS[1]) * m)) - n_train
        train.append(members[:n_train])
        val.append(members[n_train : n_train + n_val])
        test.append(members[n_train + n_val :])
    return np.concatenate(train), np.concatenate(val), np.concatenate(test)


def _edges(g: nx.Graph) -> np.ndarray:
    return np.array(sorted((min(u, v), max(u, v)) for u, v in g.edges()), dtype=np.int64).reshape(-1, 2)


def gen_feature_task(spec: SynthSpec) -> NodeTask:
    """Labels are a linear threshold function of the features; edges ignore labels."""
    if spec.kind != "feature":
        raise DomainError("gen_feature_task needs kind='feature'")
    rng = np.random.default_rng(spec.seed)
    n = spec.num_nodes
    x = rng.standard_normal((n, spec.feat_dim))
    direction = rng.standard_normal(spec.feat_dim)
    labels = quantile_buckets(x @ direction, spec.num_classes)
    labels = permute_noisy(labels, spec.noise_rate, rng)
    g = nx.erdos_renyi_graph(n, min(1.0, spec.avg_degree / max(n - 1, 1)), seed=_nx_seed(rng))
    return _node_task(spec, x, _edges(g), labels, rng)


def _degree_sequence_graph(degrees: np.ndarray, rng: np.random.Generator) -> nx.Graph:
    try:
        return nx.random_degree_sequence_graph(degrees.tolist(), seed=_nx_seed(rng), tries=50)
    except (nx.NetworkXUnfeasible, nx.NetworkXError):
        # degrees drift when parallel edges and self loops are dropped
        logger.info("exact degree sequence not realised; falling back to a pruned configuration model")
        multi = nx.configuration_model(degrees.tolist(), seed=_nx_seed(rng))
        g = nx.Graph(multi)
        g.remove_edges_from(list(nx.selfloop_edges(g)))
        return g


def gen_structure_task(spec: SynthSpec) -> NodeTask:
    """Labels are quantile buckets of node degree; features are pure noise."""
    if spec.kind != "structure":
        raise DomainError("gen_structure_task needs kind='structure'")
    rng = np.random.default_rng(spec.seed)
    n, c = spec.num_nodes, spec.num_classes
    target = balanced_labels(n, c, rng)
    degrees = target + 1
    if degrees.sum() % 2:
        top = np.flatnonzero(target == c - 1)[0]
        degrees[top] += 1
    g = _degree_sequence_graph(degrees, rng)
    realised = np.array([g.degree(v) for v in range(n)], dtype=np.float64)
    # ties broken by a random key so buckets stay balanced
    labels = quantile_buckets(realised + rng.uniform(0, 0.5, size=n), c)
    labels = permute_noisy(labels, spec.noise_rate, rng)
    x = rng.standard_normal((n, spec.feat_dim))
    return _node_task(spec, x, _edges(g), labels, rng)


def _xor_labels(bits: np.ndarray, adj: List[List[int]]) -> np.ndarray:
    maj = np.array([int(sum(bits[u] for u in nbrs) * 2 > len(nbrs)) for nbrs in adj])
    return bits ^ maj


def gen_joint_task(spec: SynthSpec) -> NodeTask:
    """label = own hidden bit XOR majority of the neighbours' bits on a 3-regular graph."""
    if spec.kind != "joint":
        raise DomainError("gen_joint_task needs kind='joint'")
    rng = np.random.default_rng(spec.seed)
    n = spec.num_nodes
    g = nx.random_regular_graph(3, n, seed=_nx_seed(rng))
    adj = [sorted(g.neighbors(v)) for v in range(n)]
    bits = balanced_labels(n, 2, rng)
    labels = _xor_labels(bits, adj)
    # greedy bit flips until the two classes are within one
    for _ in range(20 * n):
        gap = int(labels.sum()) * 2 - n
        if abs(gap) <= 1:
            break
        big = 1 if gap > 0 else 0
        v = int(rng.choice(np.flatnonzero(labels == big)))
        bits[v] ^= 1
        trial = _xor_labels(bits, adj)
        if abs(int(trial.sum()) * 2 - n) < abs(gap):
            labels = trial
        else:
            bits[v] ^= 1
    labels = permute_noisy(labels, spec.noise_rate, rng)
    x = rng.standard_normal((n, spec.feat_dim))
    x[:, 0] = (2.0 * bits - 1.0) + 0.1 * rng.standard_normal(n)
    return _node_task(spec, x, _edges(g), labels, rng)


def _node_task(spec: SynthSpec, x: np.ndarray, edges: np.ndarray, labels: np.ndarray, rng: np.random.Generator) -> NodeTask:
    graph = Graph.from_edges(spec.num_nodes, edges, x, node_labels=labels)
    train, val, test = stratified_split(labels, spec.num_classes, rng)
    return NodeTask(graph=graph, num_classes=spec.num_classes, train=train, val=val, test=test, name=spec.name)


def gen_graph_task(spec: SynthSpec) -> GraphTask:
    """Graph-level variants of the three kinds.

    feature: class sets the mean of the first feature column, edges label-free.
    structure: class sets the exact edge count, features are noise.
    joint: label = (mean feature sign) XOR (high edge count).
    """
    rng = np.random.default_rng(spec.seed)
    c, m = spec.num_classes, spec.nodes_per_graph
    y = balanced_labels(spec.num_graphs, c, rng)
    levels = np.linspace(-1.0, 1.0, c) if c > 1 else np.zeros(1)
    max_edges = m * (m - 1) // 2
    graphs: List[Graph] = []
    for label in y:
        if spec.kind == "feature":
            shift, n_edges = levels[label], None
        elif spec.kind == "structure":
            shift, n_edges = 0.0, min(max_edges, max(1, (label + 1) * m // 2))
        else:
            sign_bit = int(rng.integers(0, 2))
            dense_bit = int(label) ^ sign_bit
            shift = 1.0 if sign_bit else -1.0
            n_edges = min(max_edges, m if dense_bit else max(1, m // 2))
        x = rng.standard_normal((m, spec.feat_dim))
        x[:, 0] = shift + 0.5 * x[:, 0]
        if n_edges is None:
            g = nx.erdos_renyi_graph(m, min(1.0, spec.avg_degree / max(m - 1, 1)), seed=_nx_seed(rng))
        else:
            g = nx.gnm_random_graph(m, n_edges, seed=_nx_seed(rng))
        graphs.append(Graph.from_edges(m, _edges(g), x))
    # content follows the clean labels; noise relabels a share of the graphs
    y = permute_noisy(y, spec.noise_rate, rng)
    train, val, test = stratified_split(y, c, rng)
    return GraphTask(graphs=tuple(graphs), graph_labels=y, num_classes=c, train=train, val=val, test=test, name=spec.name)


def generate(spec: SynthSpec) -> Task:
    if spec.task == "graph":
        return gen_graph_task(spec)
    if spec.kind == "feature":
        return gen_feature_task(spec)
    if spec.kind == "structure":
        return gen_structure_task(spec)
    return gen_joint_task(spec)
