from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, InvalidGraphError, NoPredictionsError


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True, order="C")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph in CSR form with a node feature matrix.

    Column indices are sorted within each row and there are no self loops;
    the renormalization trick adds them when the GCN propagation is built.
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    features: np.ndarray
    node_labels: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "row_offsets", _frozen(np.asarray(self.row_offsets, dtype=np.int64)))
        object.__setattr__(self, "col_indices", _frozen(np.asarray(self.col_indices, dtype=np.int64)))
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(-1, 1)
        object.__setattr__(self, "features", _frozen(feats))
        if self.node_labels is not None:
            object.__setattr__(self, "node_labels", _frozen(np.asarray(self.node_labels, dtype=np.int64)))

    @classmethod
    def from_edges(
        cls,
        num_nodes: int,
        edges: Union[np.ndarray, Sequence[Sequence[int]]],
        features: Any,
        node_labels: Any = None,
    ) -> "Graph":
        """Build a graph from an edge list, mirroring every (u, v) into (v, u)."""
        if num_nodes < 1:
            raise DomainError(f"a graph needs at least one node, got {num_nodes}")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= num_nodes):
            raise DomainError(f"edge endpoint outside [0, {num_nodes})")
        if np.any(e[:, 0] == e[:, 1]):
            raise DomainError("self loops are not allowed in the edge list")
        both = np.concatenate([e, e[:, ::-1]], axis=0)
        adj = sp.csr_matrix(
            (np.ones(len(both)), (both[:, 0], both[:, 1])), shape=(num_nodes, num_nodes)
        )
        # duplicates are summed by scipy; keep the pattern only
        adj.sum_duplicates()
        adj.sort_indices()
        labels = None if node_labels is None else np.asarray(node_labels, dtype=np.int64)
        return cls(
            num_nodes=int(num_nodes),
            row_offsets=adj.indptr,
            col_indices=adj.indices,
            features=np.asarray(features, dtype=np.float64).reshape(num_nodes, -1),
            node_labels=labels,
        )

    @property
    def feat_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_edges(self) -> int:
        return int(len(self.col_indices) // 2)

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(len(self.col_indices), dtype=np.float64)
        return sp.csr_matrix(
            (data, self.col_indices.copy(), self.row_offsets.copy()),
            shape=(self.num_nodes, self.num_nodes),
        )

    def edge_list(self) -> np.ndarray:
        rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees())
        keep = rows < self.col_indices
        return np.stack([rows[keep], self.col_indices[keep]], axis=1)


def validate(graph: Any) -> List[str]:
    """Return every invariant violation of ``graph``; an empty list means valid."""
    violations: List[str] = []
    try:
        n = int(graph.num_nodes)
        offsets = np.asarray(graph.row_offsets)
        cols = np.asarray(graph.col_indices)
        feats = np.asarray(graph.features)
    except Exception as exc:  # malformed object, still a report
        return [f"unreadable graph: {exc}"]

    if n < 0:
        violations.append("negative num_nodes")
        return violations

    csr_ok = True
    if offsets.ndim != 1 or len(offsets) != n + 1:
        violations.append(f"row_offsets length {len(offsets)} != num_nodes+1 ({n + 1})")
        csr_ok = False
    else:
        if len(offsets) and offsets[0] != 0:
            violations.append("row_offsets must start at 0")
            csr_ok = False
        if np.any(np.diff(offsets) < 0):
            violations.append("nonmonotone offsets")
            csr_ok = False
        if len(offsets) and offsets[-1] != len(cols):
            violations.append(f"last offset {offsets[-1]} != col_indices length {len(cols)}")
            csr_ok = False
    if len(cols) and (cols.min() < 0 or cols.max() >= n):
        violations.append("col index out of range")
        csr_ok = False

    if csr_ok and len(cols):
        rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(offsets))
        cols64 = cols.astype(np.int64)
        if np.any(rows == cols64):
            violations.append("self loop")
        keys = rows * n + cols64
        if len(np.unique(keys)) != len(keys):
            violations.append("duplicate entries")
        if not np.all(np.isin(cols64 * n + rows, keys)):
            violations.append("asymmetric")

    if feats.ndim != 2 or feats.shape[0] != n:
        violations.append(f"features must have {n} rows, got shape {feats.shape}")
    elif not np.all(np.isfinite(feats)):
        violations.append("non-finite features")

    labels = getattr(graph, "node_labels", None)
    if labels is not None and len(np.asarray(labels)) != n:
        violations.append("node_labels length != num_nodes")
    return violations


def normalized_adjacency(graph: Graph) -> sp.csr_matrix:
    """D^(-1/2) (A + I) D^(-1/2) with D the degree diagonal of A + I."""
    n = graph.num_nodes
    a_hat = (graph.adjacency() + sp.identity(n, format="csr")).tocsr()
    a_hat.sort_indices()
    d_hat = np.diff(a_hat.indptr).astype(np.float64)
    rows = np.repeat(np.arange(n), np.diff(a_hat.indptr))
    a_hat.data = 1.0 / np.sqrt(d_hat[rows] * d_hat[a_hat.indices])
    return a_hat


def disjoint_union(graphs: Sequence[Graph]) -> Tuple[Graph, np.ndarray]:
    """Block-diagonal union of ``graphs`` plus the graph index of every node."""
    if not graphs:
        raise DomainError("cannot batch an empty graph list")
    dims = {g.feat_dim for g in graphs}
    if len(dims) != 1:
        raise DomainError(f"graphs disagree on feature width: {sorted(dims)}")
    offsets: List[np.ndarray] = [np.zeros(1, dtype=np.int64)]
    cols: List[np.ndarray] = []
    node_base = 0
    edge_base = 0
    for g in graphs:
        offsets.append(g.row_offsets[1:] + edge_base)
        cols.append(g.col_indices + node_base)
        node_base += g.num_nodes
        edge_base += len(g.col_indices)
    union = Graph(
        num_nodes=node_base,
        row_offsets=np.concatenate(offsets),
        col_indices=np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64),
        features=np.vstack([g.features for g in graphs]),
    )
    graph_index = np.repeat(np.arange(len(graphs)), [g.num_nodes for g in graphs])
    return union, graph_index


def _check_splits(train: np.ndarray, val: np.ndarray, test: np.ndarray, size: int, what: str) -> None:
    parts = {"train": train, "val": val, "test": test}
    for name, ids in parts.items():
        if len(np.unique(ids)) != len(ids):
            raise DomainError(f"{name} split has duplicate {what} ids")
        if len(ids) and (ids.min() < 0 or ids.max() >= size):
            raise DomainError(f"{name} split has {what} ids outside [0, {size})")
    if np.intersect1d(train, val).size or np.intersect1d(train, test).size or np.intersect1d(val, test).size:
        raise DomainError("splits are not disjoint")
    if len(test) == 0:
        raise NoPredictionsError("no predictions: test split is empty")


def _split_array(ids: Any) -> np.ndarray:
    return _frozen(np.sort(np.asarray(ids, dtype=np.int64).reshape(-1)))


@dataclass(frozen=True, eq=False)
class NodeTask:
    """Transductive node classification on one partially labeled graph."""

    graph: Graph
    num_classes: int
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    name: str = "dataset"

    def __post_init__(self) -> None:
        problems = validate(self.graph)
        if problems:
            raise InvalidGraphError(problems)
        if self.num_classes < 2:
            raise DomainError(f"num_classes must be >= 2, got {self.num_classes}")
        for key in ("train", "val", "test"):
            object.__setattr__(self, key, _split_array(getattr(self, key)))
        _check_splits(self.train, self.val, self.test, self.graph.num_nodes, "node")
        if self.graph.node_labels is None:
            raise DomainError("node task requires node_labels")
        used = np.concatenate([self.train, self.val, self.test])
        lab = self.graph.node_labels[used]
        if np.any(lab < 0) or np.any(lab >= self.num_classes):
            raise DomainError(f"split nodes need labels in [0, {self.num_classes})")

    kind = "node"

    @property
    def labels(self) -> np.ndarray:
        return self.graph.node_labels


@dataclass(frozen=True, eq=False)
class GraphTask:
    """Inductive graph classification over a split collection of graphs."""

    graphs: Tuple[Graph, ...]
    graph_labels: np.ndarray
    num_classes: int
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    name: str = "dataset"

    def __post_init__(self) -> None:
        object.__setattr__(self, "graphs", tuple(self.graphs))
        object.__setattr__(self, "graph_labels", _frozen(np.asarray(self.graph_labels, dtype=np.int64)))
        if len(self.graph_labels) != len(self.graphs):
            raise DomainError(
                f"graph_labels length {len(self.graph_labels)} != graph count {len(self.graphs)}"
            )
        for i, g in enumerate(self.graphs):
            problems = validate(g)
            if problems:
                raise InvalidGraphError(problems, where=f"graph {i}")
            if g.num_nodes == 0:
                raise InvalidGraphError(["empty graph"], where=f"graph {i}")
        if self.num_classes < 2:
            raise DomainError(f"num_classes must be >= 2, got {self.num_classes}")
        if np.any(self.graph_labels < 0) or np.any(self.graph_labels >= self.num_classes):
            raise DomainError(f"graph labels must lie in [0, {self.num_classes})")
        for key in ("train", "val", "test"):
            object.__setattr__(self, key, _split_array(getattr(self, key)))
        _check_splits(self.train, self.val, self.test, len(self.graphs), "graph")

    kind = "graph"

    @property
    def labels(self) -> np.ndarray:
        return self.graph_labels


Task = Union[NodeTask, GraphTask]


@dataclass(frozen=True)
class PredictionUniverse:
    ids: Tuple[int, ...]
    num_classes: int

    def __len__(self) -> int:
        return len(self.ids)


def prediction_universe(task: Task) -> PredictionUniverse:
    """Test-set ids in ascending order; the universe P of the task."""
    if len(task.test) == 0:
        raise NoPredictionsError("no predictions: test split is empty")
    return PredictionUniverse(ids=tuple(int(i) for i in np.sort(task.test)), num_classes=task.num_classes)
