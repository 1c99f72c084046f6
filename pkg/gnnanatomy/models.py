from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ShapeError
from .graph import Graph, Task, disjoint_union, normalized_adjacency

EDGE_PROPAGATIONS: Tuple[str, ...] = ("gcn", "gin-sum", "gin-mean", "gin-max", "sage-mean")
GNN_KINDS: Tuple[str, ...] = EDGE_PROPAGATIONS
MODEL_KINDS: Tuple[str, ...] = ("features", "edges") + GNN_KINDS
EDGE_INPUT_MODES: Tuple[str, ...] = ("column", "matrix")
MAX_HIDDEN_WIDTH = 128

Params = Dict[str, np.ndarray]


def default_hidden_width(in_dim: int, out_dim: int) -> int:
    return min(MAX_HIDDEN_WIDTH, 2 * max(in_dim, out_dim))


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of one model family.

    ``in_dim`` is the width of the stored feature matrix. For the edge-only
    model the effective input width comes from ``edge_input`` instead.
    """

    kind: str
    in_dim: int
    out_dim: int
    task_kind: str = "node"
    num_layers: int = 3
    hidden_width: Optional[int] = None
    propagation: Optional[str] = None
    edge_input: str = "column"

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise DomainError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.kind == "edges":
            if self.propagation not in EDGE_PROPAGATIONS:
                raise DomainError(
                    f"invalid propagation kind {self.propagation!r}; expected one of {EDGE_PROPAGATIONS}"
                )
        elif self.propagation is not None:
            raise DomainError("propagation only applies to the edge-only model")
        if self.edge_input not in EDGE_INPUT_MODES:
            raise DomainError(f"edge_input must be one of {EDGE_INPUT_MODES}")
        if self.task_kind not in ("node", "graph"):
            raise DomainError(f"task_kind must be 'node' or 'graph', got {self.task_kind!r}")
        if self.num_layers < 1:
            raise DomainError("num_layers must be >= 1")
        if self.in_dim < 1 or self.out_dim < 1:
            raise DomainError("in_dim and out_dim must be positive")
        if self.hidden_width is None:
            object.__setattr__(
                self, "hidden_width", default_hidden_width(self.input_width, self.out_dim)
            )
        elif self.hidden_width < 1:
            raise DomainError("hidden_width must be positive")

    @classmethod
    def for_task(cls, kind: str, task: Task, **overrides: Any) -> "ModelSpec":
        if task.kind == "node":
            in_dim = task.graph.feat_dim
        else:
            in_dim = task.graphs[0].feat_dim
        return cls(kind=kind, in_dim=in_dim, out_dim=task.num_classes, task_kind=task.kind, **overrides)

    @property
    def layer_kind(self) -> str:
        if self.kind == "features":
            return "mlp"
        if self.kind == "edges":
            return str(self.propagation)
        return self.kind

    @property
    def input_width(self) -> int:
        if self.kind == "edges" and self.edge_input == "column":
            return 1
        return self.in_dim

    @property
    def name(self) -> str:
        if self.kind == "edges":
            return f"edges[{self.propagation}]"
        return self.kind

    def layer_dims(self) -> List[Tuple[int, int]]:
        widths = [self.input_width] + [int(self.hidden_width)] * (self.num_layers - 1) + [self.out_dim]
        return list(zip(widths[:-1], widths[1:]))


@dataclass(frozen=True, eq=False)
class ModelInput:
    """Propagation operators of one (possibly batched) graph, built once per task."""

    num_nodes: int
    features: np.ndarray
    norm_adj: sp.csr_matrix
    adj: sp.csr_matrix
    mean_adj: sp.csr_matrix
    row_offsets: np.ndarray
    col_indices: np.ndarray
    pool: Optional[sp.csr_matrix] = None


def prepare_graph(graph: Graph, graph_index: Optional[np.ndarray] = None, num_graphs: int = 0) -> ModelInput:
    adj = graph.adjacency()
    deg = graph.degrees().astype(np.float64)
    inv = np.zeros_like(deg)
    np.divide(1.0, deg, out=inv, where=deg > 0)
    mean_adj = sp.csr_matrix(
        (inv[np.repeat(np.arange(graph.num_nodes), graph.degrees())], adj.indices, adj.indptr),
        shape=adj.shape,
    )
    pool = None
    if graph_index is not None:
        pool = sp.csr_matrix(
            (np.ones(graph.num_nodes), (graph_index, np.arange(graph.num_nodes))),
            shape=(num_graphs, graph.num_nodes),
        )
    return ModelInput(
        num_nodes=graph.num_nodes,
        features=graph.features,
        norm_adj=normalized_adjacency(graph),
        adj=adj,
        mean_adj=mean_adj,
        row_offsets=graph.row_offsets,
        col_indices=graph.col_indices,
        pool=pool,
    )


def prepare_input(task: Task) -> ModelInput:
    """Node tasks use the graph as is; graph tasks are batched into one disjoint union."""
    if task.kind == "node":
        return prepare_graph(task.graph)
    union, graph_index = disjoint_union(task.graphs)
    return prepare_graph(union, graph_index=graph_index, num_graphs=len(task.graphs))


def _as_input(graph: Union[Graph, ModelInput]) -> ModelInput:
    return prepare_graph(graph) if isinstance(graph, Graph) else graph


def init_params(spec: ModelSpec, rng: np.random.Generator) -> Params:
    """Glorot-uniform weights drawn in layer order from ``rng``; zero biases."""

    def glorot(fan_in: int, fan_out: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    params: Params = {}
    hidden = int(spec.hidden_width)
    for i, (din, dout) in enumerate(spec.layer_dims()):
        p = f"l{i}."
        if spec.layer_kind in ("mlp", "gcn"):
            params[p + "w"] = glorot(din, dout)
            params[p + "b"] = np.zeros(dout)
        elif spec.layer_kind.startswith("gin-"):
            params[p + "w1"] = glorot(din, hidden)
            params[p + "b1"] = np.zeros(hidden)
            params[p + "w2"] = glorot(hidden, dout)
            params[p + "b2"] = np.zeros(dout)
        else:  # sage-mean
            params[p + "w_self"] = glorot(din, dout)
            params[p + "w_neigh"] = glorot(din, dout)
            params[p + "b"] = np.zeros(dout)
    return params


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def _check_matmul(h: np.ndarray, w: np.ndarray, what: str) -> None:
    if h.ndim != 2 or w.ndim != 2 or h.shape[1] != w.shape[0]:
        raise ShapeError(f"{what}: cannot multiply {h.shape} by {w.shape}")


def _check_bias(w: np.ndarray, bias: np.ndarray, what: str) -> None:
    if bias.shape != (w.shape[1],):
        raise ShapeError(f"{what}: bias shape {bias.shape} does not match {w.shape[1]} outputs")


def spmm(adj: sp.spmatrix, h: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``adj @ h``."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or adj.shape[1] != h.shape[0]:
        raise ShapeError(f"spmm: adjacency {adj.shape} incompatible with dense {h.shape}")
    return np.asarray(adj @ h)


def _relu_mask(pre: np.ndarray) -> np.ndarray:
    # subgradient at 0 is 0
    return pre > 0


def _gcn_fwd(adj: sp.spmatrix, h: np.ndarray, w: np.ndarray, b: np.ndarray, act: bool):
    ah = spmm(adj, h)
    _check_matmul(ah, w, "gcn layer")
    _check_bias(w, b, "gcn layer")
    pre = ah @ w + b
    out = np.maximum(pre, 0.0) if act else pre
    return out, (ah, pre)


def _gcn_bwd(adj: sp.spmatrix, cache, w: np.ndarray, dout: np.ndarray, act: bool):
    ah, pre = cache
    dpre = dout * _relu_mask(pre) if act else dout
    dw = ah.T @ dpre
    db = dpre.sum(axis=0)
    dh = spmm(adj.T, dpre @ w.T)
    return dh, {"w": dw, "b": db}


def gcn_layer_forward(
    adj: sp.spmatrix, h: np.ndarray, w: np.ndarray, bias: np.ndarray, apply_nonlinearity: bool = True
) -> np.ndarray:
    """sigma(norm_adj . h . w + bias); sigma is ReLU, or identity for the logit layer."""
    return _gcn_fwd(adj, h, w, bias, apply_nonlinearity)[0]


def _max_aggregate(inp: ModelInput, h: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Neighbourhood max with the arg-max node per (node, feature); -1 where empty."""
    n, d = h.shape
    out = np.zeros((n, d))
    arg = np.full((n, d), -1, dtype=np.int64)
    deg = np.diff(inp.row_offsets)
    nonempty = np.flatnonzero(deg > 0)
    if nonempty.size == 0:
        return out, arg
    cols = inp.col_indices
    gathered = h[cols]
    starts = inp.row_offsets[:-1][nonempty]
    maxima = np.maximum.reduceat(gathered, starts, axis=0)
    out[nonempty] = maxima
    entry_row = np.repeat(np.arange(n), deg)
    hit = gathered == out[entry_row]
    nnz = len(cols)
    pos = np.where(hit, np.arange(nnz)[:, None], nnz)
    # columns are sorted per row, so the first hit is the lowest node id
    first = np.minimum.reduceat(pos, starts, axis=0)
    arg[nonempty] = cols[first]
    return out, arg


def aggregate(inp: Union[Graph, ModelInput], h: np.ndarray, aggregator: str) -> np.ndarray:
    """Neighbourhood aggregation (no self term); empty neighbourhoods give zero."""
    inp = _as_input(inp)
    return _aggregate(inp, h, aggregator)[0]


def _aggregate(inp: ModelInput, h: np.ndarray, aggregator: str):
    if h.ndim != 2 or h.shape[0] != inp.num_nodes:
        raise ShapeError(f"aggregate: expected {inp.num_nodes} rows, got {h.shape}")
    if aggregator == "sum":
        return spmm(inp.adj, h), None
    if aggregator == "mean":
        return spmm(inp.mean_adj, h), None
    if aggregator == "max":
        return _max_aggregate(inp, h)
    raise DomainError(f"unknown aggregator {aggregator!r}")


def _aggregate_bwd(inp: ModelInput, dagg: np.ndarray, aggregator: str, arg) -> np.ndarray:
    if aggregator == "sum":
        return spmm(inp.adj.T, dagg)
    if aggregator == "mean":
        return spmm(inp.mean_adj.T, dagg)
    dh = np.zeros_like(dagg)
    rows, feats = np.nonzero(arg >= 0)
    np.add.at(dh, (arg[rows, feats], feats), dagg[rows, feats])
    return dh


def _gin_fwd(inp: ModelInput, h: np.ndarray, prm: Params, aggregator: str, act: bool):
    w1, b1, w2, b2 = prm["w1"], prm["b1"], prm["w2"], prm["b2"]
    agg, arg = _aggregate(inp, h, aggregator)
    z = h + agg  # (1 + eps) h_v with eps = 0
    _check_matmul(z, w1, "gin layer")
    _check_bias(w1, b1, "gin layer")
    a1 = z @ w1 + b1
    r1 = np.maximum(a1, 0.0)
    _check_matmul(r1, w2, "gin layer")
    _check_bias(w2, b2, "gin layer")
    a2 = r1 @ w2 + b2
    out = np.maximum(a2, 0.0) if act else a2
    return out, (z, a1, r1, a2, arg)


def _gin_bwd(inp: ModelInput, cache, prm: Params, dout: np.ndarray, aggregator: str, act: bool):
    z, a1, r1, a2, arg = cache
    da2 = dout * _relu_mask(a2) if act else dout
    grads = {"w2": r1.T @ da2, "b2": da2.sum(axis=0)}
    da1 = (da2 @ prm["w2"].T) * _relu_mask(a1)
    grads["w1"] = z.T @ da1
    grads["b1"] = da1.sum(axis=0)
    dz = da1 @ prm["w1"].T
    dh = dz + _aggregate_bwd(inp, dz, aggregator, arg)
    return dh, grads


def gin_layer_forward(
    graph: Union[Graph, ModelInput],
    h: np.ndarray,
    mlp_params: Params,
    aggregator: str = "sum",
    apply_nonlinearity: bool = False,
) -> np.ndarray:
    """MLP(h_v + aggr_u h_u) with a two-layer MLP; ``mlp_params`` holds w1, b1, w2, b2."""
    return _gin_fwd(_as_input(graph), h, mlp_params, aggregator, apply_nonlinearity)[0]


def _sage_fwd(inp: ModelInput, h: np.ndarray, prm: Params, act: bool):
    ws, wn, b = prm["w_self"], prm["w_neigh"], prm["b"]
    m, _ = _aggregate(inp, h, "mean")
    _check_matmul(h, ws, "sage layer")
    _check_matmul(m, wn, "sage layer")
    if ws.shape != wn.shape:
        raise ShapeError(f"sage layer: w_self {ws.shape} and w_neigh {wn.shape} differ")
    _check_bias(ws, b, "sage layer")
    pre = h @ ws + m @ wn + b
    out = np.maximum(pre, 0.0) if act else pre
    return out, (h, m, pre)


def _sage_bwd(inp: ModelInput, cache, prm: Params, dout: np.ndarray, act: bool):
    h, m, pre = cache
    dpre = dout * _relu_mask(pre) if act else dout
    grads = {"w_self": h.T @ dpre, "w_neigh": m.T @ dpre, "b": dpre.sum(axis=0)}
    dh = dpre @ prm["w_self"].T + spmm(inp.mean_adj.T, dpre @ prm["w_neigh"].T)
    return dh, grads


def sage_mean_layer_forward(
    graph: Union[Graph, ModelInput],
    h: np.ndarray,
    w_self: np.ndarray,
    w_neigh: np.ndarray,
    bias: np.ndarray,
    apply_nonlinearity: bool = True,
) -> np.ndarray:
    prm = {"w_self": w_self, "w_neigh": w_neigh, "b": bias}
    return _sage_fwd(_as_input(graph), np.asarray(h, dtype=np.float64), prm, apply_nonlinearity)[0]


def _mlp_fwd(h: np.ndarray, w: np.ndarray, b: np.ndarray, act: bool):
    _check_matmul(h, w, "dense layer")
    _check_bias(w, b, "dense layer")
    pre = h @ w + b
    out = np.maximum(pre, 0.0) if act else pre
    return out, (h, pre)


def _mlp_bwd(cache, w: np.ndarray, dout: np.ndarray, act: bool):
    h, pre = cache
    dpre = dout * _relu_mask(pre) if act else dout
    return dpre @ w.T, {"w": h.T @ dpre, "b": dpre.sum(axis=0)}


def graph_readout(node_embeddings: np.ndarray) -> np.ndarray:
    """Sum readout over the nodes of one graph."""
    h = np.asarray(node_embeddings, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] == 0:
        raise ShapeError("graph_readout needs a nonempty (nodes x width) matrix")
    return h.sum(axis=0)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean cross entropy over rows and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"loss: logits {logits.shape} vs labels {labels.shape}")
    n, c = logits.shape
    if n and (labels.min() < 0 or labels.max() >= c):
        raise DomainError(f"label out of range [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(lse - shifted[rows, labels])) if n else 0.0
    grad = np.exp(shifted - lse[:, None])
    grad[rows, labels] -= 1.0
    grad /= max(n, 1)
    return loss, grad


# ---------------------------------------------------------------------------
# whole models
# ---------------------------------------------------------------------------


def _layer_params(params: Params, i: int) -> Params:
    prefix = f"l{i}."
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


def _num_layers(params: Params) -> int:
    return len({k.split(".", 1)[0] for k in params})


def _initial_embedding(spec: ModelSpec, inp: ModelInput) -> np.ndarray:
    if spec.kind != "edges":
        return inp.features
    if spec.edge_input == "column":
        return np.ones((inp.num_nodes, 1))
    return np.ones_like(inp.features)


def _stack_fwd(layer_kind: str, inp: ModelInput, h: np.ndarray, params: Params):
    caches = []
    n_layers = _num_layers(params)
    for i in range(n_layers):
        act = i < n_layers - 1
        prm = _layer_params(params, i)
        if layer_kind == "mlp":
            h, c = _mlp_fwd(h, prm["w"], prm["b"], act)
        elif layer_kind == "gcn":
            h, c = _gcn_fwd(inp.norm_adj, h, prm["w"], prm["b"], act)
        elif layer_kind.startswith("gin-"):
            h, c = _gin_fwd(inp, h, prm, layer_kind[4:], act)
        elif layer_kind == "sage-mean":
            h, c = _sage_fwd(inp, h, prm, act)
        else:
            raise DomainError(f"unknown layer kind {layer_kind!r}")
        caches.append(c)
    return h, caches


def _stack_bwd(layer_kind: str, inp: ModelInput, params: Params, caches, dout: np.ndarray) -> Params:
    grads: Params = {}
    n_layers = len(caches)
    for i in reversed(range(n_layers)):
        act = i < n_layers - 1
        prm = _layer_params(params, i)
        if layer_kind == "mlp":
            dout, g = _mlp_bwd(caches[i], prm["w"], dout, act)
        elif layer_kind == "gcn":
            dout, g = _gcn_bwd(inp.norm_adj, caches[i], prm["w"], dout, act)
        elif layer_kind.startswith("gin-"):
            dout, g = _gin_bwd(inp, caches[i], prm, dout, layer_kind[4:], act)
        else:
            dout, g = _sage_bwd(inp, caches[i], prm, dout, act)
        for k, v in g.items():
            grads[f"l{i}.{k}"] = v
    return {k: grads[k] for k in params}


def feature_only_forward(features: np.ndarray, params: Params) -> np.ndarray:
    """Row-wise feedforward network; never sees the adjacency."""
    h = np.asarray(features, dtype=np.float64)
    n_layers = _num_layers(params)
    for i in range(n_layers):
        prm = _layer_params(params, i)
        h, _ = _mlp_fwd(h, prm["w"], prm["b"], i < n_layers - 1)
    return h


def edge_only_forward(
    graph: Union[Graph, ModelInput], params: Params, propagation: str, edge_input: str = "column"
) -> np.ndarray:
    """Run ``propagation`` on all-ones input; the stored features are never read."""
    if propagation not in EDGE_PROPAGATIONS:
        raise DomainError(f"invalid propagation kind {propagation!r}; expected one of {EDGE_PROPAGATIONS}")
    inp = _as_input(graph)
    if edge_input == "column":
        h0 = np.ones((inp.num_nodes, 1))
    elif edge_input == "matrix":
        h0 = np.ones_like(inp.features)
    else:
        raise DomainError(f"edge_input must be one of {EDGE_INPUT_MODES}")
    return _stack_fwd(propagation, inp, h0, params)[0]


@dataclass(eq=False)
class ForwardCache:
    inputs: ModelInput
    layers: List[Any]


def forward(spec: ModelSpec, params: Params, inputs: ModelInput) -> Tuple[np.ndarray, ForwardCache]:
    """Logits per node (node tasks) or per graph (graph tasks, sum readout)."""
    h0 = _initial_embedding(spec, inputs)
    node_out, caches = _stack_fwd(spec.layer_kind, inputs, h0, params)
    if spec.task_kind == "graph":
        if inputs.pool is None:
            raise ShapeError("graph task needs a pooling matrix in its ModelInput")
        logits = np.asarray(inputs.pool @ node_out)
    else:
        logits = node_out
    return logits, ForwardCache(inputs=inputs, layers=caches)


def backward(spec: ModelSpec, params: Params, cache: ForwardCache, dlogits: np.ndarray) -> Params:
    """Exact gradients of every parameter given dLoss/dLogits."""
    inputs = cache.inputs
    if spec.task_kind == "graph":
        dnode = spmm(inputs.pool.T, dlogits)
    else:
        dnode = np.asarray(dlogits, dtype=np.float64)
    return _stack_bwd(spec.layer_kind, inputs, params, cache.layers, dnode)
