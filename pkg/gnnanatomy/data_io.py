from __future__ import annotations

import io
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
import orjson
import pandas as pd

from .errors import FormatError, GnnAnatomyError
from .graph import Graph, GraphTask, NodeTask, Task
from .measures import ARCHITECTURE_LABELS, TABLE1_COLUMNS, MeasureReport, architecture_order
from .stats import SolvableSet
from .training import RunMatrix

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

NODE_TASK_KEYS = ("task", "num_nodes", "num_classes", "features", "edges", "labels", "splits")
GRAPH_TASK_KEYS = ("task", "num_classes", "graphs", "splits")
GRAPH_ENTRY_KEYS = ("num_nodes", "features", "edges", "label")
SPLIT_KEYS = ("train", "val", "test")
RUNMATRIX_KEYS = ("model", "dataset", "num_classes", "n_runs", "prediction_ids", "val_accuracy", "correct")
RUNMATRIX_OPTIONAL = ("aborted", "propagation", "candidates")
SOLVABLE_KEYS = (
    "dataset", "model", "alpha", "n_runs", "num_classes", "critical_count",
    "universe_size", "universe", "prediction_ids",
)


def atomic_write(path: PathLike, data: bytes) -> None:
    """임시 파일에 먼저 쓰고 os.replace로 교체한다 (부분 파일이 남지 않도록)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _dump(doc: Any, indent: bool = False) -> bytes:
    option = orjson.OPT_SERIALIZE_NUMPY
    if indent:
        option |= orjson.OPT_INDENT_2
    return orjson.dumps(doc, option=option) + b"\n"


def _read_json(path: PathLike) -> Any:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(str(path), "<file>", f"cannot read: {exc.strerror or exc}") from exc
    try:
        return orjson.loads(raw)
    except orjson.JSONDecodeError as exc:
        raise FormatError(str(path), "<document>", f"malformed JSON: {exc}") from exc


def _require(doc: Any, keys: Sequence[str], path: PathLike, where: str = "") -> None:
    if not isinstance(doc, dict):
        raise FormatError(str(path), where or "<document>", "expected a JSON object")
    for key in keys:
        if key not in doc:
            raise FormatError(str(path), where + key, "missing")


def _reject_unknown(doc: Mapping[str, Any], allowed: Sequence[str], path: PathLike, where: str = "") -> None:
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise FormatError(str(path), where + unknown[0], "unknown key")


def _int_array(value: Any, path: PathLike, key: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.int64)
    except (TypeError, ValueError) as exc:
        raise FormatError(str(path), key, f"expected integers: {exc}") from exc
    return arr


def _int_scalar(doc: Mapping[str, Any], key: str, path: PathLike, where: str = "", minimum: Optional[int] = None) -> int:
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or float(value) != int(value):
        raise FormatError(str(path), where + key, f"expected an integer, got {value!r}")
    out = int(value)
    if minimum is not None and out < minimum:
        raise FormatError(str(path), where + key, f"must be >= {minimum}, got {out}")
    return out


def _float_scalar(doc: Mapping[str, Any], key: str, path: PathLike, where: str = "") -> float:
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(str(path), where + key, f"expected a number, got {value!r}")
    return float(value)


def _float_array(value: Any, path: PathLike, key: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise FormatError(str(path), key, f"expected numbers: {exc}") from exc
    return arr


def _float_matrix(value: Any, rows: int, path: PathLike, key: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise FormatError(str(path), key, f"expected a numeric matrix: {exc}") from exc
    if arr.ndim != 2 or arr.shape[0] != rows:
        raise FormatError(str(path), key, f"expected {rows} rows of equal length, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise FormatError(str(path), key, "non-finite entries")
    return arr


def _edges(value: Any, num_nodes: int, path: PathLike, key: str) -> np.ndarray:
    arr = _int_array(value, path, key)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise FormatError(str(path), key, "expected a list of [u, v] pairs")
    if arr.min() < 0 or arr.max() >= num_nodes:
        raise FormatError(str(path), key, f"endpoint outside [0, {num_nodes})")
    if np.any(arr[:, 0] == arr[:, 1]):
        raise FormatError(str(path), key, "self loops are not allowed")
    return arr


def _splits(doc: Any, path: PathLike) -> Dict[str, np.ndarray]:
    _require(doc, SPLIT_KEYS, path, "splits.")
    _reject_unknown(doc, SPLIT_KEYS, path, "splits.")
    return {k: _int_array(doc[k], path, f"splits.{k}").reshape(-1) for k in SPLIT_KEYS}


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


def load_dataset(path: PathLike) -> Task:
    """Dataset JSON -> NodeTask | GraphTask; edges are symmetrised here."""
    doc = _read_json(path)
    _require(doc, ("task",), path)
    name = Path(path).stem
    kind = doc["task"]
    if kind == "node_classification":
        _require(doc, NODE_TASK_KEYS, path)
        _reject_unknown(doc, NODE_TASK_KEYS, path)
        n = _int_scalar(doc, "num_nodes", path, minimum=1)
        num_classes = _int_scalar(doc, "num_classes", path, minimum=2)
        feats = _float_matrix(doc["features"], n, path, "features")
        edges = _edges(doc["edges"], n, path, "edges")
        labels = _int_array(doc["labels"], path, "labels").reshape(-1)
        if len(labels) != n:
            raise FormatError(str(path), "labels", f"expected {n} labels, got {len(labels)}")
        splits = _splits(doc["splits"], path)
        try:
            return NodeTask(
                graph=Graph.from_edges(n, edges, feats, node_labels=labels),
                num_classes=num_classes,
                name=name,
                **splits,
            )
        except GnnAnatomyError as exc:
            raise FormatError(str(path), "splits", str(exc)) from exc
    if kind == "graph_classification":
        _require(doc, GRAPH_TASK_KEYS, path)
        _reject_unknown(doc, GRAPH_TASK_KEYS, path)
        if not isinstance(doc["graphs"], list):
            raise FormatError(str(path), "graphs", "expected a list")
        num_classes = _int_scalar(doc, "num_classes", path, minimum=2)
        graphs: List[Graph] = []
        labels_out: List[int] = []
        for i, entry in enumerate(doc["graphs"]):
            where = f"graphs[{i}]."
            _require(entry, GRAPH_ENTRY_KEYS, path, where)
            _reject_unknown(entry, GRAPH_ENTRY_KEYS, path, where)
            # readout is undefined on an empty graph
            n = _int_scalar(entry, "num_nodes", path, where, minimum=1)
            feats = _float_matrix(entry["features"], n, path, where + "features")
            edges = _edges(entry["edges"], n, path, where + "edges")
            graphs.append(Graph.from_edges(n, edges, feats))
            labels_out.append(_int_scalar(entry, "label", path, where))
        splits = _splits(doc["splits"], path)
        try:
            return GraphTask(
                graphs=tuple(graphs),
                graph_labels=np.asarray(labels_out, dtype=np.int64),
                num_classes=num_classes,
                name=name,
                **splits,
            )
        except GnnAnatomyError as exc:
            raise FormatError(str(path), "graphs", str(exc)) from exc
    raise FormatError(str(path), "task", f"unknown task {kind!r}")


def dataset_document(task: Task) -> Dict[str, Any]:
    splits = {"train": task.train, "val": task.val, "test": task.test}
    if task.kind == "node":
        g = task.graph
        return {
            "task": "node_classification",
            "num_nodes": g.num_nodes,
            "num_classes": task.num_classes,
            "features": g.features,
            "edges": g.edge_list(),
            "labels": g.node_labels,
            "splits": splits,
        }
    return {
        "task": "graph_classification",
        "num_classes": task.num_classes,
        "graphs": [
            {"num_nodes": g.num_nodes, "features": g.features, "edges": g.edge_list(), "label": int(y)}
            for g, y in zip(task.graphs, task.graph_labels)
        ],
        "splits": splits,
    }


def save_dataset(task: Task, path: PathLike) -> None:
    atomic_write(path, _dump(dataset_document(task)))


# ---------------------------------------------------------------------------
# run matrices
# ---------------------------------------------------------------------------


def runmatrix_document(runs: RunMatrix) -> Dict[str, Any]:
    return {
        "model": runs.model_name,
        "dataset": runs.dataset_name,
        "num_classes": runs.num_classes,
        "n_runs": runs.n_runs,
        "prediction_ids": list(runs.prediction_ids),
        "val_accuracy": runs.val_accuracy,
        "correct": ["".join("1" if c else "0" for c in row) for row in runs.correct],
        "aborted": [bool(a) for a in runs.aborted],
        "propagation": runs.propagation,
        "candidates": dict(runs.candidates),
    }


def save_runmatrix(runs: RunMatrix, path: PathLike) -> None:
    atomic_write(path, _dump(runmatrix_document(runs), indent=True))


def load_runmatrix(path: PathLike) -> RunMatrix:
    doc = _read_json(path)
    _require(doc, RUNMATRIX_KEYS, path)
    _reject_unknown(doc, RUNMATRIX_KEYS + RUNMATRIX_OPTIONAL, path)
    n_runs = _int_scalar(doc, "n_runs", path, minimum=0)
    num_classes = _int_scalar(doc, "num_classes", path, minimum=2)
    ids = _int_array(doc["prediction_ids"], path, "prediction_ids").reshape(-1)
    if len(ids) > 1 and np.any(np.diff(ids) <= 0):
        raise FormatError(str(path), "prediction_ids", "ids must be unique and in ascending order")
    rows = doc["correct"]
    if not isinstance(rows, list) or len(rows) != n_runs:
        raise FormatError(str(path), "correct", f"expected {n_runs} rows")
    correct = np.zeros((n_runs, len(ids)), dtype=bool)
    for r, row in enumerate(rows):
        if not isinstance(row, str) or len(row) != len(ids):
            raise FormatError(str(path), "correct", f"expected a string of length {len(ids)}", row=r)
        if set(row) - {"0", "1"}:
            raise FormatError(str(path), "correct", "only '0' and '1' are allowed", row=r)
        correct[r] = np.frombuffer(row.encode("ascii"), dtype=np.uint8) == ord("1")
    val = _float_array(doc["val_accuracy"], path, "val_accuracy")
    if len(val) != n_runs:
        raise FormatError(str(path), "val_accuracy", f"expected {n_runs} entries, got {len(val)}")
    aborted = doc.get("aborted")
    if aborted is not None:
        if not isinstance(aborted, list) or not all(isinstance(a, bool) for a in aborted):
            raise FormatError(str(path), "aborted", "expected a list of booleans")
        if len(aborted) != n_runs:
            raise FormatError(str(path), "aborted", f"expected {n_runs} entries, got {len(aborted)}")
    candidates = doc.get("candidates") or {}
    if not isinstance(candidates, dict):
        raise FormatError(str(path), "candidates", "expected an object")
    propagation = doc.get("propagation")
    if propagation is not None and not isinstance(propagation, str):
        raise FormatError(str(path), "propagation", f"expected a string, got {propagation!r}")
    try:
        return RunMatrix(
            model_name=str(doc["model"]),
            dataset_name=str(doc["dataset"]),
            num_classes=num_classes,
            prediction_ids=tuple(int(i) for i in ids),
            correct=correct,
            val_accuracy=val,
            aborted=None if aborted is None else np.asarray(aborted, dtype=bool),
            propagation=propagation,
            candidates={str(k): _float_scalar(candidates, k, path, "candidates.") for k in candidates},
        )
    except GnnAnatomyError as exc:
        raise FormatError(str(path), "prediction_ids", str(exc)) from exc


# ---------------------------------------------------------------------------
# solvable sets
# ---------------------------------------------------------------------------


def solvable_document(s: SolvableSet) -> Dict[str, Any]:
    return {
        "dataset": s.dataset_name,
        "model": s.model_name,
        "alpha": s.alpha,
        "n_runs": s.n_runs,
        "num_classes": s.num_classes,
        "critical_count": s.critical_count,
        "universe_size": s.universe_size,
        "universe": list(s.universe),
        "prediction_ids": list(s.prediction_ids),
        "mean_accuracy": s.mean_accuracy,
        "propagation": s.propagation,
    }


def solvable_from_document(doc: Any, path: PathLike, where: str = "") -> SolvableSet:
    _require(doc, SOLVABLE_KEYS, path, where)
    _reject_unknown(doc, SOLVABLE_KEYS + ("mean_accuracy", "propagation"), path, where)
    universe = _int_array(doc["universe"], path, where + "universe").reshape(-1)
    if len(universe) != _int_scalar(doc, "universe_size", path, where, minimum=0):
        raise FormatError(str(path), where + "universe_size", "does not match the universe length")
    members = _int_array(doc["prediction_ids"], path, where + "prediction_ids").reshape(-1)
    try:
        return SolvableSet(
            dataset_name=str(doc["dataset"]),
            model_name=str(doc["model"]),
            prediction_ids=tuple(int(i) for i in members),
            universe=tuple(int(i) for i in universe),
            alpha=_float_scalar(doc, "alpha", path, where),
            n_runs=_int_scalar(doc, "n_runs", path, where, minimum=0),
            num_classes=_int_scalar(doc, "num_classes", path, where, minimum=2),
            critical_count=_int_scalar(doc, "critical_count", path, where, minimum=0),
            mean_accuracy=None if doc.get("mean_accuracy") is None else _float_scalar(doc, "mean_accuracy", path, where),
            propagation=doc.get("propagation"),
        )
    except GnnAnatomyError as exc:
        raise FormatError(str(path), where + "prediction_ids", str(exc)) from exc


def save_solvable(s: SolvableSet, path: PathLike) -> None:
    atomic_write(path, _dump(solvable_document(s), indent=True))


def load_solvable(path: PathLike) -> SolvableSet:
    return solvable_from_document(_read_json(path), path)


# ---------------------------------------------------------------------------
# measures and reports
# ---------------------------------------------------------------------------


MEASURE_FILE = "measure.json"


def save_measure(
    report: MeasureReport,
    s_f: SolvableSet,
    s_e: SolvableSet,
    gnn_sets: Mapping[str, SolvableSet],
    path: PathLike,
) -> None:
    doc = {
        "report": report.to_dict(),
        "sets": {
            "features": solvable_document(s_f),
            "edges": solvable_document(s_e),
            "gnn": {a: solvable_document(s) for a, s in gnn_sets.items()},
        },
    }
    atomic_write(path, _dump(doc, indent=True))


def load_measure(path: PathLike):
    """measure.json -> (MeasureReport, features set, edges set, {arch: set})"""
    doc = _read_json(path)
    _require(doc, ("report", "sets"), path)
    _require(doc["sets"], ("features", "edges", "gnn"), path, "sets.")
    try:
        report = MeasureReport.from_dict(doc["report"])
    except (TypeError, KeyError, ValueError, AttributeError) as exc:
        raise FormatError(str(path), "report", f"malformed report: {exc}") from exc
    sets = doc["sets"]
    s_f = solvable_from_document(sets["features"], path, "sets.features.")
    s_e = solvable_from_document(sets["edges"], path, "sets.edges.")
    gnn = {a: solvable_from_document(d, path, f"sets.gnn.{a}.") for a, d in sets["gnn"].items()}
    return report, s_f, s_e, gnn


def _to_csv(df: pd.DataFrame, index: bool) -> bytes:
    buf = io.StringIO()
    df.to_csv(buf, index=index, float_format="%.3f", na_rep="", lineterminator="\n")
    return buf.getvalue().encode("utf-8")


def table1_frame(reports: Iterable[MeasureReport]) -> pd.DataFrame:
    rows = [r.table1_row() for r in reports]
    df = pd.DataFrame(rows, columns=list(TABLE1_COLUMNS))
    numeric = [c for c in TABLE1_COLUMNS if c != "dataset"]
    df[numeric] = df[numeric].astype("float64")
    return df


def grid_frame(grid: Mapping[str, Mapping[str, Optional[float]]], columns: Sequence[str]) -> pd.DataFrame:
    """Architecture rows x ``columns`` with display labels on the rows."""
    archs = architecture_order(grid)
    df = pd.DataFrame(
        [[grid[a].get(c) for c in columns] for a in archs],
        index=pd.Index([ARCHITECTURE_LABELS.get(a, a) for a in archs], name="architecture"),
        columns=list(columns),
        dtype="float64",
    )
    return df


def gap_frame(report: MeasureReport) -> pd.DataFrame:
    archs = architecture_order(report.gap)
    df = pd.DataFrame(
        [
            [
                report.gap[a].feature_retention,
                report.gap[a].edge_retention,
                report.gap[a].additional,
                report.gap[a].ensemble_edges,
                report.gap[a].ensemble_features,
            ]
            for a in archs
        ],
        index=pd.Index([ARCHITECTURE_LABELS.get(a, a) for a in archs], name="architecture"),
        columns=["feature_retention", "edge_retention", "additional", "ensemble_edges", "ensemble_features"],
        dtype="float64",
    )
    return df


def write_frame(df: pd.DataFrame, path: PathLike, index: bool = False) -> None:
    atomic_write(path, _to_csv(df, index))
    logger.info("wrote %s", path)


def emit_report(
    reports: Sequence[MeasureReport],
    grids: Mapping[str, Mapping[str, Mapping[str, Optional[float]]]],
    out_dir: PathLike,
) -> List[Path]:
    """Write ``table1.csv`` plus one CSV per grid (``<name>.csv``) into ``out_dir``.

    Grid columns are the dataset names for GaP grids and architectures for
    Jaccard grids; both take the key order of the first row.
    """
    out = Path(out_dir)
    written = [out / "table1.csv"]
    write_frame(table1_frame(reports), written[0])
    for name, grid in grids.items():
        first = next(iter(grid.values()), {})
        cols = list(first.keys())
        if all(c in grid for c in cols):
            # arch x arch grids use display labels on both axes
            df = grid_frame(grid, cols)
            df.columns = [ARCHITECTURE_LABELS.get(c, c) for c in df.columns]
        else:
            df = grid_frame(grid, cols)
        path = out / f"{name}.csv"
        write_frame(df, path, index=True)
        written.append(path)
    return written
