from __future__ import annotations

import os
import time
from typing import Any, Dict, List, Optional

import orjson

from .data_io import atomic_write
from .errors import FormatError

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "data")
DEFAULT_WORKDIR = os.path.join(DATA_DIR, "workspace")
CATALOG_FILE = "catalog.json"


def _ensure_dirs(root: str) -> None:
    os.makedirs(os.path.join(root, "datasets"), exist_ok=True)


def catalog_path(root: str) -> str:
    return os.path.join(root, CATALOG_FILE)


def load_catalog(root: str = DEFAULT_WORKDIR) -> Dict[str, Any]:
    path = catalog_path(root)
    if not os.path.exists(path):
        return {"datasets": []}
    with open(path, "rb") as f:
        try:
            return orjson.loads(f.read())
        except orjson.JSONDecodeError as exc:
            raise FormatError(path, "<document>", f"malformed JSON: {exc}") from exc


def save_catalog(catalog: Dict[str, Any], root: str = DEFAULT_WORKDIR) -> None:
    _ensure_dirs(root)
    atomic_write(catalog_path(root), orjson.dumps(catalog, option=orjson.OPT_INDENT_2) + b"\n")


def list_datasets(root: str = DEFAULT_WORKDIR) -> List[Dict[str, Any]]:
    return load_catalog(root).get("datasets", [])


def workspace_paths(root: str, dataset: str) -> Dict[str, str]:
    """데이터셋 하나의 산출물 경로 모음"""
    base = os.path.join(root, "datasets", dataset)
    return {
        "base": base,
        "meta": os.path.join(base, "meta.json"),
        "runs": os.path.join(base, "runs"),
        "solvable": os.path.join(base, "solvable"),
        "measure": os.path.join(base, "measure"),
        "report": os.path.join(root, "report"),
    }


def runs_path(root: str, dataset: str, model: str) -> str:
    return os.path.join(workspace_paths(root, dataset)["runs"], f"{model}.json")


def solvable_path(root: str, dataset: str, model: str) -> str:
    return os.path.join(workspace_paths(root, dataset)["solvable"], f"{model}.json")


def register_dataset(
    root: str,
    dataset: str,
    task_kind: str,
    source: str,
    universe_size: int,
    models: List[str],
    best_architecture: Optional[str] = None,
) -> Dict[str, Any]:
    """meta.json을 쓰고 catalog에 등록한다 (같은 이름은 교체)."""
    _ensure_dirs(root)
    paths = workspace_paths(root, dataset)
    os.makedirs(paths["base"], exist_ok=True)

    meta = {
        "id": dataset,
        "task": task_kind,
        "source": os.path.abspath(source),
        "universe_size": universe_size,
        "models": list(models),
        "best_architecture": best_architecture,
        "created_at": int(time.time()),
    }
    atomic_write(paths["meta"], orjson.dumps(meta, option=orjson.OPT_INDENT_2) + b"\n")

    catalog = load_catalog(root)
    entries = [d for d in catalog.get("datasets", []) if d.get("id") != dataset]
    entries.append({"id": dataset, "task": task_kind})
    catalog["datasets"] = sorted(entries, key=lambda d: d["id"])
    save_catalog(catalog, root)
    return meta


def measure_dirs(root: str) -> List[str]:
    """catalog 순서대로, measure.json이 있는 디렉터리만"""
    out = []
    for entry in list_datasets(root):
        d = workspace_paths(root, entry["id"])["measure"]
        if os.path.exists(os.path.join(d, "measure.json")):
            out.append(d)
    return out
