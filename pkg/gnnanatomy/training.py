from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .errors import ConfigError, ShapeError
from .graph import Task, prediction_universe
from .models import (
    EDGE_PROPAGATIONS,
    ModelInput,
    ModelSpec,
    Params,
    backward,
    forward,
    init_params,
    prepare_input,
    softmax_cross_entropy,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 10000
    patience: int = 25
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    n_runs: int = 100
    seed_base: int = 0
    num_layers: int = 3
    hidden_width: Optional[int] = None
    edge_input: str = "column"

    def __post_init__(self) -> None:
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigError("adam betas must lie in [0, 1)")
        if not self.adam_eps > 0:
            raise ConfigError("adam_eps must be > 0")
        if self.num_layers < 1:
            raise ConfigError("num_layers must be >= 1")
        if self.edge_input not in ("column", "matrix"):
            raise ConfigError("edge_input must be 'column' or 'matrix'")

    def model_spec(self, kind: str, task: Task, propagation: Optional[str] = None) -> ModelSpec:
        return ModelSpec.for_task(
            kind,
            task,
            num_layers=self.num_layers,
            hidden_width=self.hidden_width,
            propagation=propagation,
            edge_input=self.edge_input,
        )


class Adam:
    """Adam with bias correction. ``step`` returns fresh arrays, never mutates ``params``."""

    def __init__(self, params: Params, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    @classmethod
    def from_config(cls, params: Params, config: TrainConfig) -> "Adam":
        return cls(params, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)

    def step(self, params: Params, grads: Params) -> Params:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        updated: Params = {}
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / c1
            v_hat = self.v[k] / c2
            updated[k] = p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return updated


def _accuracy(logits: np.ndarray, labels: np.ndarray, rows: np.ndarray) -> float:
    if len(rows) == 0:
        return 0.0
    return float(np.mean(np.argmax(logits[rows], axis=1) == labels[rows]))


@dataclass
class RunResult:
    best_params: Params
    val_accuracy: float
    test_correct: np.ndarray
    best_epoch: int
    stopped_epoch: int
    aborted: bool = False


def train_once(
    spec: ModelSpec,
    task: Task,
    config: TrainConfig,
    seed: int,
    inputs: Optional[ModelInput] = None,
) -> RunResult:
    """Full-batch Adam with early stopping on validation accuracy.

    Parameters of the best validation epoch (earliest on ties) are the ones
    evaluated on the test predictions.
    """
    rng = np.random.default_rng(seed)
    params = init_params(spec, rng)
    if inputs is None:
        inputs = prepare_input(task)
    labels = task.labels
    train_rows = task.train
    # no validation split: monitor training accuracy instead
    monitor_rows = task.val if len(task.val) else task.train
    test_rows = np.asarray(prediction_universe(task).ids, dtype=np.int64)
    optimizer = Adam.from_config(params, config)

    logits, cache = forward(spec, params, inputs)
    best_params, best_logits = params, logits
    best_val, best_epoch = -1.0, 0
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        loss, d_train = softmax_cross_entropy(logits[train_rows], labels[train_rows])
        if not np.isfinite(loss):
            return _aborted(spec, task, seed, epoch, best_params, len(test_rows), f"non-finite loss {loss}")
        dlogits = np.zeros_like(logits)
        dlogits[train_rows] = d_train
        grads = backward(spec, params, cache, dlogits)
        params = optimizer.step(params, grads)
        logits, cache = forward(spec, params, inputs)
        if not np.all(np.isfinite(logits)):
            return _aborted(spec, task, seed, epoch, best_params, len(test_rows), "non-finite logits")
        val = _accuracy(logits, labels, monitor_rows)
        if val > best_val:
            best_val, best_epoch = val, epoch
            best_params, best_logits = params, logits
        elif epoch - best_epoch >= config.patience:
            break

    test_correct = np.argmax(best_logits[test_rows], axis=1) == labels[test_rows]
    logger.debug(
        "%s/%s seed %d: best epoch %d (val %.4f), stopped at %d",
        spec.name, task.name, seed, best_epoch, best_val, epoch,
    )
    return RunResult(
        best_params=best_params,
        val_accuracy=best_val,
        test_correct=test_correct,
        best_epoch=best_epoch,
        stopped_epoch=epoch,
    )


def _aborted(spec: ModelSpec, task: Task, seed: int, epoch: int, params: Params, n_test: int, why: str) -> RunResult:
    logger.warning("%s/%s seed %d aborted at epoch %d: %s", spec.name, task.name, seed, epoch, why)
    return RunResult(
        best_params=params,
        val_accuracy=0.0,
        test_correct=np.zeros(n_test, dtype=bool),
        best_epoch=0,
        stopped_epoch=epoch,
        aborted=True,
    )


@dataclass(eq=False)
class RunMatrix:
    """Correctness of every run on every prediction of the universe."""

    model_name: str
    dataset_name: str
    num_classes: int
    prediction_ids: Tuple[int, ...]
    correct: np.ndarray
    val_accuracy: np.ndarray
    aborted: Optional[np.ndarray] = None
    propagation: Optional[str] = None
    candidates: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.prediction_ids = tuple(int(i) for i in self.prediction_ids)
        if any(a >= b for a, b in zip(self.prediction_ids, self.prediction_ids[1:])):
            raise ShapeError("prediction ids must be unique and ascending")
        self.correct = np.asarray(self.correct, dtype=bool)
        self.val_accuracy = np.asarray(self.val_accuracy, dtype=np.float64)
        if self.correct.ndim != 2:
            raise ShapeError("correct must be a (runs x predictions) matrix")
        if self.correct.shape[1] != len(self.prediction_ids):
            raise ShapeError(
                f"correct has {self.correct.shape[1]} columns but {len(self.prediction_ids)} prediction ids"
            )
        if self.val_accuracy.shape != (self.correct.shape[0],):
            raise ShapeError("val_accuracy needs one entry per run")
        if self.aborted is None:
            self.aborted = np.zeros(self.correct.shape[0], dtype=bool)
        self.aborted = np.asarray(self.aborted, dtype=bool)
        if self.aborted.shape != (self.correct.shape[0],):
            raise ShapeError("aborted needs one entry per run")

    @property
    def n_runs(self) -> int:
        return int(self.correct.shape[0])

    @property
    def n_predictions(self) -> int:
        return int(self.correct.shape[1])

    def correct_counts(self) -> np.ndarray:
        return self.correct.sum(axis=0).astype(np.int64)

    def test_accuracy(self) -> np.ndarray:
        if self.n_predictions == 0:
            return np.zeros(self.n_runs)
        return self.correct.mean(axis=1)


def _harness_job(spec: ModelSpec, task: Task, config: TrainConfig, seed: int):
    res = train_once(spec, task, config, seed)
    return res.val_accuracy, res.test_correct, res.aborted


def run_harness(
    spec: ModelSpec,
    task: Task,
    config: TrainConfig,
    workers: int = 1,
    progress: bool = False,
) -> RunMatrix:
    """Row r is ``train_once`` with seed ``seed_base + r``; rows are merged in run order."""
    seeds = [config.seed_base + r for r in range(config.n_runs)]
    logger.info(
        "training %s on %s: %d runs, %d worker(s)", spec.name, task.name, config.n_runs, workers
    )
    job = partial(_harness_job, spec, task, config)
    bar = tqdm(total=len(seeds), desc=f"{task.name}/{spec.name}", disable=not progress, leave=False)
    rows: List[tuple] = []
    try:
        if workers > 1 and len(seeds) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                # map yields in submission order
                for row in pool.map(job, seeds):
                    rows.append(row)
                    bar.update(1)
        else:
            inputs = prepare_input(task)
            for seed in seeds:
                res = train_once(spec, task, config, seed, inputs=inputs)
                rows.append((res.val_accuracy, res.test_correct, res.aborted))
                bar.update(1)
    finally:
        bar.close()

    universe = prediction_universe(task)
    matrix = RunMatrix(
        model_name=spec.kind,
        dataset_name=task.name,
        num_classes=task.num_classes,
        prediction_ids=universe.ids,
        correct=np.vstack([r[1] for r in rows]).astype(bool),
        val_accuracy=np.array([r[0] for r in rows]),
        aborted=np.array([r[2] for r in rows], dtype=bool),
        propagation=spec.propagation,
    )
    if matrix.aborted.any():
        logger.warning("%s/%s: %d aborted run(s) counted as incorrect", spec.name, task.name, int(matrix.aborted.sum()))
    return matrix


def select_edge_propagation(
    task: Task,
    config: TrainConfig,
    workers: int = 1,
    progress: bool = False,
) -> Tuple[str, RunMatrix]:
    """Train the edge-only model with every propagation and keep the best by mean validation accuracy.

    Ties keep the earlier kind in ``EDGE_PROPAGATIONS``.
    """
    scores: Dict[str, float] = {}
    matrices: Dict[str, RunMatrix] = {}
    best_kind: Optional[str] = None
    for kind in EDGE_PROPAGATIONS:
        spec = config.model_spec("edges", task, propagation=kind)
        matrices[kind] = run_harness(spec, task, config, workers=workers, progress=progress)
        scores[kind] = float(np.mean(matrices[kind].val_accuracy))
        if best_kind is None or scores[kind] > scores[best_kind]:
            best_kind = kind
    assert best_kind is not None
    logger.info(
        "edge-only propagation for %s: %s (%s)",
        task.name, best_kind, ", ".join(f"{k}={v:.4f}" for k, v in scores.items()),
    )
    return best_kind, replace(matrices[best_kind], candidates=scores)
