from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import pandas as pd
from dotenv import load_dotenv

from .config import load_train_config, setup_logging, worker_count
from .data_io import (
    MEASURE_FILE,
    emit_report,
    gap_frame,
    load_dataset,
    load_measure,
    load_runmatrix,
    load_solvable,
    save_dataset,
    save_measure,
    save_runmatrix,
    save_solvable,
    write_frame,
)
from .errors import ConfigError, GnnAnatomyError
from .graph import Task
from .measures import (
    ARCHITECTURE_LABELS,
    MeasureReport,
    architecture_order,
    build_report,
    gap_grids,
    jaccard_by_dataset,
    jaccard_grid,
)
from .models import EDGE_INPUT_MODES, EDGE_PROPAGATIONS, GNN_KINDS, MODEL_KINDS
from .stats import DEFAULT_ALPHA, SolvableSet, solvable_set
from .store import DEFAULT_WORKDIR, measure_dirs, register_dataset, runs_path, solvable_path, workspace_paths
from .synth import SYNTH_KINDS, SynthSpec, generate
from .training import RunMatrix, TrainConfig, run_harness, select_edge_propagation

logger = logging.getLogger(__name__)

PROG = "gnnanatomy"

# flag dest -> TrainConfig field
TRAIN_FLAGS = {
    "runs": "n_runs",
    "seed_base": "seed_base",
    "max_epochs": "max_epochs",
    "patience": "patience",
    "lr": "learning_rate",
    "num_layers": "num_layers",
    "hidden_width": "hidden_width",
    "edge_input": "edge_input",
}


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="key = value file overriding TrainConfig defaults")
    common.add_argument(
        "--workers", type=int, default=None,
        help="worker processes for harness runs when unset: $GNNANATOMY_THREADS, else all cores",
    )
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING ... when unset: $GNNANATOMY_LOG_LEVEL, else INFO")
    common.add_argument("--quiet", action="store_true", help="warnings only, no progress bars")
    return common


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    defaults = TrainConfig()
    p.add_argument("--runs", type=int, default=argparse.SUPPRESS, help=f"independent runs (config file, else {defaults.n_runs})")
    p.add_argument("--seed-base", type=int, default=argparse.SUPPRESS, help=f"seed of run 0 (config file, else {defaults.seed_base})")
    p.add_argument("--max-epochs", type=int, default=argparse.SUPPRESS, help=f"(config file, else {defaults.max_epochs})")
    p.add_argument("--patience", type=int, default=argparse.SUPPRESS, help=f"(config file, else {defaults.patience})")
    p.add_argument("--lr", type=float, default=argparse.SUPPRESS, help=f"Adam learning rate (config file, else {defaults.learning_rate})")
    p.add_argument("--num-layers", type=int, default=argparse.SUPPRESS, help=f"(config file, else {defaults.num_layers})")
    p.add_argument("--hidden-width", type=int, default=argparse.SUPPRESS, help="(config file, else min(128, 2*max(in, out)))")
    p.add_argument(
        "--edge-input", choices=EDGE_INPUT_MODES, default=argparse.SUPPRESS,
        help=f"all-ones input of the edge-only model (config file, else {defaults.edge_input})",
    )


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Feature-only / edge-only ablation of GNN benchmark datasets.",
        formatter_class=fmt,
    )
    sub = parser.add_subparsers(dest="command", metavar="<command>")
    sub.required = True

    p = sub.add_parser("synth", parents=[common], formatter_class=fmt, help="generate a synthetic dataset")
    p.add_argument("--kind", choices=SYNTH_KINDS, required=True)
    p.add_argument("--task", choices=("node", "graph"), default="node")
    p.add_argument("--nodes", type=int, default=600, help="node count (node tasks)")
    p.add_argument("--graphs", type=int, default=200, help="graph count (graph tasks)")
    p.add_argument("--nodes-per-graph", type=int, default=20)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--feat-dim", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.0, help="share of units whose labels are shuffled")
    p.add_argument("--avg-degree", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="dataset JSON; its stem becomes the dataset name")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], formatter_class=fmt, help="train one model family many times")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", choices=MODEL_KINDS, required=True)
    p.add_argument(
        "--propagation", choices=EDGE_PROPAGATIONS, default=None,
        help="fix the edge-only propagation instead of selecting it",
    )
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="run matrix JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", parents=[common], formatter_class=fmt, help="run matrix -> solvable set")
    p.add_argument("--runs-file", required=True)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--out", required=True, help="solvable set JSON")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("measure", parents=[common], formatter_class=fmt, help="ForE / GaP / Jaccard for one dataset")
    p.add_argument("--features", required=True, help="feature-only solvable set JSON")
    p.add_argument("--edges", required=True, help="edge-only solvable set JSON")
    p.add_argument("--gnn", nargs="+", required=True, help="one solvable set JSON per GNN architecture")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("report", parents=[common], formatter_class=fmt, help="aggregate measure directories")
    p.add_argument("--measure-dir", nargs="+", required=True)
    p.add_argument(
        "--out",
        required=True,
        help="output directory; table1.csv holds one row per dataset with columns "
        "dataset,features,edges,e_fande,fande,fore,gnn, next to the GaP and Jaccard grid CSVs",
    )
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", parents=[common], formatter_class=fmt, help="train, analyze, measure and report one dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--workdir", default=DEFAULT_WORKDIR)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--gnn", nargs="+", choices=GNN_KINDS, default=list(GNN_KINDS))
    _add_train_flags(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def _train_config(args: argparse.Namespace) -> TrainConfig:
    overrides = {field: getattr(args, flag, None) for flag, field in TRAIN_FLAGS.items()}
    return load_train_config(args.config, overrides)


def _progress(args: argparse.Namespace) -> bool:
    return not args.quiet and sys.stderr.isatty()


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 1.0):
        raise ConfigError(f"--alpha must lie in (0, 1), got {alpha}")


def _train(task: Task, model: str, config: TrainConfig, workers: int, progress: bool, propagation: Optional[str] = None) -> RunMatrix:
    if model == "edges" and propagation is None:
        _, runs = select_edge_propagation(task, config, workers=workers, progress=progress)
        return runs
    if propagation is not None and model != "edges":
        raise ConfigError("--propagation only applies to --model edges")
    spec = config.model_spec(model, task, propagation=propagation)
    return run_harness(spec, task, config, workers=workers, progress=progress)


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SynthSpec(
        kind=args.kind,
        task=args.task,
        num_nodes=args.nodes,
        num_graphs=args.graphs,
        nodes_per_graph=args.nodes_per_graph,
        num_classes=args.classes,
        feat_dim=args.feat_dim,
        noise_rate=args.noise,
        seed=args.seed,
        avg_degree=args.avg_degree,
    )
    task = generate(spec)
    save_dataset(task, args.out)
    logger.info("wrote %s", args.out)
    print(f"{args.out}: {spec.task} task, kind={spec.kind}, {len(task.test)} test predictions")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = _train_config(args)
    workers = worker_count(args.workers)
    task = load_dataset(args.dataset)
    runs = _train(task, args.model, config, workers, _progress(args), propagation=args.propagation)
    save_runmatrix(runs, args.out)
    logger.info("wrote %s", args.out)
    label = runs.model_name if runs.propagation is None else f"{runs.model_name}[{runs.propagation}]"
    print(f"{args.out}: {label} on {runs.dataset_name}, mean test accuracy {runs.test_accuracy().mean():.3f} over {runs.n_runs} runs")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    _check_alpha(args.alpha)
    runs = load_runmatrix(args.runs_file)
    s = solvable_set(runs, alpha=args.alpha)
    save_solvable(s, args.out)
    logger.info("wrote %s", args.out)
    ratio = "" if s.ratio is None else f"{s.ratio:.3f}"
    print(f"{args.out}: {len(s)}/{s.universe_size} solvable ({ratio}), critical count {s.critical_count}/{s.n_runs}")
    return 0


def _gnn_by_arch(sets: Sequence[SolvableSet]) -> Dict[str, SolvableSet]:
    out: Dict[str, SolvableSet] = {}
    for s in sets:
        if s.model_name in out:
            raise ConfigError(f"two --gnn sets for architecture {s.model_name!r}")
        if s.model_name not in GNN_KINDS:
            raise ConfigError(f"--gnn set {s.model_name!r} is not a GNN architecture")
        out[s.model_name] = s
    return {a: out[a] for a in architecture_order(out)}


def write_measure(
    s_f: SolvableSet, s_e: SolvableSet, gnn_sets: Mapping[str, SolvableSet], out_dir: str
) -> MeasureReport:
    """table1.csv, gap.csv, jaccard.csv and measure.json for one dataset."""
    if s_f.model_name != "features" or s_e.model_name != "edges":
        raise ConfigError(
            f"--features/--edges expect feature-only and edge-only sets, got {s_f.model_name!r} and {s_e.model_name!r}"
        )
    report = build_report(s_f, s_e, gnn_sets)
    grid = jaccard_grid({a: {s_f.dataset_name: s} for a, s in gnn_sets.items()})
    emit_report([report], {"jaccard": grid}, out_dir)
    write_frame(gap_frame(report), Path(out_dir) / "gap.csv", index=True)
    save_measure(report, s_f, s_e, gnn_sets, Path(out_dir) / MEASURE_FILE)
    return report


def cmd_measure(args: argparse.Namespace) -> int:
    s_f = load_solvable(args.features)
    s_e = load_solvable(args.edges)
    gnn_sets = _gnn_by_arch([load_solvable(p) for p in args.gnn])
    report = write_measure(s_f, s_e, gnn_sets, args.out_dir)
    _print_row(report)
    return 0


def _print_row(report: MeasureReport) -> None:
    cells = []
    for key, value in report.table1_row().items():
        if key == "dataset":
            continue
        cells.append(f"{key}={'' if value is None else format(value, '.3f')}")
    print(f"{report.dataset_name}: " + " ".join(cells))


def write_aggregate(dirs: Sequence[str], out_dir: str) -> List[MeasureReport]:
    """Summary table over every measure directory plus GaP grids and Jaccard grids pooled over datasets."""
    reports: List[MeasureReport] = []
    sets: Dict[str, Dict[str, SolvableSet]] = {}
    for d in dirs:
        report, _, _, gnn = load_measure(Path(d) / MEASURE_FILE)
        if any(r.dataset_name == report.dataset_name for r in reports):
            raise ConfigError(f"dataset {report.dataset_name!r} appears in more than one measure directory")
        reports.append(report)
        for arch, s in gnn.items():
            sets.setdefault(arch, {})[report.dataset_name] = s
    # pooled Jaccard only over architectures measured on every dataset
    shared = {a: by_ds for a, by_ds in sets.items() if len(by_ds) == len(reports)}
    dropped = sorted(set(sets) - set(shared))
    if dropped:
        logger.warning("not every dataset has %s; left out of the Jaccard grid", ", ".join(dropped))

    grids: Dict[str, Any] = {f"gap_{k}": v for k, v in gap_grids(reports).items()}
    grids["jaccard"] = jaccard_grid(shared)
    emit_report(reports, grids, out_dir)

    rows = []
    archs = architecture_order(shared)
    for i, a in enumerate(archs):
        for b in archs[i + 1 :]:
            for dataset, value in jaccard_by_dataset(shared[a], shared[b]).items():
                rows.append({
                    "architecture_a": ARCHITECTURE_LABELS.get(a, a),
                    "architecture_b": ARCHITECTURE_LABELS.get(b, b),
                    "dataset": dataset,
                    "jaccard": value,
                })
    frame = pd.DataFrame(rows, columns=["architecture_a", "architecture_b", "dataset", "jaccard"])
    frame["jaccard"] = frame["jaccard"].astype("float64")
    write_frame(frame, Path(out_dir) / "jaccard_by_dataset.csv")
    return reports


def cmd_report(args: argparse.Namespace) -> int:
    reports = write_aggregate(args.measure_dir, args.out)
    for r in reports:
        _print_row(r)
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    _check_alpha(args.alpha)
    config = _train_config(args)
    workers = worker_count(args.workers)
    progress = _progress(args)
    task = load_dataset(args.dataset)
    root = args.workdir
    name = task.name
    paths = workspace_paths(root, name)

    analysed: Dict[str, SolvableSet] = {}
    for model in ["features", "edges"] + list(dict.fromkeys(args.gnn)):
        runs = _train(task, model, config, workers, progress)
        save_runmatrix(runs, runs_path(root, name, model))
        s = solvable_set(runs, alpha=args.alpha)
        save_solvable(s, solvable_path(root, name, model))
        analysed[model] = s

    gnn_sets = {a: analysed[a] for a in architecture_order(args.gnn)}
    report = write_measure(analysed["features"], analysed["edges"], gnn_sets, paths["measure"])
    register_dataset(
        root, name, task.kind, args.dataset, report.universe_size,
        models=list(analysed), best_architecture=report.best_architecture,
    )
    write_aggregate(measure_dirs(root), paths["report"])
    _print_row(report)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        setup_logging(args.log_level or ("WARNING" if args.quiet else None))
        return args.func(args)
    except (GnnAnatomyError, OSError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2
