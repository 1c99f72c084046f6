from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from .errors import DomainError, UniverseMismatchError
from .models import GNN_KINDS
from .stats import SolvableSet

logger = logging.getLogger(__name__)

ARCHITECTURE_LABELS: Dict[str, str] = {
    "gcn": "GCN",
    "gin-sum": "GIN-sum",
    "gin-mean": "GIN-mean",
    "gin-max": "GIN-max",
    "sage-mean": "GS-mean",
}

TABLE1_COLUMNS: Tuple[str, ...] = ("dataset", "features", "edges", "e_fande", "fande", "fore", "gnn")


def architecture_order(names: Iterable[str]) -> List[str]:
    """Known architectures in their fixed order, then any others as given."""
    names = list(dict.fromkeys(names))
    known = [a for a in GNN_KINDS if a in names]
    return known + [a for a in names if a not in GNN_KINDS]


def _universe(*sets: SolvableSet) -> Tuple[int, ...]:
    first = sets[0].universe
    for s in sets[1:]:
        if s.universe != first or s.dataset_name != sets[0].dataset_name:
            raise UniverseMismatchError(
                f"solvable sets of {sets[0].dataset_name}/{sets[0].model_name} and "
                f"{s.dataset_name}/{s.model_name} do not share a universe"
            )
    return first


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def fande(s_f: SolvableSet, s_e: SolvableSet) -> Optional[float]:
    """|S_F ∩ S_E| / |P|"""
    p = _universe(s_f, s_e)
    return _ratio(len(s_f.members & s_e.members), len(p))


def expected_fande(s_f: SolvableSet, s_e: SolvableSet) -> Optional[float]:
    """Overlap expected if both sets were independent draws."""
    p = _universe(s_f, s_e)
    if not p:
        return None
    return (len(s_f) / len(p)) * (len(s_e) / len(p))


def fore(s_f: SolvableSet, s_e: SolvableSet) -> Optional[float]:
    """|S_F ∪ S_E| / |P|: predictions at least one part solves."""
    p = _universe(s_f, s_e)
    return _ratio(len(s_f.members | s_e.members), len(p))


def retention(s_gnn: SolvableSet, s_part: SolvableSet) -> Optional[float]:
    """Share of the part's solvable set the GNN also solves; None for an empty part."""
    _universe(s_gnn, s_part)
    return _ratio(len(s_gnn.members & s_part.members), len(s_part))


def unsolved(s_f: SolvableSet, s_e: SolvableSet) -> frozenset:
    p = _universe(s_f, s_e)
    return frozenset(p) - (s_f.members | s_e.members)


def gap_additional(s_gnn: SolvableSet, s_f: SolvableSet, s_e: SolvableSet) -> Optional[float]:
    """Share of predictions neither part solves that the GNN solves; None when there are none."""
    _universe(s_gnn, s_f, s_e)
    u = unsolved(s_f, s_e)
    return _ratio(len(s_gnn.members & u), len(u))


def ensemble_potential(s_gnn: SolvableSet, s_part: SolvableSet) -> Optional[float]:
    """|S_GNN ∪ S_part| / |P|, what an oracle ensemble of the GNN and the part could solve."""
    p = _universe(s_gnn, s_part)
    return _ratio(len(s_gnn.members | s_part.members), len(p))


def _pooled(sets: Mapping[str, SolvableSet]) -> set:
    return {(dataset, i) for dataset, s in sets.items() for i in s.prediction_ids}


def jaccard_across_datasets(
    arch_a_sets: Mapping[str, SolvableSet], arch_b_sets: Mapping[str, SolvableSet]
) -> Optional[float]:
    """Jaccard similarity of two architectures' solvable sets pooled over datasets.

    Prediction ids are namespaced by dataset name before pooling.
    """
    if set(arch_a_sets) != set(arch_b_sets):
        raise DomainError(
            f"architectures were measured on different datasets: {sorted(arch_a_sets)} vs {sorted(arch_b_sets)}"
        )
    for dataset in arch_a_sets:
        _universe(arch_a_sets[dataset], arch_b_sets[dataset])
    a, b = _pooled(arch_a_sets), _pooled(arch_b_sets)
    return _ratio(len(a & b), len(a | b))


def jaccard_by_dataset(
    arch_a_sets: Mapping[str, SolvableSet], arch_b_sets: Mapping[str, SolvableSet]
) -> Dict[str, Optional[float]]:
    out: Dict[str, Optional[float]] = {}
    for dataset in arch_a_sets:
        if dataset not in arch_b_sets:
            continue
        a, b = arch_a_sets[dataset], arch_b_sets[dataset]
        _universe(a, b)
        out[dataset] = _ratio(len(a.members & b.members), len(a.members | b.members))
    return out


def jaccard_grid(
    sets: Mapping[str, Mapping[str, SolvableSet]]
) -> Dict[str, Dict[str, Optional[float]]]:
    """Pairwise pooled Jaccard between architectures; ``sets[arch][dataset]``."""
    archs = architecture_order(sets)
    return {a: {b: jaccard_across_datasets(sets[a], sets[b]) for b in archs} for a in archs}


def best_gnn(sets_by_arch: Mapping[str, SolvableSet]) -> Tuple[str, Optional[float]]:
    """Architecture with the largest solvable ratio; ties keep the fixed order."""
    if not sets_by_arch:
        raise DomainError("best_gnn needs at least one architecture")
    best_name: Optional[str] = None
    best_ratio = -1.0
    for name in architecture_order(sets_by_arch):
        ratio = sets_by_arch[name].ratio
        if ratio is not None and ratio > best_ratio:
            best_name, best_ratio = name, ratio
    if best_name is None:
        first = architecture_order(sets_by_arch)[0]
        return first, None
    return best_name, best_ratio


@dataclass
class GapTriple:
    feature_retention: Optional[float]
    edge_retention: Optional[float]
    additional: Optional[float]
    ensemble_edges: Optional[float] = None
    ensemble_features: Optional[float] = None


@dataclass
class MeasureReport:
    dataset_name: str
    features: Optional[float]
    edges: Optional[float]
    expected_fande: Optional[float]
    fande: Optional[float]
    fore: Optional[float]
    gnn_best: Optional[float]
    best_architecture: Optional[str]
    gap: Dict[str, GapTriple]
    selected_edge_propagation: Optional[str]
    alpha: float
    n_runs: int
    universe_size: int
    counts: Dict[str, int] = field(default_factory=dict)

    def table1_row(self) -> Dict[str, object]:
        return {
            "dataset": self.dataset_name,
            "features": self.features,
            "edges": self.edges,
            "e_fande": self.expected_fande,
            "fande": self.fande,
            "fore": self.fore,
            "gnn": self.gnn_best,
        }

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "MeasureReport":
        payload = dict(data)
        payload["gap"] = {k: GapTriple(**v) for k, v in dict(payload.get("gap") or {}).items()}
        return cls(**payload)


def build_report(
    s_f: SolvableSet,
    s_e: SolvableSet,
    gnn_sets: Mapping[str, SolvableSet],
) -> MeasureReport:
    """Summary-table row plus the GaP triple of every GNN architecture for one dataset."""
    p = _universe(s_f, s_e, *gnn_sets.values())
    gap: Dict[str, GapTriple] = {}
    for arch in architecture_order(gnn_sets):
        s_g = gnn_sets[arch]
        gap[arch] = GapTriple(
            feature_retention=retention(s_g, s_f),
            edge_retention=retention(s_g, s_e),
            additional=gap_additional(s_g, s_f, s_e),
            ensemble_edges=ensemble_potential(s_g, s_e),
            ensemble_features=ensemble_potential(s_g, s_f),
        )
    if gnn_sets:
        best_arch, best_ratio = best_gnn(gnn_sets)
    else:
        best_arch, best_ratio = None, None

    report = MeasureReport(
        dataset_name=s_f.dataset_name,
        features=s_f.ratio,
        edges=s_e.ratio,
        expected_fande=expected_fande(s_f, s_e),
        fande=fande(s_f, s_e),
        fore=fore(s_f, s_e),
        gnn_best=best_ratio,
        best_architecture=best_arch,
        gap=gap,
        selected_edge_propagation=s_e.propagation,
        alpha=s_f.alpha,
        n_runs=s_f.n_runs,
        universe_size=len(p),
        counts={
            "features": len(s_f),
            "edges": len(s_e),
            "fande": len(s_f.members & s_e.members),
            "fore": len(s_f.members | s_e.members),
            **{f"gnn:{a}": len(s) for a, s in gnn_sets.items()},
        },
    )
    for arch, triple in gap.items():
        for name in ("feature_retention", "edge_retention", "additional"):
            if getattr(triple, name) is None:
                logger.warning("%s: %s of %s is undefined (empty denominator)", report.dataset_name, name, arch)
    return report


def gap_grids(reports: Iterable[MeasureReport]) -> Dict[str, Dict[str, Dict[str, Optional[float]]]]:
    """``grids[measure][arch][dataset]`` for the three GaP measures."""
    reports = list(reports)
    archs = architecture_order(a for r in reports for a in r.gap)
    grids: Dict[str, Dict[str, Dict[str, Optional[float]]]] = {}
    for name in ("feature_retention", "edge_retention", "additional"):
        grids[name] = {
            a: {r.dataset_name: (getattr(r.gap[a], name) if a in r.gap else None) for r in reports}
            for a in archs
        }
    return grids
