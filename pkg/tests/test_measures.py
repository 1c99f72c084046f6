import numpy as np
import pytest

from gnnanatomy.errors import DomainError, UniverseMismatchError
from gnnanatomy.measures import (
    MeasureReport,
    architecture_order,
    best_gnn,
    build_report,
    ensemble_potential,
    expected_fande,
    fande,
    fore,
    gap_additional,
    gap_grids,
    jaccard_across_datasets,
    jaccard_by_dataset,
    jaccard_grid,
    retention,
)

from conftest import make_set

P4 = range(1, 5)


def _sized(n_f, n_e, n_both, total=1000):
    """sets with |S_F| = n_f, |S_E| = n_e and |S_F ∩ S_E| = n_both over ``total`` ids"""
    feats = range(n_f)
    edges = list(range(n_both)) + list(range(n_f, n_f + n_e - n_both))
    universe = range(total)
    return make_set(feats, universe, model="features"), make_set(edges, universe, model="edges")


class TestFeatureEdgeOverlap:
    def test_fande_definition(self):
        assert fande(make_set([1, 2], P4), make_set([2, 3], P4)) == 0.25

    def test_disjoint(self):
        assert fande(make_set([1], P4), make_set([2], P4)) == 0.0

    def test_cora_row(self):
        s_f, s_e = _sized(586, 346, 192)
        assert fande(s_f, s_e) == pytest.approx(0.192)
        assert fore(s_f, s_e) == pytest.approx(0.740)
        assert round(expected_fande(s_f, s_e), 3) == 0.203

    def test_expected_fande_mag_row(self):
        s_f, s_e = _sized(924, 136, 126)
        assert round(expected_fande(s_f, s_e), 3) == 0.126

    def test_mutag_nested_sets(self):
        universe = range(100)
        s_f = make_set(range(45), universe)
        s_e = make_set(range(55), universe)
        assert fore(s_f, s_e) == pytest.approx(0.55)
        assert fande(s_f, s_e) == pytest.approx(0.45)

    def test_empty_sets(self):
        s = make_set([], P4)
        assert fore(s, s) == 0.0
        assert expected_fande(s, make_set([1, 2], P4)) == 0.0

    def test_mismatched_universe(self):
        with pytest.raises(UniverseMismatchError):
            fande(make_set([1], P4), make_set([1], range(1, 6)))

    def test_mismatched_dataset(self):
        with pytest.raises(UniverseMismatchError):
            fore(make_set([1], P4, dataset="a"), make_set([1], P4, dataset="b"))

    def test_inclusion_exclusion_and_order(self):
        rng = np.random.default_rng(11)
        universe = range(50)
        for _ in range(50):
            f = np.flatnonzero(rng.random(50) < rng.random())
            e = np.flatnonzero(rng.random(50) < rng.random())
            s_f, s_e = make_set(f, universe), make_set(e, universe)
            assert round(fore(s_f, s_e) * 50) == len(f) + len(e) - round(fande(s_f, s_e) * 50)
            lo, hi = sorted([s_f.ratio, s_e.ratio])
            assert 0.0 <= fande(s_f, s_e) <= lo <= hi <= fore(s_f, s_e) <= s_f.ratio + s_e.ratio + 1e-12


class TestGap:
    def test_retention_definition(self):
        assert retention(make_set([1, 2, 3], P4), make_set([2, 3, 4], P4)) == pytest.approx(2 / 3)

    def test_retention_superset_is_one(self):
        s = make_set([1, 2], P4)
        assert retention(make_set([1, 2, 3], P4), s) == 1.0
        assert retention(s, s) == 1.0

    def test_retention_of_empty_part_is_missing(self):
        assert retention(make_set([1], P4), make_set([], P4)) is None

    def test_additional_extremes(self):
        s_f, s_e = make_set([1], P4), make_set([2], P4)
        assert gap_additional(make_set(P4, P4), s_f, s_e) == 1.0
        assert gap_additional(make_set([1, 2], P4), s_f, s_e) == 0.0

    def test_additional_with_nothing_unsolved_is_missing(self):
        s_f, s_e = make_set([1, 2], P4), make_set([3, 4], P4)
        assert gap_additional(make_set([1], P4), s_f, s_e) is None

    def test_additional_monotone_in_gnn_set(self):
        s_f, s_e = make_set([0], range(10)), make_set([1], range(10))
        values = [gap_additional(make_set(range(k), range(10)), s_f, s_e) for k in range(11)]
        assert values == sorted(values)

    def test_ensemble_potential(self):
        assert ensemble_potential(make_set([1], P4), make_set([2, 3], P4)) == 0.75


class TestJaccard:
    def _sets(self, ids_a, ids_b):
        a = {d: make_set(ids, range(10), dataset=d, model="gcn") for d, ids in ids_a.items()}
        b = {d: make_set(ids, range(10), dataset=d, model="gin-sum") for d, ids in ids_b.items()}
        return a, b

    def test_identical_and_disjoint(self):
        a, b = self._sets({"x": [1, 2], "y": [3]}, {"x": [1, 2], "y": [3]})
        assert jaccard_across_datasets(a, b) == 1.0
        a, b = self._sets({"x": [1, 2]}, {"x": [3, 4]})
        assert jaccard_across_datasets(a, b) == 0.0

    def test_ids_are_namespaced_by_dataset(self):
        a, b = self._sets({"x": [1], "y": []}, {"x": [], "y": [1]})
        assert jaccard_across_datasets(a, b) == 0.0

    def test_pooled_not_averaged(self):
        a, b = self._sets({"x": [1, 2, 3, 4], "y": [1]}, {"x": [1, 2, 3, 4], "y": [2]})
        assert jaccard_across_datasets(a, b) == pytest.approx(4 / 6)
        by_dataset = jaccard_by_dataset(a, b)
        assert by_dataset == {"x": 1.0, "y": 0.0}

    def test_empty_pool_is_missing(self):
        a, b = self._sets({"x": []}, {"x": []})
        assert jaccard_across_datasets(a, b) is None

    def test_dataset_lists_must_agree(self):
        a, b = self._sets({"x": [1]}, {"y": [1]})
        with pytest.raises(DomainError):
            jaccard_across_datasets(a, b)

    def test_grid_is_symmetric_with_unit_diagonal(self):
        rng = np.random.default_rng(4)
        sets = {
            arch: {d: make_set(np.flatnonzero(rng.random(10) < 0.5), range(10), dataset=d, model=arch) for d in "xyz"}
            for arch in ["sage-mean", "gcn", "gin-max"]
        }
        grid = jaccard_grid(sets)
        assert list(grid) == ["gcn", "gin-max", "sage-mean"]
        for a in grid:
            for b in grid:
                assert grid[a][b] == grid[b][a]
                assert 0.0 <= grid[a][b] <= 1.0
            assert grid[a][a] == 1.0


class TestBestGnn:
    def test_single(self):
        assert best_gnn({"gin-max": make_set([1], P4)}) == ("gin-max", 0.25)

    def test_max(self):
        universe = range(100)
        sets = {"gcn": make_set(range(82), universe), "gin-sum": make_set(range(83), universe)}
        assert best_gnn(sets) == ("gin-sum", 0.83)

    def test_tie_uses_fixed_order(self):
        sets = {"sage-mean": make_set([1], P4), "gin-mean": make_set([2], P4), "gcn": make_set([3], P4)}
        assert best_gnn(sets)[0] == "gcn"

    def test_empty_map(self):
        with pytest.raises(DomainError):
            best_gnn({})

    def test_architecture_order_keeps_unknown_names_last(self):
        assert architecture_order(["mlp", "gin-max", "gcn"]) == ["gcn", "gin-max", "mlp"]


class TestReport:
    def _report(self, dataset="cora"):
        universe = range(10)
        s_f = make_set([0, 1, 2, 3], universe, model="features", dataset=dataset)
        s_e = make_set([3, 4], universe, model="edges", dataset=dataset, propagation="gin-sum")
        gnns = {
            "gin-sum": make_set([0, 1, 2, 3, 4, 5], universe, model="gin-sum", dataset=dataset),
            "gcn": make_set([0, 1, 3, 6, 7], universe, model="gcn", dataset=dataset),
        }
        return build_report(s_f, s_e, gnns)

    def test_table_row(self):
        r = self._report()
        assert r.table1_row() == {
            "dataset": "cora",
            "features": 0.4,
            "edges": 0.2,
            "e_fande": pytest.approx(0.08),
            "fande": 0.1,
            "fore": 0.5,
            "gnn": 0.6,
        }
        assert r.best_architecture == "gin-sum"
        assert r.selected_edge_propagation == "gin-sum"
        assert r.counts["fore"] == r.counts["features"] + r.counts["edges"] - r.counts["fande"]

    def test_gap_triples(self):
        r = self._report()
        assert list(r.gap) == ["gcn", "gin-sum"]
        gcn = r.gap["gcn"]
        assert gcn.feature_retention == 0.75
        assert gcn.edge_retention == 0.5
        assert gcn.additional == pytest.approx(2 / 5)
        assert gcn.ensemble_edges == pytest.approx(0.6)
        assert gcn.ensemble_features == pytest.approx(0.6)
        assert r.gap["gin-sum"].ensemble_features == pytest.approx(0.6)

    def test_dict_round_trip(self):
        r = self._report()
        assert MeasureReport.from_dict(r.to_dict()) == r

    def test_without_gnns(self):
        universe = range(4)
        r = build_report(make_set([1], universe), make_set([2], universe), {})
        assert r.gnn_best is None and r.best_architecture is None and r.gap == {}

    def test_gap_grids(self):
        reports = [self._report("cora"), self._report("citeseer")]
        grids = gap_grids(reports)
        assert set(grids) == {"feature_retention", "edge_retention", "additional"}
        assert grids["feature_retention"]["gcn"] == {"cora": 0.75, "citeseer": 0.75}
        assert list(grids["additional"]) == ["gcn", "gin-sum"]
