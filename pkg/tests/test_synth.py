import numpy as np
import pytest

from gnnanatomy.config import worker_count
from gnnanatomy.data_io import save_dataset
from gnnanatomy.errors import DomainError
from gnnanatomy.graph import prediction_universe, validate
from gnnanatomy.measures import fande, fore, gap_additional, retention
from gnnanatomy.stats import solvable_set
from gnnanatomy.synth import SynthSpec, generate, permute_noisy, quantile_buckets
from gnnanatomy.training import TrainConfig, run_harness, select_edge_propagation


def _spread(counts):
    return int(counts.max() - counts.min())


class TestHelpers:
    def test_quantile_buckets_balanced_and_ordered(self):
        values = np.array([5.0, 1.0, 3.0, 2.0, 4.0, 0.0, 6.0])
        labels = quantile_buckets(values, 3)
        assert _spread(np.bincount(labels, minlength=3)) <= 1
        order = np.argsort(values)
        assert list(labels[order]) == sorted(labels[order])

    def test_permute_noisy_keeps_counts(self):
        rng = np.random.default_rng(0)
        labels = np.arange(200) % 4
        noisy = permute_noisy(labels, 0.3, rng)
        np.testing.assert_array_equal(np.bincount(noisy), np.bincount(labels))
        assert (noisy != labels).any()

    def test_permute_noisy_zero_rate_is_identity(self):
        labels = np.arange(10) % 2
        np.testing.assert_array_equal(permute_noisy(labels, 0.0, np.random.default_rng(0)), labels)


class TestSynthSpec:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"kind": "feature", "num_classes": 1},
            {"kind": "joint", "num_classes": 3},
            {"kind": "joint", "num_classes": 2, "num_nodes": 61},
            {"kind": "feature", "noise_rate": 0.5},
            {"kind": "feature", "num_nodes": 8, "num_classes": 2},
            {"kind": "community"},
            {"kind": "feature", "task": "edge"},
            {"kind": "structure", "task": "graph", "nodes_per_graph": 1},
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(DomainError):
            SynthSpec(**kwargs)

    def test_name_carries_seed(self):
        assert SynthSpec(kind="joint", num_classes=2, seed=9).name == "synth-node-joint-s9"


class TestNodeTasks:
    @pytest.mark.parametrize("kind,c", [("feature", 4), ("structure", 3), ("joint", 2)])
    def test_valid_and_balanced(self, kind, c):
        task = generate(SynthSpec(kind=kind, num_nodes=120, num_classes=c, seed=1))
        assert validate(task.graph) == []
        labels = task.graph.node_labels
        assert _spread(np.bincount(labels, minlength=c)) <= 1
        for split in (task.train, task.val, task.test):
            assert _spread(np.bincount(labels[split], minlength=c)) <= 1
        assert len(prediction_universe(task)) == len(task.test)

    @pytest.mark.parametrize("kind", ["feature", "structure", "joint"])
    def test_same_spec_gives_identical_file(self, kind, tmp_path):
        spec = SynthSpec(kind=kind, num_nodes=80, num_classes=2, noise_rate=0.1, seed=4)
        save_dataset(generate(spec), tmp_path / "a.json")
        save_dataset(generate(spec), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_different_seeds_differ(self, tmp_path):
        save_dataset(generate(SynthSpec(kind="feature", num_nodes=80, seed=1)), tmp_path / "a.json")
        save_dataset(generate(SynthSpec(kind="feature", num_nodes=80, seed=2)), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() != (tmp_path / "b.json").read_bytes()

    def test_noise_keeps_class_counts(self):
        clean = generate(SynthSpec(kind="feature", num_nodes=200, num_classes=4, seed=7))
        noisy = generate(SynthSpec(kind="feature", num_nodes=200, num_classes=4, noise_rate=0.2, seed=7))
        np.testing.assert_array_equal(np.bincount(clean.graph.node_labels), np.bincount(noisy.graph.node_labels))
        assert (clean.graph.node_labels != noisy.graph.node_labels).any()
        np.testing.assert_array_equal(clean.graph.features, noisy.graph.features)

    def test_structure_labels_follow_degree(self):
        task = generate(SynthSpec(kind="structure", num_nodes=200, num_classes=4, seed=2))
        deg = task.graph.degrees()
        labels = task.graph.node_labels
        for d_low in np.unique(deg):
            lower = labels[deg == d_low].max()
            higher = labels[deg > d_low]
            if len(higher):
                assert lower <= higher.min()

    def test_joint_labels_are_xor_of_bit_and_neighbour_majority(self):
        task = generate(SynthSpec(kind="joint", num_nodes=100, num_classes=2, seed=3))
        g = task.graph
        assert set(g.degrees().tolist()) == {3}
        bits = (g.features[:, 0] > 0).astype(int)
        for v in range(g.num_nodes):
            nbrs = g.col_indices[g.row_offsets[v] : g.row_offsets[v + 1]]
            majority = int(bits[nbrs].sum() * 2 > len(nbrs))
            assert g.node_labels[v] == bits[v] ^ majority


class TestGraphTasks:
    @pytest.mark.parametrize("kind", ["feature", "structure", "joint"])
    def test_valid_and_balanced(self, kind):
        task = generate(SynthSpec(kind=kind, task="graph", num_graphs=40, nodes_per_graph=8, num_classes=2, seed=0))
        assert task.kind == "graph"
        assert len(task.graphs) == 40
        assert all(validate(g) == [] for g in task.graphs)
        assert _spread(np.bincount(task.graph_labels, minlength=2)) <= 1
        assert prediction_universe(task).ids == tuple(sorted(int(i) for i in task.test))

    def test_structure_edge_count_encodes_class(self):
        task = generate(SynthSpec(kind="structure", task="graph", num_graphs=30, nodes_per_graph=8, num_classes=3, seed=1))
        per_class = {}
        for g, y in zip(task.graphs, task.graph_labels):
            per_class.setdefault(int(y), set()).add(g.num_edges)
        assert all(len(v) == 1 for v in per_class.values())
        sizes = [per_class[c].pop() for c in sorted(per_class)]
        assert sizes == sorted(sizes) and len(set(sizes)) == 3

    def test_feature_mean_encodes_class(self):
        task = generate(SynthSpec(kind="feature", task="graph", num_graphs=40, nodes_per_graph=20, num_classes=2, seed=2))
        means = np.array([g.features[:, 0].mean() for g in task.graphs])
        np.testing.assert_array_equal(means > 0, task.graph_labels == 1)


@pytest.mark.slow
class TestSeparation:
    """Full-size runs: 600 nodes, four classes, 100 seeds per model."""

    @pytest.fixture(scope="class")
    def config(self):
        return TrainConfig(max_epochs=1000, patience=25, learning_rate=0.01, n_runs=100)

    def _sets(self, task, config, kinds):
        workers = worker_count()
        out = {}
        for kind in kinds:
            if kind == "edges":
                _, runs = select_edge_propagation(task, config, workers=workers)
            else:
                runs = run_harness(config.model_spec(kind, task), task, config, workers=workers)
            out[kind] = solvable_set(runs)
        return out

    def test_feature_kind(self, config):
        task = generate(SynthSpec(kind="feature", num_nodes=600, num_classes=4, noise_rate=0.05, seed=0))
        sets = self._sets(task, config, ["features", "edges", "sage-mean"])
        assert sets["features"].ratio >= 0.9
        assert sets["edges"].ratio <= 0.1
        assert retention(sets["sage-mean"], sets["features"]) >= 0.9

    def test_structure_kind(self, config):
        task = generate(SynthSpec(kind="structure", num_nodes=600, num_classes=4, noise_rate=0.05, seed=0))
        sets = self._sets(task, config, ["features", "edges"])
        assert sets["edges"].ratio >= 0.9
        assert sets["features"].ratio <= 0.1

    def test_joint_kind(self, config):
        task = generate(SynthSpec(kind="joint", num_nodes=600, num_classes=2, seed=0))
        sets = self._sets(task, config, ["features", "edges", "gin-sum", "sage-mean"])
        s_f, s_e = sets["features"], sets["edges"]
        assert fore(s_f, s_e) <= 0.3
        assert fande(s_f, s_e) <= fore(s_f, s_e)
        best = max(gap_additional(sets[a], s_f, s_e) for a in ("gin-sum", "sage-mean"))
        assert best >= 0.5
