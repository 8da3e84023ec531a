import math

import numpy as np
import pytest

from tsikit import knn_entropy, shortcuts, synthetic
from tsikit.knn_entropy import (
    EntropyEstimate,
    kl_entropy,
    mc_compare,
    mixed_conditional,
    mixed_mi,
    plugin_discrete,
)
from tsikit.model import TrainConfig

GAUSS_H = 0.5 * math.log(2 * math.pi * math.e)  # 1.4189...


class TestEntropyEstimate:
    def test_invariants(self):
        with pytest.raises(ValueError):
            EntropyEstimate(value_nats=1.0, k=0, n=10, estimator="kl_continuous")
        with pytest.raises(ValueError):
            EntropyEstimate(value_nats=1.0, k=3, n=3, estimator="kl_continuous")
        with pytest.raises(ValueError):
            EntropyEstimate(value_nats=-0.5, k=1, n=10, estimator="plugin_discrete")
        with pytest.raises(ValueError):
            EntropyEstimate(value_nats=0.5, k=3, n=10, estimator="bogus")

    def test_differential_entropy_may_be_negative(self):
        est = EntropyEstimate(value_nats=-2.0, k=3, n=10, estimator="kl_continuous")
        assert est.value_nats == -2.0


class TestKlEntropy:
    def test_uniform_unit_interval(self):
        x = np.random.default_rng(0).random((10000, 1))
        est = kl_entropy(x, k=3)
        assert abs(est.value_nats - 0.0) < 0.02

    def test_standard_normal(self):
        x = np.random.default_rng(1).normal(size=(10000, 1))
        est = kl_entropy(x, k=3)
        assert abs(est.value_nats - GAUSS_H) < 0.02

    def test_scaling_shifts_by_d_log_c(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(10000, 1))
        base = kl_entropy(x, k=3).value_nats
        scaled = kl_entropy(2.0 * x, k=3).value_nats
        assert abs((scaled - base) - math.log(2)) < 0.02

    def test_translation_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(10000, 2))
        base = kl_entropy(x, k=3).value_nats
        moved = kl_entropy(x + 17.5, k=3).value_nats
        assert abs(moved - base) < 0.01

    def test_needs_more_points_than_k(self):
        with pytest.raises(ValueError, match="more than"):
            kl_entropy(np.zeros((3, 1)), k=3)

    def test_tree_and_brute_force_agree(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(400, 3))
        a = kl_entropy(x, k=3, tree=True).value_nats
        b = kl_entropy(x, k=3, tree=False).value_nats
        assert a == pytest.approx(b, abs=1e-9)

    def test_sort_path_matches_tree_in_1d(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(500, 1))
        jittered = np.sort(x[:, 0])
        from tsikit.knn_entropy import _kth_distances_1d
        from scipy.spatial import cKDTree

        r_sort = _kth_distances_1d(jittered, 3)
        r_tree = cKDTree(jittered[:, None]).query(jittered[:, None], k=4, p=np.inf)[0][:, 3]
        assert r_sort == pytest.approx(r_tree, abs=1e-12)

    def test_permutation_invariant_bitwise(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(300, 2))
        perm = rng.permutation(300)
        assert kl_entropy(x, k=3).value_nats == kl_entropy(x[perm], k=3).value_nats

    def test_duplicated_points_survive_via_jitter(self):
        rng = np.random.default_rng(7)
        x = np.repeat(rng.normal(size=(200, 1)), 2, axis=0)
        est = kl_entropy(x, k=3)
        assert math.isfinite(est.value_nats)


class TestPluginDiscrete:
    def test_constant_labels(self):
        assert plugin_discrete([7, 7, 7, 7, 7]).value_nats == 0.0

    def test_balanced_binary(self):
        assert plugin_discrete([0, 1] * 50).value_nats == pytest.approx(math.log(2), abs=1e-12)

    def test_nine_one_closed_form(self):
        expected = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1))
        labels = [0] * 90 + [1] * 10
        assert plugin_discrete(labels).value_nats == pytest.approx(expected, abs=1e-12)

    def test_bounded_by_log_classes(self):
        rng = np.random.default_rng(8)
        labels = rng.integers(0, 5, size=1000)
        est = plugin_discrete(labels)
        assert 0.0 <= est.value_nats <= math.log(5) + 1e-12

    def test_string_labels_accepted(self):
        assert plugin_discrete(["a", "b", "a", "b"]).value_nats == pytest.approx(math.log(2))


class TestMixedMi:
    def test_independent_labels_near_zero(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(10000, 1))
        y = rng.integers(0, 2, size=10000)
        assert abs(mixed_mi(x, y, k=3).value_nats) < 0.02

    def test_sign_of_gaussian_gives_ln2(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=10000)
        y = (x > 0).astype(int)
        assert abs(mixed_mi(x, y, k=3).value_nats - math.log(2)) < 0.05

    def test_duplication_stability(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(3000, 1))
        y = (x[:, 0] > 0.5).astype(int)
        base = mixed_mi(x, y, k=3).value_nats
        doubled = mixed_mi(np.repeat(x, 2, axis=0), np.repeat(y, 2), k=3).value_nats
        assert abs(doubled - base) < 0.02

    def test_small_class_rejected(self):
        x = np.random.default_rng(12).normal(size=(50, 1))
        y = np.array([0] * 47 + [1] * 3)
        with pytest.raises(ValueError, match="members"):
            mixed_mi(x, y, k=3)

    def test_permutation_invariant_bitwise(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(500, 2))
        y = rng.integers(0, 2, size=500)
        perm = rng.permutation(500)
        assert mixed_mi(x, y, k=3).value_nats == mixed_mi(x[perm], y[perm], k=3).value_nats

    def test_single_class_gives_zero(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=(200, 1))
        y = np.zeros(200, dtype=int)
        assert mixed_mi(x, y, k=3).value_nats == pytest.approx(0.0, abs=1e-12)


class TestMixedConditional:
    def test_independence_recovers_h_y(self):
        rng = np.random.default_rng(15)
        x = rng.normal(size=(10000, 1))
        y = rng.integers(0, 2, size=10000)
        est = mixed_conditional(x, y, k=3)
        assert abs(est.value_nats - plugin_discrete(y).value_nats) < 0.03

    def test_deterministic_labels_near_zero(self):
        rng = np.random.default_rng(16)
        x = rng.normal(size=10000)
        y = (x > 0).astype(int)
        est = mixed_conditional(x, y, k=3)
        assert abs(est.value_nats) < 0.05

    def test_never_much_above_plugin(self):
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            x = rng.normal(size=(10000, 2))
            y = rng.integers(0, 3, size=10000)
            est = mixed_conditional(x, y, k=3)
            assert est.value_nats <= plugin_discrete(y).value_nats + 0.03

    def test_small_sample_high_dim_is_unstable_and_flagged_consistently(self):
        values, flags = [], []
        for seed in range(10):
            rng = np.random.default_rng(200 + seed)
            x = rng.normal(size=(50, 10))
            y = rng.integers(0, 2, size=50)
            est = mixed_conditional(x, y, k=3, seed=seed)
            values.append(est.value_nats)
            n_classes = len(np.unique(y))
            in_range = -1e-12 <= est.value_nats <= math.log(n_classes) + 1e-9
            assert est.flag == (not in_range)
            flags.append(est.flag)
        assert max(values) - min(values) > 0.05  # demonstrated spread


@pytest.fixture(scope="module")
def planted_small():
    train, _ = synthetic.make_planted_dataset(
        synthetic.PlantedSpec(n_train=1200, n_dev=50, seed=21)
    )
    return train


class TestMcCompare:
    def test_rows_and_summary_structure(self, planted_small):
        rows, summary = mc_compare(
            planted_small,
            shortcuts.FeatureSet.parse("PS"),
            subset_size=300,
            seeds=[0, 1, 2],
            k=3,
            control_config=TrainConfig(hidden_spec=(10,), epochs=10),
        )
        assert len(rows) == 3
        for row in rows:
            assert set(row) == {
                "seed", "n", "k", "h_y", "h_y_given_xs_knn", "nll_control", "gap",
                "negative_flag", "h_y_given_x_knn",
            }
            assert row["k"] == 3
            assert row["gap"] == pytest.approx(row["h_y_given_xs_knn"] - row["nll_control"])
        assert summary["n_seeds"] == 3
        assert summary["n_negative"] == sum(r["negative_flag"] for r in rows)
        assert summary["x_side"] == "not_provided"

    def test_x_side_cap(self, planted_small):
        rng = np.random.default_rng(0)
        wide = rng.normal(size=(len(planted_small), 32))
        rows, summary = mc_compare(
            planted_small, shortcuts.FeatureSet.parse("P"), subset_size=200, seeds=[0],
            control_config=TrainConfig(hidden_spec=(10,), epochs=6),
            x_matrix=wide, x_dim_cap=16,
        )
        assert summary["x_side"].startswith("not_applicable")
        assert rows[0]["h_y_given_x_knn"] == "n/a"

        narrow = rng.normal(size=(len(planted_small), 4))
        rows, summary = mc_compare(
            planted_small, shortcuts.FeatureSet.parse("P"), subset_size=200, seeds=[0],
            control_config=TrainConfig(hidden_spec=(10,), epochs=6),
            x_matrix=narrow, x_dim_cap=16,
        )
        assert summary["x_side"] == "ok"
        assert isinstance(rows[0]["h_y_given_x_knn"], float)

    def test_oversized_subset_rejected(self, planted_small):
        with pytest.raises(ValueError, match="exceeds"):
            mc_compare(planted_small, shortcuts.FeatureSet.parse("P"),
                       subset_size=10**6, seeds=[0])
