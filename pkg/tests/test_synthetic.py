import math
from itertools import product

import numpy as np
import pytest

from tsikit import corpus, shortcuts, synthetic
from tsikit.model import TrainConfig
from tsikit.synthetic import PlantedSpec, ToySpec


def brute_force_label_distribution(spec: ToySpec) -> np.ndarray:
    """Oracle: enumerate every input pattern and both noise branches."""
    if spec.g_kind == "sum":
        pmf = np.zeros(spec.m + 2)
    else:
        pmf = np.zeros(3)
    for bits in product([0, 1], repeat=spec.m):
        p_bits = 1.0
        for b in bits:
            p_bits *= spec.p_x if b else 1.0 - spec.p_x
        g = sum(bits) if spec.g_kind == "sum" else int(all(bits))
        pmf[g] += p_bits * (1.0 - spec.p_y)
        pmf[g + 1] += p_bits * spec.p_y
    return pmf


class TestToySpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            ToySpec(m=1, p_x=0.5, p_y=0.5, g_kind="sum")
        with pytest.raises(ValueError):
            ToySpec(m=3, p_x=0.0, p_y=0.5, g_kind="sum")
        with pytest.raises(ValueError):
            ToySpec(m=3, p_x=0.5, p_y=0.5, g_kind="xor")

    def test_label_alphabet_sizes(self):
        assert ToySpec(m=3, p_x=0.5, p_y=0.5, g_kind="sum").n_classes == 5
        assert ToySpec(m=7, p_x=0.5, p_y=0.5, g_kind="and").n_classes == 3


class TestGenerate:
    def test_sum_labels_stay_in_alphabet(self):
        spec = ToySpec(m=3, p_x=0.5, p_y=0.5, g_kind="sum", n_train=2000, n_dev=500, seed=0)
        data = synthetic.generate(spec)
        for y in (data.y_train, data.y_dev):
            assert y.min() >= 0
            assert y.max() <= 4

    def test_and_is_conjunction_of_bits(self):
        spec = ToySpec(m=4, p_x=0.7, p_y=0.3, g_kind="and", n_train=3000, n_dev=100, seed=2)
        data = synthetic.generate(spec)
        g = np.all(data.x_train == 1, axis=1).astype(int)
        noise = data.y_train - g
        assert set(np.unique(noise)) <= {0, 1}

    def test_feature_means_within_3_sigma(self):
        spec = ToySpec(m=5, p_x=0.3, p_y=0.5, g_kind="sum", n_train=100000, n_dev=10, seed=5)
        data = synthetic.generate(spec)
        se = math.sqrt(0.3 * 0.7 / 100000)
        for j in range(5):
            assert abs(data.x_train[:, j].mean() - 0.3) < 3 * se

    def test_deterministic_per_seed(self):
        spec = ToySpec(m=3, p_x=0.4, p_y=0.2, g_kind="sum", n_train=500, n_dev=100, seed=9)
        a, b = synthetic.generate(spec), synthetic.generate(spec)
        assert (a.x_train == b.x_train).all()
        assert (a.y_dev == b.y_dev).all()

    def test_label_marginal_matches_closed_form(self):
        spec = ToySpec(m=4, p_x=0.6, p_y=0.3, g_kind="sum", n_train=50000, n_dev=10, seed=3)
        data = synthetic.generate(spec)
        pmf = synthetic.label_distribution(spec)
        counts = np.bincount(data.y_train, minlength=len(pmf))
        for c, p in zip(counts, pmf):
            se = math.sqrt(max(p * (1 - p), 1e-12) / 50000)
            assert abs(c / 50000 - p) < 4 * se


class TestExactConditionalEntropy:
    def test_fair_coin(self):
        spec = ToySpec(m=4, p_x=0.3, p_y=0.5, g_kind="sum")
        assert synthetic.exact_conditional_entropy(spec) == pytest.approx(math.log(2), abs=1e-12)

    def test_p01_closed_form(self):
        # independent evaluation of -0.1 ln 0.1 - 0.9 ln 0.9
        expected = -(0.1 * math.log(0.1) + 0.9 * math.log(0.9))
        spec = ToySpec(m=2, p_x=0.5, p_y=0.1, g_kind="and")
        assert synthetic.exact_conditional_entropy(spec) == pytest.approx(expected, abs=1e-12)
        assert round(expected, 4) == 0.3251

    def test_symmetry_in_p(self):
        a = ToySpec(m=2, p_x=0.5, p_y=0.1, g_kind="sum")
        b = ToySpec(m=2, p_x=0.5, p_y=0.9, g_kind="sum")
        assert synthetic.exact_conditional_entropy(a) == pytest.approx(
            synthetic.exact_conditional_entropy(b), abs=1e-12
        )

    def test_invariant_to_m_px_and_g(self):
        base = synthetic.exact_conditional_entropy(ToySpec(m=2, p_x=0.1, p_y=0.3, g_kind="sum"))
        for m in (2, 5, 10):
            for p_x in (0.1, 0.5, 0.9):
                for g in ("sum", "and"):
                    spec = ToySpec(m=m, p_x=p_x, p_y=0.3, g_kind=g)
                    assert synthetic.exact_conditional_entropy(spec) == base


class TestExactLabelEntropy:
    def test_hand_enumerated_sum_m2(self):
        # by hand: g ~ Binomial(2, 1/2) = (1/4, 1/2, 1/4); adding a fair
        # coin gives (1/8, 3/8, 3/8, 1/8) over {0, 1, 2, 3}
        spec = ToySpec(m=2, p_x=0.5, p_y=0.5, g_kind="sum")
        pmf = synthetic.label_distribution(spec)
        assert pmf == pytest.approx([1 / 8, 3 / 8, 3 / 8, 1 / 8], abs=1e-15)
        expected = -sum(p * math.log(p) for p in (1 / 8, 3 / 8, 3 / 8, 1 / 8))
        assert synthetic.exact_label_entropy(spec) == pytest.approx(expected, abs=1e-12)
        assert round(expected, 4) == 1.2555

    def test_and_near_degenerate_limit(self):
        spec = ToySpec(m=2, p_x=1 - 1e-13, p_y=0.3, g_kind="and")
        assert synthetic.exact_label_entropy(spec) == pytest.approx(
            synthetic.binary_entropy(0.3), abs=1e-9
        )

    def test_conditioning_reduces_entropy(self):
        for m, p_x, p_y, g in product((2, 4, 8), (0.2, 0.5, 0.8), (0.1, 0.5), ("sum", "and")):
            spec = ToySpec(m=m, p_x=p_x, p_y=p_y, g_kind=g)
            assert synthetic.exact_label_entropy(spec) >= synthetic.exact_conditional_entropy(spec)

    @pytest.mark.parametrize("g_kind", ["sum", "and"])
    def test_matches_brute_force_enumeration(self, g_kind):
        for m, p_x, p_y in [(2, 0.3, 0.1), (5, 0.7, 0.4), (10, 0.5, 0.9)]:
            spec = ToySpec(m=m, p_x=p_x, p_y=p_y, g_kind=g_kind)
            oracle = brute_force_label_distribution(spec)
            assert synthetic.label_distribution(spec) == pytest.approx(oracle, abs=1e-12)


class TestGapHistogram:
    def test_documented_binning(self):
        hist = synthetic.gap_histogram([0.0, 0.0049, 0.005, 0.023, 0.0999, 0.1, 0.5])
        assert hist["edges"][0] == 0.0
        assert hist["edges"][-1] == 0.1
        assert len(hist["counts"]) == 20
        assert hist["counts"][0] == 2  # 0.0 and 0.0049
        assert hist["counts"][1] == 1  # 0.005
        assert hist["counts"][4] == 1  # 0.023
        assert hist["counts"][19] == 1  # 0.0999
        assert hist["overflow"] == 2  # 0.1 and 0.5

    def test_total_preserved(self):
        gaps = [0.001 * i for i in range(150)]
        hist = synthetic.gap_histogram(gaps)
        assert sum(hist["counts"]) + hist["overflow"] == len(gaps)


class TestKlScaleExperiment:
    def test_default_grid_is_documented_size(self):
        grid = synthetic.default_grid()
        assert len(grid) == 9 * 9 * 9 * 2 == 1458
        assert {s.g_kind for s in grid} == {"sum", "and"}
        assert {s.m for s in grid} == set(range(2, 11))

    def test_single_easy_config_trains_to_floor(self):
        # m=2, p_x=0.5, p_y=0.5, sum at the standard 20000/10000 sizes
        grid = [ToySpec(m=2, p_x=0.5, p_y=0.5, g_kind="sum")]
        results, summary = synthetic.kl_scale_experiment(
            grid,
            TrainConfig(hidden_spec=(30,), batch_size=128, learning_rate=3e-3, early_stop_patience=4),
        )
        assert results[0].status == "trained"
        assert results[0].abs_gap < 0.02
        # cross-entropy cannot beat the true conditional entropy (noise margin)
        assert results[0].nll_dev >= results[0].h_y_given_x - 0.01
        assert summary["n_configs"] == 1
        assert summary["n_failed"] == 0

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            synthetic.kl_scale_experiment([])


class TestPlantedDataset:
    def test_shapes_and_vocab(self):
        train, dev = synthetic.make_planted_dataset(PlantedSpec(n_train=300, n_dev=80, seed=0))
        assert len(train) == 300
        assert len(dev) == 80
        assert train.vocab.names == ("neg", "pos")
        assert not train.is_pair

    def test_deterministic(self):
        a_train, _ = synthetic.make_planted_dataset(PlantedSpec(n_train=50, n_dev=10, seed=4))
        b_train, _ = synthetic.make_planted_dataset(PlantedSpec(n_train=50, n_dev=10, seed=4))
        assert [s.text_a for s in a_train.samples] == [s.text_a for s in b_train.samples]
        assert a_train.labels() == b_train.labels()

    def test_punct_rate_is_bimodal_around_median(self):
        train, _ = synthetic.make_planted_dataset(PlantedSpec(n_train=500, n_dev=10, seed=1))
        ratios = [shortcuts.punct_ratio(s) for s in train.samples]
        lows = [r for r in ratios if r <= 0.11]
        highs = [r for r in ratios if r >= 0.16]
        assert len(lows) + len(highs) == len(ratios)
        assert lows and highs

    def test_roughly_balanced_labels(self):
        train, _ = synthetic.make_planted_dataset(PlantedSpec(n_train=4000, n_dev=10, seed=2))
        counts = train.class_counts()
        assert abs(counts[0] - counts[1]) < 4 * math.sqrt(4000 * 0.25)

    def test_expected_entropies_shape(self):
        exp = synthetic.planted_expected_entropies(PlantedSpec())
        assert exp["h_y"] == pytest.approx(math.log(2))
        assert exp["h_y_given_all"] == pytest.approx(synthetic.binary_entropy(0.1))
        assert exp["h_y_given_all"] < exp["h_y_given_punct"] < exp["h_y"]
