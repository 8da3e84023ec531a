import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsikit import shortcuts
from tsikit.corpus import TextSample, is_punct_token, tokenize
from tsikit.shortcuts import FeatureSet, ShortcutVector, StopwordPolicy

WORKED_EXAMPLE = "You have access to the facts. The facts are accessible to you."
PHYSICS_PAIR = (
    "What can make Physics easy to learn?",
    "How can you make Physics easy to learn?",
)


@pytest.fixture(scope="module")
def policy():
    return StopwordPolicy.default()


def sample(text_a, text_b=None):
    return TextSample(id="t", text_a=text_a, text_b=text_b, label=0)


class TestStopwordPolicy:
    def test_shipped_lists_load(self, policy):
        assert len(policy.stopwords) == 176
        assert {"you", "have", "to", "the", "are"} <= policy.effective

    def test_negations_never_effective(self, policy):
        assert not (policy.negation_exclusions & policy.effective)
        for word in ("no", "nor", "not", "don't", "weren't"):
            assert word in policy.negation_exclusions
            assert word not in policy.effective

    def test_nt_entries_excluded_even_for_custom_lists(self, tmp_path):
        sw = tmp_path / "sw.txt"
        sw.write_text("alpha\nbeta\nshan't\n")
        ng = tmp_path / "ng.txt"
        ng.write_text("beta\n")
        pol = StopwordPolicy.from_files(sw, ng)
        assert pol.effective == {"alpha"}


class TestPunctRatio:
    def test_worked_example_exact(self):
        assert shortcuts.punct_ratio(sample(WORKED_EXAMPLE)) == 2 / 14

    def test_no_punctuation(self):
        assert shortcuts.punct_ratio(sample("plain words only")) == 0.0

    def test_all_punctuation(self):
        assert shortcuts.punct_ratio(sample("? ? ?")) == 1.0

    def test_empty_text_is_zero(self):
        assert shortcuts.punct_ratio(sample("   ")) == 0.0

    def test_pair_concatenation(self):
        # "a ." + "b ." -> 2 punct of 4 tokens
        assert shortcuts.punct_ratio(sample("a .", "b .")) == 0.5

    @given(st.text(alphabet="abc de.,?! '", max_size=50))
    @settings(max_examples=150, deadline=None)
    def test_complement_with_independent_count(self, text):
        toks = tokenize(text)
        if not toks:
            return
        non_punct = sum(1 for t in toks if not is_punct_token(t)) / len(toks)
        assert shortcuts.punct_ratio(sample(text)) + non_punct == pytest.approx(1.0, abs=1e-12)


class TestStopRatio:
    def test_worked_example_exact(self, policy):
        assert shortcuts.stop_ratio(sample(WORKED_EXAMPLE), policy) == 8 / 14

    def test_no_stopwords(self, policy):
        text = "physics electromagnetism thermodynamics"
        assert shortcuts.stop_ratio(sample(text), policy) == 0.0

    def test_negation_not_counted(self, policy):
        # "don't" is excluded; "do" and "it" count: 2 of 3 tokens
        assert shortcuts.stop_ratio(sample("don't do it"), policy) == 2 / 3

    def test_case_insensitive(self, policy):
        assert shortcuts.stop_ratio(sample("THE The the"), policy) == 1.0


class TestLexicalOverlap:
    def test_physics_pair_under_this_tokenizer(self):
        # hand count: sides tokenize to 8 and 9 tokens; 7 shared types;
        # "what" unshared on side 1, "how"/"you" unshared on side 2
        t1 = tokenize(PHYSICS_PAIR[0])
        t2 = tokenize(PHYSICS_PAIR[1])
        assert (len(t1), len(t2)) == (8, 9)
        assert len(set(t1) & set(t2)) == 7
        o1, o2 = shortcuts.lexical_overlap(sample(*PHYSICS_PAIR))
        assert (o1, o2) == (7 / 8, 7 / 9)

    def test_identical_sentences(self):
        o1, o2 = shortcuts.lexical_overlap(sample("same words here", "same words here"))
        assert (o1, o2) == (1.0, 1.0)

    def test_single_text_rejected(self):
        with pytest.raises(ValueError, match="pair"):
            shortcuts.lexical_overlap(sample("only one side"))

    def test_multiplicity_counted_on_scored_side(self):
        # side 1 repeats "a" three times, all matching side 2
        o1, o2 = shortcuts.lexical_overlap(sample("a a a b", "a c"))
        assert o1 == 3 / 4
        assert o2 == 1 / 2

    @given(
        w1=st.lists(st.sampled_from(["cat", "dog", "fox", "sun", "sky"]), min_size=1, max_size=6),
        w2=st.lists(st.sampled_from(["cat", "dog", "fox", "run", "far"]), min_size=1, max_size=6),
    )
    @settings(max_examples=100, deadline=None)
    def test_symmetry_under_swap(self, w1, w2):
        a, b = " ".join(w1), " ".join(w2)
        o = shortcuts.lexical_overlap(sample(a, b))
        swapped = shortcuts.lexical_overlap(sample(b, a))
        assert o == (swapped[1], swapped[0])


class TestFeatureSet:
    def test_parse_variants(self):
        assert str(FeatureSet.parse("P+S")) == "PS"
        assert str(FeatureSet.parse("spo")) == "PSO"
        assert str(FeatureSet.parse("P")) == "P"

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            FeatureSet.parse("")

    def test_unknown_flag_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            FeatureSet.parse("PX")

    def test_schema_order_fixed(self):
        assert FeatureSet.parse("OSP").schema() == (
            "punct_ratio", "stop_ratio", "overlap_1", "overlap_2",
        )


class TestExtract:
    def test_p_only_worked_example(self, policy):
        vec = shortcuts.extract(sample(WORKED_EXAMPLE), FeatureSet.parse("P"), policy)
        assert vec.values == (2 / 14,)
        assert vec.schema == ("punct_ratio",)

    def test_ps_worked_example(self, policy):
        vec = shortcuts.extract(sample(WORKED_EXAMPLE), FeatureSet.parse("PS"), policy)
        assert vec.values == (2 / 14, 8 / 14)

    def test_pso_boundary_values(self, policy):
        vec = shortcuts.extract(sample("hello", "hello"), FeatureSet.parse("PSO"), policy)
        assert vec.values == (0.0, 0.0, 1.0, 1.0)

    def test_overlap_on_single_text_rejected(self, policy):
        with pytest.raises(ValueError, match="single-text"):
            shortcuts.extract(sample("only one"), FeatureSet.parse("PSO"), policy)

    def test_empty_text_warns_with_zeros(self, policy):
        vec = shortcuts.extract(sample("...", ""), FeatureSet.parse("PSO"), policy)
        assert vec.warning
        assert vec.values == (1.0, 0.0, 0.0, 0.0)

    def test_monotone_schema_prefix(self, policy):
        s = sample(WORKED_EXAMPLE)
        small = shortcuts.extract(s, FeatureSet.parse("P"), policy)
        big = shortcuts.extract(s, FeatureSet.parse("PS"), policy)
        assert big.values[: len(small.values)] == small.values

    @given(st.text(alphabet="abc the to.,?! '", max_size=60))
    @settings(max_examples=100, deadline=None)
    def test_values_always_in_unit_interval(self, policy, text):
        vec = shortcuts.extract(sample(text, text + " x"), FeatureSet.parse("PSO"), policy)
        assert len(vec.values) == len(vec.schema) == 4
        assert all(0.0 <= v <= 1.0 for v in vec.values)

    def test_vector_invariants_enforced(self):
        with pytest.raises(ValueError):
            ShortcutVector(values=(1.2,), schema=("punct_ratio",))
        with pytest.raises(ValueError):
            ShortcutVector(values=(0.5, 0.5), schema=("punct_ratio",))

    def test_extract_matrix_alignment(self, policy):
        samples = [sample("a b ."), sample("the the the")]
        samples = [TextSample(id=f"s{i}", text_a=s.text_a, label=0) for i, s in enumerate(samples)]
        matrix, warnings = shortcuts.extract_matrix(samples, FeatureSet.parse("PS"), policy)
        assert matrix.shape == (2, 2)
        assert matrix[0, 0] == pytest.approx(1 / 3)
        assert matrix[1, 1] == 1.0
        assert warnings == [False, False]
