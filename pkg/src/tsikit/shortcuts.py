"""Shortcut feature extraction: the measurable surface cues a control
classifier is allowed to see.

Three features, all ratios in [0, 1]:

* ``punct_ratio``: punctuation tokens / total tokens.
* ``stop_ratio``: stopword tokens / total tokens, where negation words are
  deliberately not counted as stopwords (they can flip a label).
* ``overlap_1``/``overlap_2``: for sentence pairs, the fraction of token
  occurrences on each side whose token string also appears on the other.

For pair samples the two texts are concatenated (single space) before
computing punctuation and stopword ratios.

The stopword list (176 words) and negation exclusions are frozen data files
shipped with the package; both can be overridden by path so results stay
reproducible under any policy.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import TextSample, is_punct_token, tokenize

FLAG_ORDER = ("P", "S", "O")


def _read_word_file(path) -> frozenset[str]:
    words = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.strip().lower()
        if word:
            words.append(word)
    return frozenset(words)


@dataclass(frozen=True)
class StopwordPolicy:
    """A stopword list minus its negation exclusions.

    Matching is case-insensitive (tokens are already lowercased). Any list
    entry ending in "n't" is always excluded, on top of the explicit
    exclusion file, so user-supplied lists keep negations out too.
    """

    stopwords: frozenset[str]
    negation_exclusions: frozenset[str]

    @property
    def effective(self) -> frozenset[str]:
        return self.stopwords - self.negation_exclusions

    def __post_init__(self):
        contracted = frozenset(w for w in self.stopwords if w.endswith("n't"))
        object.__setattr__(
            self, "negation_exclusions", self.negation_exclusions | contracted
        )
        assert not (self.negation_exclusions & self.effective)

    @classmethod
    def from_files(cls, stopwords_path, exclusions_path) -> "StopwordPolicy":
        return cls(
            stopwords=_read_word_file(stopwords_path),
            negation_exclusions=_read_word_file(exclusions_path),
        )

    @classmethod
    def default(cls) -> "StopwordPolicy":
        data = resources.files("tsikit") / "data"
        return cls.from_files(data / "stopwords.txt", data / "negation_exclusions.txt")


@dataclass(frozen=True)
class FeatureSet:
    """Which shortcut features the control model sees: subset of {P, S, O}."""

    flags: frozenset[str]

    def __post_init__(self):
        if not self.flags:
            raise ValueError("feature set must not be empty")
        bad = self.flags - set(FLAG_ORDER)
        if bad:
            raise ValueError(f"unknown shortcut flags {sorted(bad)}; valid: P, S, O")

    @classmethod
    def parse(cls, text: str) -> "FeatureSet":
        flags = frozenset(ch for ch in text.upper() if ch not in "+, ")
        return cls(flags)

    def __str__(self) -> str:
        return "".join(f for f in FLAG_ORDER if f in self.flags)

    def __contains__(self, flag: str) -> bool:
        return flag in self.flags

    def schema(self) -> tuple[str, ...]:
        names = []
        if "P" in self.flags:
            names.append("punct_ratio")
        if "S" in self.flags:
            names.append("stop_ratio")
        if "O" in self.flags:
            names.extend(["overlap_1", "overlap_2"])
        return tuple(names)


@dataclass(frozen=True)
class ShortcutVector:
    """Extracted shortcut values for one sample, in fixed schema order."""

    values: tuple[float, ...]
    schema: tuple[str, ...]
    warning: bool = False

    def __post_init__(self):
        if len(self.values) != len(self.schema):
            raise ValueError("values and schema lengths differ")
        for name, v in zip(self.schema, self.values):
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")


def _combined_tokens(sample: TextSample) -> list[str]:
    if sample.text_b is not None:
        return tokenize(sample.text_a + " " + sample.text_b)
    return tokenize(sample.text_a)


def punct_ratio(sample: TextSample) -> float:
    """Fraction of tokens that are pure punctuation; 0 for empty text."""
    tokens = _combined_tokens(sample)
    if not tokens:
        return 0.0
    return sum(1 for t in tokens if is_punct_token(t)) / len(tokens)


def stop_ratio(sample: TextSample, policy: StopwordPolicy) -> float:
    """Fraction of tokens in the effective stopword set; 0 for empty text."""
    tokens = _combined_tokens(sample)
    if not tokens:
        return 0.0
    effective = policy.effective
    return sum(1 for t in tokens if t in effective) / len(tokens)


def lexical_overlap(sample: TextSample) -> tuple[float, float]:
    """Token-overlap ratios of a sentence pair, one per side.

    Occurrences are counted with multiplicity on the side being scored;
    membership is tested against the other side's token set, so the result
    is symmetric under swapping the two sentences.
    """
    if sample.text_b is None:
        raise ValueError("lexical overlap needs a sentence pair")
    t1 = tokenize(sample.text_a)
    t2 = tokenize(sample.text_b)
    if not t1 or not t2:
        raise ValueError("lexical overlap needs two non-empty token sequences")
    set1, set2 = set(t1), set(t2)
    o1 = sum(1 for t in t1 if t in set2) / len(t1)
    o2 = sum(1 for t in t2 if t in set1) / len(t2)
    return o1, o2


def extract(
    sample: TextSample, feature_set: FeatureSet, policy: StopwordPolicy | None = None
) -> ShortcutVector:
    """Assemble the shortcut vector for one sample.

    Degenerate inputs (no tokens on a required side) yield zeros with the
    warning flag set instead of raising, so batch extraction stays total.
    """
    if "O" in feature_set and sample.text_b is None:
        raise ValueError("overlap features requested on a single-text sample")
    if "S" in feature_set and policy is None:
        policy = StopwordPolicy.default()

    values: list[float] = []
    warning = False
    combined = _combined_tokens(sample)
    if not combined:
        warning = True

    if "P" in feature_set:
        values.append(punct_ratio(sample))
    if "S" in feature_set:
        values.append(stop_ratio(sample, policy))
    if "O" in feature_set:
        t1 = tokenize(sample.text_a)
        t2 = tokenize(sample.text_b)
        if not t1 or not t2:
            values.extend([0.0, 0.0])
            warning = True
        else:
            values.extend(lexical_overlap(sample))

    return ShortcutVector(values=tuple(values), schema=feature_set.schema(), warning=warning)


def extract_matrix(
    samples, feature_set: FeatureSet, policy: StopwordPolicy | None = None
) -> tuple[np.ndarray, list[bool]]:
    """Extract shortcut vectors for many samples as a dense float matrix."""
    if "S" in feature_set and policy is None:
        policy = StopwordPolicy.default()
    vectors = [extract(s, feature_set, policy) for s in samples]
    matrix = np.array([v.values for v in vectors], dtype=np.float64)
    return matrix, [v.warning for v in vectors]
