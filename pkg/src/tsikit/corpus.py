"""Dataset ingestion, tokenization, label vocabulary, splits, subsampling.

File formats: JSONL (one object per line) and CSV/TSV with a header row,
UTF-8 only. Field names are configurable; defaults are ``text``,
``text_pair`` and ``label``. Rows with a missing or empty label or an empty
first text are skipped and counted, never fatal.

Tokenization rule (fixed so every ratio feature is reproducible): lowercase,
split on whitespace, then split each maximal run of ASCII punctuation into
its own token. An apostrophe between two letters stays inside the word, so
contractions like "don't" survive as single tokens.
"""

from __future__ import annotations

import csv
import json
import math
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .util import new_rng, fingerprint_dataset

PUNCT_CHARS = frozenset(string.punctuation)

DEFAULT_FIELD_MAP = {"text_a": "text", "text_b": "text_pair", "label": "label", "id": "id"}


@dataclass(frozen=True)
class TextSample:
    """One labeled example; ``text_b`` is set for sentence-pair tasks."""

    id: str
    text_a: str
    label: int
    text_b: str | None = None

    @property
    def is_pair(self) -> bool:
        return self.text_b is not None


@dataclass(frozen=True)
class LabelVocab:
    """Ordered label names; the index of a name is stable across runs."""

    names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("label names must be distinct")
        if not self.names:
            raise ValueError("label vocabulary is empty")

    @property
    def m(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "LabelVocab":
        """Build a vocabulary in first-appearance order."""
        seen: dict[str, None] = {}
        for lab in labels:
            seen.setdefault(lab, None)
        return cls(tuple(seen))


@dataclass
class Dataset:
    samples: list[TextSample]
    vocab: LabelVocab
    split_tag: str = "train"
    n_skipped: int = 0

    def __post_init__(self):
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError("sample ids must be unique within a dataset")
        for s in self.samples:
            if not (0 <= s.label < self.vocab.m):
                raise ValueError(f"label index {s.label} out of range for m={self.vocab.m}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def is_pair(self) -> bool:
        return bool(self.samples) and all(s.is_pair for s in self.samples)

    def labels(self) -> list[int]:
        return [s.label for s in self.samples]

    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def class_counts(self) -> list[int]:
        counts = Counter(s.label for s in self.samples)
        return [counts.get(c, 0) for c in range(self.vocab.m)]

    def fingerprint(self) -> str:
        return fingerprint_dataset(self.ids(), self.labels())


def tokenize(text: str) -> list[str]:
    """Lowercase and split into tokens; punctuation runs become tokens.

    Deterministic and idempotent: re-tokenizing ``" ".join(tokens)`` gives
    the same sequence. Empty input gives an empty list.
    """
    tokens: list[str] = []
    for chunk in text.lower().split():
        tokens.extend(_split_chunk(chunk))
    return tokens


def _split_chunk(chunk: str) -> list[str]:
    n = len(chunk)
    is_punct = []
    for i, ch in enumerate(chunk):
        if ch in PUNCT_CHARS:
            inside_word = (
                ch == "'" and 0 < i < n - 1 and chunk[i - 1].isalpha() and chunk[i + 1].isalpha()
            )
            is_punct.append(not inside_word)
        else:
            is_punct.append(False)
    parts = []
    start = 0
    for i in range(1, n + 1):
        if i == n or is_punct[i] != is_punct[start]:
            parts.append(chunk[start:i])
            start = i
    return parts


def is_punct_token(token: str) -> bool:
    return bool(token) and all(ch in PUNCT_CHARS for ch in token)


def load_dataset(
    path,
    format: str | None = None,
    field_map: Mapping[str, str] | None = None,
    vocab: LabelVocab | None = None,
    split_tag: str = "train",
) -> Dataset:
    """Load a labeled dataset from JSONL, CSV or TSV.

    The label vocabulary is built from distinct label strings in
    first-appearance order, unless an existing ``vocab`` is passed (loading
    a dev set against the train vocabulary). Malformed rows (missing or
    empty label or first text) are skipped and counted in ``n_skipped``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    fmt = format or _guess_format(path)
    fields = dict(DEFAULT_FIELD_MAP)
    if field_map:
        fields.update(field_map)

    if fmt == "jsonl":
        raw_rows, n_bad = _read_jsonl(path)
    elif fmt in ("csv", "tsv"):
        raw_rows, n_bad = _read_delimited(path, "\t" if fmt == "tsv" else ",", fields)
    else:
        raise ValueError(f"unknown format {fmt!r}; expected jsonl, csv or tsv")

    records: list[tuple[str, str, str | None, str]] = []
    for lineno, row in raw_rows:
        label = _clean(row.get(fields["label"]))
        text_a = _clean(row.get(fields["text_a"]))
        if not label or not text_a:
            n_bad += 1
            continue
        text_b = _clean(row.get(fields["text_b"])) or None
        sid = _clean(row.get(fields["id"])) or f"row{lineno}"
        records.append((sid, text_a, text_b, label))

    if not records:
        raise ValueError(f"no usable rows in {path} (skipped {n_bad})")

    if vocab is None:
        vocab = LabelVocab.from_labels(r[3] for r in records)
        if vocab.m < 2:
            raise ValueError(f"dataset {path} has a single label class {vocab.names[0]!r}")
    else:
        unseen = {r[3] for r in records} - set(vocab.names)
        if unseen:
            raise ValueError(f"labels not in vocabulary: {sorted(unseen)}")

    samples = [
        TextSample(id=sid, text_a=a, text_b=b, label=vocab.index(lab))
        for sid, a, b, lab in records
    ]
    return Dataset(samples=samples, vocab=vocab, split_tag=split_tag, n_skipped=n_bad)


def save_jsonl(dataset: Dataset, path, field_map: Mapping[str, str] | None = None) -> None:
    """Write a dataset back out as JSONL with the given field names."""
    fields = dict(DEFAULT_FIELD_MAP)
    if field_map:
        fields.update(field_map)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for s in dataset.samples:
            row = {
                fields["id"]: s.id,
                fields["text_a"]: s.text_a,
                fields["label"]: dataset.vocab.names[s.label],
            }
            if s.text_b is not None:
                row[fields["text_b"]] = s.text_b
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def _guess_format(path: Path) -> str:
    suffix = path.suffix.lower().lstrip(".")
    return {"jsonl": "jsonl", "json": "jsonl", "csv": "csv", "tsv": "tsv"}.get(suffix, "jsonl")


def _clean(value) -> str:
    if value is None:
        return ""
    return str(value).strip()


def _read_jsonl(path: Path):
    rows = []
    n_bad = 0
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                n_bad += 1
                continue
            if not isinstance(obj, dict):
                n_bad += 1
                continue
            rows.append((lineno, obj))
    return rows, n_bad


def _read_delimited(path: Path, delimiter: str, fields: Mapping[str, str]):
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f, delimiter=delimiter)
        if reader.fieldnames is None:
            raise ValueError(f"{path} has no header row")
        for required in ("text_a", "label"):
            if fields[required] not in reader.fieldnames:
                raise ValueError(
                    f"declared column {fields[required]!r} absent from {path} header {reader.fieldnames}"
                )
        rows = [(lineno, dict(row)) for lineno, row in enumerate(reader, start=2)]
    return rows, 0


def stratified_subsample(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    """Take round(fraction * class_count) samples per class, no duplicates.

    Deterministic given the seed. Output preserves the original sample
    order, so fraction 1.0 returns an identical dataset.
    """
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    rng = new_rng(seed)
    by_class: dict[int, list[int]] = {}
    for i, s in enumerate(dataset.samples):
        by_class.setdefault(s.label, []).append(i)

    keep: list[int] = []
    for label in sorted(by_class):
        idx = by_class[label]
        want = math.floor(fraction * len(idx) + 0.5)
        if want < 1:
            raise ValueError(
                f"fraction {fraction} keeps no samples of class "
                f"{dataset.vocab.names[label]!r} (count {len(idx)})"
            )
        order = rng.permutation(len(idx))[:want]
        keep.extend(idx[j] for j in order)

    keep.sort()
    return Dataset(
        samples=[dataset.samples[i] for i in keep],
        vocab=dataset.vocab,
        split_tag=dataset.split_tag,
    )


def split(
    dataset: Dataset, ratios: tuple[float, float, float], seed: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Stratified train/dev/test partition: disjoint and exhaustive.

    Per-class counts follow the largest-remainder rule; every class must
    land at least one sample in every split.
    """
    if len(ratios) != 3:
        raise ValueError("ratios must have exactly three entries")
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")

    rng = new_rng(seed)
    by_class: dict[int, list[int]] = {}
    for i, s in enumerate(dataset.samples):
        by_class.setdefault(s.label, []).append(i)

    parts: tuple[list[int], list[int], list[int]] = ([], [], [])
    for label in sorted(by_class):
        idx = by_class[label]
        counts = _largest_remainder(len(idx), ratios)
        if min(counts) < 1:
            raise ValueError(
                f"class {dataset.vocab.names[label]!r} has {len(idx)} samples, "
                f"too few to appear in all three splits"
            )
        order = rng.permutation(len(idx))
        shuffled = [idx[j] for j in order]
        lo = 0
        for part, c in zip(parts, counts):
            part.extend(shuffled[lo : lo + c])
            lo += c

    tags = ("train", "dev", "test")
    out = []
    for part, tag in zip(parts, tags):
        part.sort()
        out.append(
            Dataset(samples=[dataset.samples[i] for i in part], vocab=dataset.vocab, split_tag=tag)
        )
    return tuple(out)


def _largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    targets = [r * n for r in ratios]
    counts = [math.floor(t) for t in targets]
    remainders = sorted(
        range(len(ratios)), key=lambda i: (-(targets[i] - counts[i]), i)
    )
    for i in remainders[: n - sum(counts)]:
        counts[i] += 1
    return counts


def entropy_from_counts(counts: Sequence[int]) -> float:
    """Plug-in entropy of a count vector, in nats."""
    total = sum(counts)
    if total <= 0:
        raise ValueError("entropy of an empty distribution")
    h = 0.0
    for c in counts:
        if c > 0:
            p = c / total
            h -= p * math.log(p)
    return h


def label_entropy(dataset: Dataset) -> float:
    """Plug-in entropy of the dataset's label distribution, in nats."""
    if not dataset.samples:
        raise ValueError("label entropy of an empty dataset")
    return entropy_from_counts(dataset.class_counts())
