"""Shared plumbing: deterministic seeding, fingerprints, report writers.

All randomness in the package flows through ``new_rng`` (numpy's PCG64) so
that every result is reproducible from a single master seed. Stage seeds are
derived with ``derive_seed``, a keyed blake2b hash, which makes parallel
sweep points independent of execution order.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Invalid configuration or input data; maps to CLI exit code 2."""


class StageError(RuntimeError):
    """A pipeline stage failed at runtime; maps to CLI exit code 1."""

    def __init__(self, stage: str, cause: str):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {cause}")


class CacheMismatchError(StageError):
    """A cached artifact carries a different config fingerprint."""

    def __init__(self, path, expected: str, found: str):
        super().__init__(
            "cache",
            f"{path} was produced under config {found[:12]}, expected {expected[:12]}; refusing to mix artifacts",
        )


def derive_seed(master: int, *tags) -> int:
    """Derive a child seed from a master seed and a tag path.

    The derivation is ``blake2b(master|tag1|tag2|...)`` truncated to 63 bits,
    so it is stable across platforms and Python versions.
    """
    key = "|".join([str(int(master))] + [str(t) for t in tags])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def new_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; the single RNG used throughout the package."""
    return np.random.Generator(np.random.PCG64(seed))


def fingerprint_dataset(ids: Sequence[str], labels: Sequence[int]) -> str:
    """Content fingerprint of a labeled dataset.

    sha256 over ``id\\tlabel`` lines sorted by id, so sample order does not
    matter but any id or label change does.
    """
    lines = sorted(f"{i}\t{l}" for i, l in zip(ids, labels))
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, fixed separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def fingerprint_config(config: Mapping) -> str:
    """sha256 of the canonical JSON form of a config mapping."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_jsonl(path, rows: Iterable[Mapping]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for row in rows:
            f.write(canonical_json(row) + "\n")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], fingerprint: str | None = None) -> None:
    """Write a CSV report. A fingerprint, when given, is embedded as a
    leading ``#`` comment line that ``read_csv_rows`` skips."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        if fingerprint is not None:
            f.write(f"# config_fingerprint={fingerprint}\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_csv_cell(v) for v in row) + "\n")


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(float(v))
    s = str(v)
    if "," in s or '"' in s or "\n" in s:
        s = '"' + s.replace('"', '""') + '"'
    return s


def read_csv_rows(path) -> tuple[list[str], list[list[str]], str | None]:
    """Read a CSV written by ``write_csv``: (header, rows, fingerprint)."""
    import csv as _csv

    fingerprint = None
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        first = f.readline()
        if first.startswith("# config_fingerprint="):
            fingerprint = first.strip().split("=", 1)[1]
            first = f.readline()
        header = next(_csv.reader([first]))
        rows = list(_csv.reader(f))
    return header, rows, fingerprint
