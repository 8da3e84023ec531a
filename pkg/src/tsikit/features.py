"""Full-input featurization: a deterministic hashed bag of 1-2 grams.

Token n-grams are hashed with seeded 64-bit FNV-1a into a fixed index space
and the resulting counts are L2-normalized. FNV-1a is fixed by name so
vectors are bit-reproducible across platforms; seeding XORs the seed into
the standard offset basis. Reference values (seed 0):

    fnv1a_64(b"")       == 0xcbf29ce484222325
    fnv1a_64(b"a")      == 0xaf63dc4c8601ec8c
    fnv1a_64(b"foobar") == 0x85944171f73967e8

Sentence pairs are joined with a reserved separator token before n-gram
extraction, so bigrams crossing the boundary make pair order matter. The
separator must contain an uppercase letter, which the lowercasing tokenizer
can never emit, so it cannot collide with a real token.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .corpus import TextSample, tokenize
from .util import MASK64

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3


def fnv1a_64(data: bytes, seed: int = 0) -> int:
    """Seeded FNV-1a 64-bit hash. seed=0 is the classic unseeded variant."""
    h = FNV64_OFFSET ^ (seed & MASK64)
    for b in data:
        h ^= b
        h = (h * FNV64_PRIME) & MASK64
    return h


@dataclass(frozen=True)
class HashingConfig:
    dims: int = 2**18
    ngram_orders: tuple[int, ...] = (1, 2)
    hash_seed: int = 0
    pair_separator: str = "<SEP>"

    def __post_init__(self):
        if self.dims < 2:
            raise ValueError(f"dims must be >= 2, got {self.dims}")
        orders = tuple(sorted(set(self.ngram_orders)))
        if not orders or any(o not in (1, 2) for o in orders):
            raise ValueError(f"ngram_orders must be a non-empty subset of (1, 2), got {self.ngram_orders}")
        object.__setattr__(self, "ngram_orders", orders)
        if not any("A" <= ch <= "Z" for ch in self.pair_separator):
            raise ValueError(
                "pair_separator needs an uppercase letter so it cannot collide with a token"
            )

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "ngram_orders": list(self.ngram_orders),
            "hash_seed": self.hash_seed,
            "pair_separator": self.pair_separator,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HashingConfig":
        known = {k: d[k] for k in ("dims", "ngram_orders", "hash_seed", "pair_separator") if k in d}
        if "ngram_orders" in known:
            known["ngram_orders"] = tuple(known["ngram_orders"])
        return cls(**known)


@dataclass(frozen=True)
class SparseVector:
    """L2-normalized hashed counts: sorted unique indices, positive values."""

    indices: tuple[int, ...]
    values: tuple[float, ...]
    dims: int
    warning: bool = False

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values lengths differ")
        if any(not (0 <= i < self.dims) for i in self.indices):
            raise ValueError("index out of range")
        if any(self.indices[i] >= self.indices[i + 1] for i in range(len(self.indices) - 1)):
            raise ValueError("indices must be strictly increasing")
        if any(not np.isfinite(v) or v <= 0 for v in self.values):
            raise ValueError("values must be finite and positive")


def _ngram_keys(tokens: list[str], orders: tuple[int, ...]):
    # Tokens never contain whitespace, so a space join is unambiguous.
    if 1 in orders:
        yield from tokens
    if 2 in orders:
        for a, b in zip(tokens, tokens[1:]):
            yield a + " " + b


def _sample_tokens(sample: TextSample, config: HashingConfig) -> list[str]:
    tokens = tokenize(sample.text_a)
    if sample.text_b is not None:
        tokens = tokens + [config.pair_separator] + tokenize(sample.text_b)
    return tokens


def _hash_counts(tokens: list[str], config: HashingConfig, cache: dict) -> dict[int, int]:
    counts: dict[int, int] = {}
    for key in _ngram_keys(tokens, config.ngram_orders):
        idx = cache.get(key)
        if idx is None:
            idx = fnv1a_64(key.encode("utf-8"), config.hash_seed) % config.dims
            cache[key] = idx
        counts[idx] = counts.get(idx, 0) + 1
    return counts


def featurize(sample: TextSample, config: HashingConfig) -> SparseVector:
    """Hash a sample's n-grams into an L2-normalized sparse vector.

    An untokenizable sample yields the zero vector with the warning flag.
    """
    tokens = _sample_tokens(sample, config)
    if not tokens:
        return SparseVector(indices=(), values=(), dims=config.dims, warning=True)
    counts = _hash_counts(tokens, config, {})
    indices = tuple(sorted(counts))
    raw = np.array([counts[i] for i in indices], dtype=np.float64)
    norm = float(np.sqrt(np.sum(raw * raw)))
    return SparseVector(indices=indices, values=tuple(raw / norm), dims=config.dims)


def featurize_matrix(samples, config: HashingConfig) -> tuple[sparse.csr_array, list[bool]]:
    """Featurize many samples into one CSR matrix (rows aligned to input)."""
    cache: dict[str, int] = {}
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    warnings: list[bool] = []
    for sample in samples:
        tokens = _sample_tokens(sample, config)
        warnings.append(not tokens)
        if tokens:
            counts = _hash_counts(tokens, config, cache)
            cols = sorted(counts)
            raw = np.array([counts[c] for c in cols], dtype=np.float64)
            raw /= np.sqrt(np.sum(raw * raw))
            indices.extend(cols)
            data.extend(raw)
        indptr.append(len(indices))
    matrix = sparse.csr_array(
        (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(warnings), config.dims),
    )
    return matrix, warnings


SPARSE_MAGIC = "# tsikit-sparse v1"


def save_sparse(path, ids, matrix: sparse.csr_array, config: HashingConfig) -> None:
    """Cache featurized samples: header with dims and seed, then one
    ``id<TAB>index:value ...`` line per sample."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = matrix.shape[0]
    if len(ids) != n:
        raise ValueError("ids and matrix row count differ")
    orders = ",".join(str(o) for o in config.ngram_orders)
    with path.open("w", encoding="utf-8") as f:
        f.write(
            f"{SPARSE_MAGIC} dims={config.dims} hash_seed={config.hash_seed} "
            f"ngram_orders={orders} n={n}\n"
        )
        csr = matrix.tocsr()
        for row, sid in enumerate(ids):
            lo, hi = csr.indptr[row], csr.indptr[row + 1]
            pairs = " ".join(
                f"{int(i)}:{float(v)!r}" for i, v in zip(csr.indices[lo:hi], csr.data[lo:hi])
            )
            f.write(f"{sid}\t{pairs}\n")


def load_sparse(path) -> tuple[list[str], sparse.csr_array, dict]:
    """Load a cached sparse matrix; returns (ids, matrix, header fields)."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if not header.startswith(SPARSE_MAGIC):
            raise ValueError(f"{path} is not a tsikit sparse cache")
        meta = dict(kv.split("=", 1) for kv in header[len(SPARSE_MAGIC) :].split())
        dims = int(meta["dims"])
        ids = []
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            sid, _, rest = line.partition("\t")
            ids.append(sid)
            for pair in rest.split():
                i, _, v = pair.partition(":")
                indices.append(int(i))
                data.append(float(v))
            indptr.append(len(indices))
    matrix = sparse.csr_array(
        (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(ids), dims),
    )
    return ids, matrix, meta
