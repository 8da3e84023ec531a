"""Synthetic datasets with known entropies.

Two families:

* Bernoulli toys: features are m independent Bernoulli(p_x) bits and the
  label is ``g(x) + noise`` with ``g`` either the bit sum or the bit AND and
  noise Bernoulli(p_y). Because the noise is independent of the input,
  H(Y|X) is exactly the binary entropy of p_y, which makes these datasets an
  oracle for how far a trained classifier's dev loss sits from the true
  conditional entropy (the kl-scale experiment).

* A planted-shortcut text corpus: the label is the XOR of a punctuation-rate
  bit and a content-word bit, plus label noise. The punctuation rate is a
  declared shortcut, the content word is not, so control-vs-full sweeps have
  a known ordering to reproduce.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from math import comb
from typing import Sequence

import numpy as np

from . import model as model_mod
from .corpus import Dataset, LabelVocab, TextSample
from .model import TrainConfig, TrainingDivergedError
from .util import derive_seed, new_rng

G_KINDS = ("sum", "and")


def binary_entropy(p: float) -> float:
    """Entropy of Bernoulli(p) in nats."""
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log(p) - (1.0 - p) * math.log(1.0 - p)


@dataclass(frozen=True)
class ToySpec:
    m: int  # number of Bernoulli input features
    p_x: float
    p_y: float
    g_kind: str
    n_train: int = 20000
    n_dev: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if not (0.0 < self.p_x < 1.0 and 0.0 < self.p_y < 1.0):
            raise ValueError("p_x and p_y must lie strictly in (0, 1)")
        if self.g_kind not in G_KINDS:
            raise ValueError(f"g_kind must be one of {G_KINDS}, got {self.g_kind!r}")
        if self.n_train < 1 or self.n_dev < 1:
            raise ValueError("n_train and n_dev must be positive")

    @property
    def n_classes(self) -> int:
        # sum: g in 0..m, plus noise -> 0..m+1; and: g in {0,1} -> {0,1,2}
        return self.m + 2 if self.g_kind == "sum" else 3


@dataclass
class ToyDataset:
    spec: ToySpec
    x_train: np.ndarray
    y_train: np.ndarray
    x_dev: np.ndarray
    y_dev: np.ndarray


def _apply_g(x: np.ndarray, g_kind: str) -> np.ndarray:
    if g_kind == "sum":
        return x.sum(axis=1).astype(np.int64)
    return np.all(x == 1, axis=1).astype(np.int64)


def generate(spec: ToySpec) -> ToyDataset:
    """Draw train and dev portions from one seeded stream."""
    rng = new_rng(spec.seed)
    total = spec.n_train + spec.n_dev
    x = (rng.random((total, spec.m)) < spec.p_x).astype(np.float64)
    noise = (rng.random(total) < spec.p_y).astype(np.int64)
    y = _apply_g(x, spec.g_kind) + noise
    return ToyDataset(
        spec=spec,
        x_train=x[: spec.n_train],
        y_train=y[: spec.n_train],
        x_dev=x[spec.n_train :],
        y_dev=y[spec.n_train :],
    )


def exact_conditional_entropy(spec: ToySpec) -> float:
    """H(Y|X) in nats: the label given the input is g(x) plus independent
    Bernoulli(p_y) noise, so only the noise entropy remains. Independent of
    m, p_x and g_kind."""
    return binary_entropy(spec.p_y)


def label_distribution(spec: ToySpec) -> np.ndarray:
    """Exact pmf of the label over its full alphabet."""
    if spec.g_kind == "sum":
        g_pmf = np.array(
            [comb(spec.m, s) * spec.p_x**s * (1 - spec.p_x) ** (spec.m - s) for s in range(spec.m + 1)]
        )
    else:
        p1 = spec.p_x**spec.m
        g_pmf = np.array([1 - p1, p1])
    pmf = np.zeros(len(g_pmf) + 1)
    pmf[:-1] += g_pmf * (1 - spec.p_y)
    pmf[1:] += g_pmf * spec.p_y
    return pmf


def exact_label_entropy(spec: ToySpec) -> float:
    """H(Y) in nats from the closed-form label distribution."""
    pmf = label_distribution(spec)
    nz = pmf[pmf > 0]
    return float(-(nz * np.log(nz)).sum())


@dataclass
class KlScaleResult:
    spec: ToySpec
    status: str  # trained | diverged
    nll_dev: float
    h_y_given_x: float

    @property
    def abs_gap(self) -> float:
        return abs(self.nll_dev - self.h_y_given_x)


def default_grid(
    m_values: Sequence[int] = range(2, 11),
    p_values: Sequence[float] = tuple(round(0.1 * i, 1) for i in range(1, 10)),
    g_kinds: Sequence[str] = G_KINDS,
    n_train: int = 20000,
    n_dev: int = 10000,
) -> list[ToySpec]:
    """The documented sweep grid: 9 x 9 x 9 x 2 = 1458 configurations."""
    return [
        ToySpec(m=m, p_x=px, p_y=py, g_kind=g, n_train=n_train, n_dev=n_dev)
        for m in m_values
        for px in p_values
        for py in p_values
        for g in g_kinds
    ]


def _run_kl_config(args: tuple[ToySpec, TrainConfig]) -> KlScaleResult:
    spec, config = args
    data = generate(spec)
    target = exact_conditional_entropy(spec)
    try:
        result = model_mod.train(
            data.x_train, data.y_train, data.x_dev, data.y_dev, spec.n_classes, config
        )
    except TrainingDivergedError:
        return KlScaleResult(spec=spec, status="diverged", nll_dev=math.nan, h_y_given_x=target)
    ev = model_mod.evaluate(result.params, data.x_dev, data.y_dev)
    return KlScaleResult(spec=spec, status="trained", nll_dev=ev.nll_nats, h_y_given_x=target)


HIST_BIN_WIDTH = 0.005
HIST_MAX = 0.1


def gap_histogram(gaps: Sequence[float]) -> dict:
    """Fixed-width 0.005 bins over [0, 0.1] plus an overflow bin."""
    edges = [round(i * HIST_BIN_WIDTH, 3) for i in range(int(HIST_MAX / HIST_BIN_WIDTH) + 1)]
    counts = [0] * (len(edges) - 1)
    overflow = 0
    for g in gaps:
        if g >= HIST_MAX:
            overflow += 1
        else:
            counts[int(g / HIST_BIN_WIDTH)] += 1
    return {"edges": edges, "counts": counts, "overflow": overflow}


def kl_scale_experiment(
    grid: Sequence[ToySpec] | None = None,
    train_config: TrainConfig | None = None,
    base_seed: int = 0,
    thresholds: Sequence[float] = (0.04, 0.05),
    jobs: int = 1,
) -> tuple[list[KlScaleResult], dict]:
    """Train one classifier per grid point and measure |dev NLL - H(Y|X)|.

    Per-point seeds are derived from the base seed and the point's own
    parameters, so results do not depend on execution order or job count.
    """
    if grid is None:
        grid = default_grid()
    if not grid:
        raise ValueError("grid must be non-empty")
    base = train_config or TrainConfig(hidden_spec=(30,))

    tasks = []
    for spec in grid:
        seed = derive_seed(base_seed, "synth-kl", spec.m, spec.p_x, spec.p_y, spec.g_kind)
        tasks.append((replace(spec, seed=seed), replace(base, seed=seed)))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_kl_config, tasks, chunksize=8))
    else:
        results = [_run_kl_config(t) for t in tasks]

    gaps = sorted(r.abs_gap for r in results if r.status == "trained")
    n_failed = sum(1 for r in results if r.status != "trained")
    summary = {
        "n_configs": len(results),
        "n_failed": n_failed,
        "n_trained": len(gaps),
        "median_gap": float(np.median(gaps)) if gaps else math.nan,
        "max_gap": max(gaps) if gaps else math.nan,
        "fraction_within": {
            repr(t): (sum(1 for g in gaps if g < t) / len(gaps) if gaps else math.nan)
            for t in thresholds
        },
        "histogram": {
            kind: gap_histogram(
                [r.abs_gap for r in results if r.status == "trained" and r.spec.g_kind == kind]
            )
            for kind in G_KINDS
        },
    }
    return results, summary


# ---------------------------------------------------------------------------
# Planted-shortcut text corpus
# ---------------------------------------------------------------------------

FILLER_STOPWORDS = ("the", "and", "of", "to", "a", "in", "it", "was", "for", "on")
FILLER_CONTENT = (
    "river", "mountain", "copper", "engine", "garden", "window", "bottle",
    "forest", "market", "signal", "paper", "stone", "cloud", "harbor", "tunnel",
)
SIGNAL_ON = ("zephyr", "quasar", "obelisk")
SIGNAL_OFF = ("marble", "lantern", "orchard")
# disjoint mark pools keep the punctuation bit easy for the full model to
# read while the rate split (3 marks vs 1) stays exact for the control
HIGH_PUNCT_POOL = ("!", "?")
LOW_PUNCT_POOL = (".", ",")


@dataclass(frozen=True)
class PlantedSpec:
    n_train: int = 20000
    n_dev: int = 5000
    noise: float = 0.1
    p_content: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.noise < 0.5):
            raise ValueError("noise must lie in [0, 0.5)")
        if not (0.0 < self.p_content < 1.0):
            raise ValueError("p_content must lie in (0, 1)")


def _planted_sample(rng: np.random.Generator, sid: str, noise: float, p_content: float) -> TextSample:
    filler = FILLER_STOPWORDS + FILLER_CONTENT
    high_punct = rng.random() < 0.5
    content_on = rng.random() < p_content
    flip = rng.random() < noise
    label = int(high_punct) ^ int(content_on) ^ int(flip)

    k = int(rng.integers(8, 15))
    words = [filler[j] for j in rng.integers(0, len(filler), size=k)]
    signal_pool = SIGNAL_ON if content_on else SIGNAL_OFF
    signal = signal_pool[int(rng.integers(0, len(signal_pool)))]
    words.insert(int(rng.integers(0, k + 1)), signal)

    # High-punctuation texts carry 3 marks, low 1; marks are attached to
    # distinct words so the tokenizer sees them as separate tokens.
    n_punct = 3 if high_punct else 1
    pool = HIGH_PUNCT_POOL if high_punct else LOW_PUNCT_POOL
    positions = rng.choice(len(words), size=n_punct, replace=False)
    for pos in positions:
        words[pos] = words[pos] + pool[int(rng.integers(0, len(pool)))]
    return TextSample(id=sid, text_a=" ".join(words), label=label)


def make_planted_dataset(spec: PlantedSpec = PlantedSpec()) -> tuple[Dataset, Dataset]:
    """Generate the planted-shortcut corpus as (train, dev) datasets.

    Labels: XOR of (punctuation rate above the corpus median) and the
    presence of an "on" signal word, with ``noise`` probability of a flip.
    Stopword usage is independent of the label by construction.
    """
    rng = new_rng(spec.seed)
    vocab = LabelVocab(("neg", "pos"))
    train = [
        _planted_sample(rng, f"train{i:06d}", spec.noise, spec.p_content)
        for i in range(spec.n_train)
    ]
    dev = [
        _planted_sample(rng, f"dev{i:06d}", spec.noise, spec.p_content)
        for i in range(spec.n_dev)
    ]
    return (
        Dataset(samples=train, vocab=vocab, split_tag="train"),
        Dataset(samples=dev, vocab=vocab, split_tag="dev"),
    )


def planted_expected_entropies(spec: PlantedSpec = PlantedSpec()) -> dict:
    """Closed-form targets for the planted corpus (population values)."""
    q = spec.noise
    b = spec.p_content
    p_y1_given_high = (1 - q) * (1 - b) + q * b
    return {
        "h_y": math.log(2.0),
        "h_y_given_punct": binary_entropy(p_y1_given_high),
        "h_y_given_all": binary_entropy(q),
    }
