"""Nonparametric entropy and mutual-information estimators.

These are the cross-check estimators: a k-nearest-neighbor differential
entropy estimator for continuous vectors, a plug-in entropy for discrete
labels, and a mixed continuous-discrete MI estimator, combined into a Monte
Carlo comparison against the cross-entropy training method.

Continuous estimator (k-th neighbor distance r_i under the max-norm):

    H ~= psi(n) - psi(k) + d * mean(ln(2 r_i))

Mixed MI (r_i = distance to the k-th neighbor inside the point's own class,
m_i = neighbors within r_i in the full sample):

    I ~= psi(n) - mean(psi(n_{y_i})) + psi(k) - mean(psi(m_i))

Exact ties break the derivations, so a deterministic seeded jitter of
amplitude 1e-10 is added before any neighbor search. Points are first
brought into a canonical (lexicographic) order, so the estimate is bitwise
invariant under permuting the input.

Neighbor search is exact: a sort-based scan in one dimension, otherwise a
space-partitioning tree (``tree=True``, O(n log n)-ish) or brute force
(``tree=False``, O(n^2) time, O(n) memory); both give identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

from . import corpus as corpus_mod
from . import model as model_mod
from . import shortcuts as shortcuts_mod
from .corpus import Dataset
from .model import TrainConfig
from .shortcuts import FeatureSet, StopwordPolicy
from .util import derive_seed, new_rng

JITTER = 1e-10
ESTIMATORS = ("kl_continuous", "plugin_discrete", "mixed_mi", "mixed_conditional")


@dataclass(frozen=True)
class EntropyEstimate:
    value_nats: float
    k: int
    n: int
    estimator: str
    flag: bool = False  # estimate escaped its theoretical range

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.n <= self.k:
            raise ValueError(f"need n > k, got n={self.n}, k={self.k}")
        if self.estimator == "plugin_discrete" and self.value_nats < 0:
            raise ValueError("plug-in entropy cannot be negative")


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"points must be 1-D or 2-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("points must be finite")
    return x


def _canonical_order(x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    keys = [x[:, j] for j in range(x.shape[1] - 1, -1, -1)]
    if y is not None:
        keys.insert(0, y)
    return np.lexsort(tuple(keys))


def _kth_distances_1d(values: np.ndarray, k: int) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    s = values[order]
    n = len(s)
    cand = np.full((n, 2 * k), np.inf)
    for j in range(1, k + 1):
        cand[j:, j - 1] = s[j:] - s[:-j]
        cand[:-j, k + j - 1] = s[j:] - s[:-j]
    r_sorted = np.partition(cand, k - 1, axis=1)[:, k - 1]
    r = np.empty(n)
    r[order] = r_sorted
    return r


def _kth_distances_brute(x: np.ndarray, k: int, chunk: int = 256) -> np.ndarray:
    n, d = x.shape
    r = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        dist = np.abs(x[lo:hi, None, 0] - x[None, :, 0])
        for j in range(1, d):
            np.maximum(dist, np.abs(x[lo:hi, None, j] - x[None, :, j]), out=dist)
        # self sits at distance 0, so the k-th neighbor is order statistic k
        r[lo:hi] = np.partition(dist, k, axis=1)[:, k]
    return r


def _kth_distances(x: np.ndarray, k: int, tree: bool) -> np.ndarray:
    if x.shape[1] == 1:
        return _kth_distances_1d(x[:, 0], k)
    if tree:
        return cKDTree(x).query(x, k=k + 1, p=np.inf)[0][:, k]
    return _kth_distances_brute(x, k)


def _count_within(x: np.ndarray, radii: np.ndarray, tree: bool, chunk: int = 256) -> np.ndarray:
    """Number of OTHER points within (inclusive) each point's radius."""
    if tree:
        counts = cKDTree(x).query_ball_point(x, radii, p=np.inf, return_length=True)
        return np.asarray(counts, dtype=np.int64) - 1
    n, d = x.shape
    out = np.empty(n, dtype=np.int64)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        dist = np.abs(x[lo:hi, None, 0] - x[None, :, 0])
        for j in range(1, d):
            np.maximum(dist, np.abs(x[lo:hi, None, j] - x[None, :, j]), out=dist)
        out[lo:hi] = (dist <= radii[lo:hi, None]).sum(axis=1) - 1
    return out


def kl_entropy(points, k: int = 3, seed: int = 0, tree: bool = True) -> EntropyEstimate:
    """Differential entropy of continuous vectors, in nats.

    Requires n > k and distinct points after jitter; a zero k-th neighbor
    distance is an error rather than a silent -inf.
    """
    x = _as_points(points)
    n, d = x.shape
    if n <= k:
        raise ValueError(f"need more than k={k} points, got {n}")
    x = x[_canonical_order(x)]
    x = x + new_rng(seed).uniform(0.0, JITTER, size=x.shape)
    r = _kth_distances(x, k, tree)
    if np.any(r <= 0.0):
        raise ValueError("zero k-th neighbor distance survived jitter; duplicate-heavy input")
    value = float(digamma(n) - digamma(k) + d * np.mean(np.log(2.0 * r)))
    return EntropyEstimate(value_nats=value, k=k, n=n, estimator="kl_continuous")


def plugin_discrete(labels) -> EntropyEstimate:
    """Plug-in entropy of a discrete label sequence, in nats."""
    labels = np.asarray(labels)
    n = len(labels)
    if n < 2:
        raise ValueError("need at least 2 labels")
    _, counts = np.unique(labels, return_counts=True)
    probs = counts / n
    value = float(-(probs * np.log(probs)).sum())
    return EntropyEstimate(value_nats=value, k=1, n=n, estimator="plugin_discrete")


def mixed_mi(x, y, k: int = 3, seed: int = 0, tree: bool = True) -> EntropyEstimate:
    """MI between continuous vectors and discrete labels, in nats.

    Raw value, no clipping at zero: small negative estimates are real
    estimator behavior and the comparison harness wants to see them.
    """
    xp = _as_points(x)
    y = np.asarray(y)
    n = xp.shape[0]
    if len(y) != n:
        raise ValueError("x and y lengths differ")
    classes, inverse, counts = np.unique(y, return_inverse=True, return_counts=True)
    if counts.min() <= k:
        small = classes[counts.argmin()]
        raise ValueError(f"class {small!r} has {counts.min()} members, need more than k={k}")

    order = _canonical_order(xp, inverse)
    xp = xp[order]
    inverse = inverse[order]
    xp = xp + new_rng(seed).uniform(0.0, JITTER, size=xp.shape)

    radii = np.empty(n)
    for c in range(len(classes)):
        idx = np.flatnonzero(inverse == c)
        radii[idx] = _kth_distances(xp[idx], k, tree)
    m_counts = _count_within(xp, radii, tree)

    value = float(
        digamma(n) - np.mean(digamma(counts[inverse])) + digamma(k) - np.mean(digamma(m_counts))
    )
    return EntropyEstimate(value_nats=value, k=k, n=n, estimator="mixed_mi")


def mixed_conditional(x, y, k: int = 3, seed: int = 0, tree: bool = True) -> EntropyEstimate:
    """H(Y|X) as plug-in H(Y) minus the mixed MI estimate.

    Can land outside [0, ln(#classes)] when the MI estimator overshoots;
    such values are reported raw with the flag set.
    """
    h_y = plugin_discrete(y)
    mi = mixed_mi(x, y, k=k, seed=seed, tree=tree)
    value = h_y.value_nats - mi.value_nats
    n_classes = len(np.unique(np.asarray(y)))
    flagged = value < -1e-12 or value > math.log(n_classes) + 1e-9
    return EntropyEstimate(value_nats=value, k=k, n=mi.n, estimator="mixed_conditional", flag=flagged)


def mc_compare(
    dataset: Dataset,
    feature_set: FeatureSet,
    subset_size: int,
    seeds: Sequence[int],
    k: int = 3,
    *,
    policy: StopwordPolicy | None = None,
    control_config: TrainConfig = TrainConfig(hidden_spec=(30,)),
    control_train_frac: float = 0.8,
    x_matrix=None,
    x_dim_cap: int = 16,
    base_seed: int = 0,
    tree: bool = True,
) -> tuple[list[dict], dict]:
    """Monte Carlo comparison of kNN conditional entropy vs control loss.

    Per seed: draw a stratified subset, estimate H(Y|X_s) with the mixed
    kNN estimator on its shortcut vectors, and train a control classifier
    on the same subset (80/20 internal split) for the cross-entropy figure.
    The full-input side is only estimated when its dimension is at most
    ``x_dim_cap``; beyond that the kNN estimate is known-unreliable and the
    column is marked ``n/a``.
    """
    if subset_size > len(dataset):
        raise ValueError(f"subset_size {subset_size} exceeds dataset size {len(dataset)}")
    if subset_size < 2:
        raise ValueError("subset_size must be at least 2")

    x_side = "not_provided"
    if x_matrix is not None:
        x_side = "ok" if x_matrix.shape[1] <= x_dim_cap else f"not_applicable (d={x_matrix.shape[1]} > cap {x_dim_cap})"
    row_of = {sid: i for i, sid in enumerate(dataset.ids())}

    rows: list[dict] = []
    for seed in seeds:
        frac = subset_size / len(dataset)
        sub = corpus_mod.stratified_subsample(dataset, frac, derive_seed(base_seed, "mc-sub", seed))
        xs, _ = shortcuts_mod.extract_matrix(sub.samples, feature_set, policy)
        y = np.asarray(sub.labels())
        h_y = plugin_discrete(y).value_nats
        cond = mixed_conditional(xs, y, k=k, seed=derive_seed(base_seed, "mc-jitter", seed), tree=tree)

        train_part = corpus_mod.stratified_subsample(
            sub, control_train_frac, derive_seed(base_seed, "mc-train", seed)
        )
        train_ids = set(train_part.ids())
        tr = np.array([i for i, sid in enumerate(sub.ids()) if sid in train_ids])
        ev = np.array([i for i, sid in enumerate(sub.ids()) if sid not in train_ids])
        cfg = replace(
            control_config,
            seed=derive_seed(base_seed, "mc-model", seed),
            batch_size=min(control_config.batch_size, len(tr)),
        )
        trained = model_mod.train(xs[tr], y[tr], xs[ev], y[ev], dataset.vocab.m, cfg)
        nll_control = model_mod.evaluate(trained.params, xs[ev], y[ev]).nll_nats

        row = {
            "seed": seed,
            "n": len(sub),
            "k": k,
            "h_y": h_y,
            "h_y_given_xs_knn": cond.value_nats,
            "nll_control": nll_control,
            "gap": cond.value_nats - nll_control,
            "negative_flag": bool(cond.value_nats < 0),
        }
        if x_side == "ok":
            sub_rows = np.array([row_of[sid] for sid in sub.ids()])
            cond_x = mixed_conditional(
                x_matrix[sub_rows], y, k=k, seed=derive_seed(base_seed, "mc-jitter-x", seed), tree=tree
            )
            row["h_y_given_x_knn"] = cond_x.value_nats
        else:
            row["h_y_given_x_knn"] = "n/a"
        rows.append(row)

    knn_vals = np.array([r["h_y_given_xs_knn"] for r in rows])
    gaps = np.array([r["gap"] for r in rows])
    summary = {
        "n_seeds": len(rows),
        "k": k,
        "subset_size": subset_size,
        "mean_h_y_given_xs_knn": float(knn_vals.mean()),
        "sd_h_y_given_xs_knn": float(knn_vals.std(ddof=1)) if len(rows) > 1 else 0.0,
        "mean_gap": float(gaps.mean()),
        "mean_abs_gap": float(np.abs(gaps).mean()),
        "n_negative": int(sum(r["negative_flag"] for r in rows)),
        "x_side": x_side,
    }
    return rows, summary
