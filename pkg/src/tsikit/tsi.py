"""TSI computation, bound checks, and the analysis sweeps.

TSI is the difference of two dev-set cross-entropies, in nats:

    tsi = nll_control - nll_full

where the control model sees only shortcut features and the full model sees
the whole input. Both evaluations must come from the same dev set, enforced
by a content fingerprint. Values outside the theoretical range [0, H(Y)] are
reported raw and flagged, never clamped: a negative estimate usually means
the full model underfit, and silently hiding that would bury the signal.

The model-misfit terms that the subtraction leaves out are not computable
from data; their scale is measured empirically by the kl-scale harness in
``tsikit.synthetic``, which is the justification for reporting the plain
difference.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import corpus as corpus_mod
from . import features as features_mod
from . import model as model_mod
from . import shortcuts as shortcuts_mod
from .corpus import Dataset
from .features import HashingConfig
from .model import EvalResult, TrainConfig
from .shortcuts import FeatureSet, StopwordPolicy
from .util import derive_seed

BOUND_TOLERANCE = 1e-9

#: Published large-scale reference estimates (finetuned-transformer models
#: on the full benchmark datasets). Desk-scale runs from this package are
#: not expected to match them; they are shipped for orientation only.
REFERENCE_BENCHMARKS = {
    "mnli": {"acc_full": 0.85, "tsi_PS": 0.68, "tsi_PSO": 0.64},
    "imdb": {"acc_full": 0.92, "tsi_PS": 0.43},
    "yelp": {"acc_full": 0.97, "tsi_PS": 0.41},
    "qqp": {"acc_full": 0.89, "tsi_PS": 0.31, "tsi_PSO": 0.23},
}


@dataclass(frozen=True)
class Diagnostic:
    check: str  # negative_tsi | exceeds_h_y | exceeds_log_m
    magnitude: float
    message: str


def _bound_violations(tsi: float, h_y: float, m: int) -> list[Diagnostic]:
    out = []
    if tsi < -BOUND_TOLERANCE:
        out.append(
            Diagnostic("negative_tsi", -tsi, f"tsi={tsi:.6f} below 0 by {-tsi:.6f} nats")
        )
    if tsi > h_y + BOUND_TOLERANCE:
        out.append(
            Diagnostic(
                "exceeds_h_y", tsi - h_y, f"tsi={tsi:.6f} above h_y={h_y:.6f} by {tsi - h_y:.6f} nats"
            )
        )
    log_m = math.log(m)
    if h_y > log_m + BOUND_TOLERANCE:
        out.append(
            Diagnostic(
                "exceeds_log_m",
                h_y - log_m,
                f"h_y={h_y:.6f} above ln({m})={log_m:.6f} by {h_y - log_m:.6f} nats",
            )
        )
    return out


@dataclass(frozen=True)
class TsiReport:
    feature_set: str
    nll_control: float
    nll_full: float
    tsi: float
    h_y: float
    m: int
    n_train: int
    n_dev: int
    flags: dict

    def to_dict(self) -> dict:
        return {
            "feature_set": self.feature_set,
            "nll_control": self.nll_control,
            "nll_full": self.nll_full,
            "tsi": self.tsi,
            "h_y": self.h_y,
            "m": self.m,
            "n_train": self.n_train,
            "n_dev": self.n_dev,
            "flags": dict(self.flags),
        }


def compute_tsi(
    control_eval: EvalResult,
    full_eval: EvalResult,
    h_y: float,
    m: int,
    feature_set: FeatureSet | str,
    n_train: int = 0,
) -> TsiReport:
    """Subtract the two dev losses and attach bound flags.

    Both evaluations must cover the same dev set: sample counts must match,
    and when both carry a dataset fingerprint the fingerprints must agree.
    """
    if control_eval.n != full_eval.n:
        raise ValueError(
            f"control and full evals cover different dev sets: n={control_eval.n} vs {full_eval.n}"
        )
    if (
        control_eval.fingerprint is not None
        and full_eval.fingerprint is not None
        and control_eval.fingerprint != full_eval.fingerprint
    ):
        raise ValueError("control and full evals carry different dev-set fingerprints")
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")

    tsi = control_eval.nll_nats - full_eval.nll_nats
    violations = {d.check for d in _bound_violations(tsi, h_y, m)}
    return TsiReport(
        feature_set=str(feature_set),
        nll_control=control_eval.nll_nats,
        nll_full=full_eval.nll_nats,
        tsi=tsi,
        h_y=h_y,
        m=m,
        n_train=n_train,
        n_dev=control_eval.n,
        flags={
            "negative_tsi": "negative_tsi" in violations,
            "exceeds_h_y": "exceeds_h_y" in violations,
            "exceeds_log_m": "exceeds_log_m" in violations,
        },
    )


def validate_bounds(report: TsiReport) -> list[Diagnostic]:
    """One diagnostic per violated inequality in 0 <= tsi <= h_y <= ln m.

    Pure check: the report is never altered.
    """
    return _bound_violations(report.tsi, report.h_y, report.m)


def prior_control_eval(labels: Sequence[int], fingerprint: str | None = None) -> EvalResult:
    """The empty-control baseline: predict the label distribution itself.

    Its NLL equals the plug-in label entropy of the evaluated set and its
    accuracy is the modal class frequency.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise ValueError("empty label list")
    counts = np.bincount(labels)
    probs = counts / counts.sum()
    nz = probs[probs > 0]
    nll = float(-(nz * np.log(nz)).sum())
    return EvalResult(
        nll_nats=nll,
        accuracy=float(counts.max() / counts.sum()),
        n=int(len(labels)),
        fingerprint=fingerprint,
    )


@dataclass(frozen=True)
class TrendFit:
    slope: float
    intercept: float
    r_squared: float
    points: tuple[tuple[float, float], ...]


def acc_loss_trend(points: Sequence[tuple[float, float]]) -> TrendFit:
    """Ordinary least squares of accuracy on dev NLL."""
    pts = tuple((float(x), float(y)) for x, y in points)
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if len(set(xs.tolist())) < 2:
        raise ValueError("need at least 2 points with distinct nll values")
    x_mean, y_mean = xs.mean(), ys.mean()
    slope = float(((xs - x_mean) * (ys - y_mean)).sum() / ((xs - x_mean) ** 2).sum())
    intercept = float(y_mean - slope * x_mean)
    residuals = ys - (slope * xs + intercept)
    ss_res = float((residuals**2).sum())
    ss_tot = float(((ys - y_mean) ** 2).sum())
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return TrendFit(slope=slope, intercept=intercept, r_squared=max(0.0, min(1.0, r_squared)), points=pts)


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------


@dataclass
class PipelineResult:
    report: TsiReport
    control: model_mod.GridSearchResult
    full: model_mod.GridSearchResult
    prior_report: TsiReport


def _control_inputs(train_ds: Dataset, dev_ds: Dataset, feature_set: FeatureSet,
                    policy: StopwordPolicy | None):
    x_train, _ = shortcuts_mod.extract_matrix(train_ds.samples, feature_set, policy)
    x_dev, _ = shortcuts_mod.extract_matrix(dev_ds.samples, feature_set, policy)
    return x_train, x_dev


def run_tsi(
    train_ds: Dataset,
    dev_ds: Dataset,
    feature_set: FeatureSet,
    *,
    policy: StopwordPolicy | None = None,
    hashing: HashingConfig = HashingConfig(),
    control_grid: Sequence[tuple[int, ...]] = model_mod.DEFAULT_HIDDEN_GRID,
    control_config: TrainConfig = TrainConfig(batch_size=32),
    full_hidden: Sequence[tuple[int, ...]] = ((30,),),
    full_config: TrainConfig = TrainConfig(batch_size=64),
    seed: int = 0,
    full_result: model_mod.GridSearchResult | None = None,
    full_matrices=None,
) -> PipelineResult:
    """Extract, train control and full models, and difference their losses.

    ``full_result`` lets sweeps reuse one full model across feature sets,
    since the full loss does not depend on the shortcut choice.
    """
    if "O" in feature_set and not train_ds.is_pair:
        raise ValueError("overlap features requested on a single-text dataset")
    dev_fp = dev_ds.fingerprint()
    y_train = np.asarray(train_ds.labels())
    y_dev = np.asarray(dev_ds.labels())
    m = train_ds.vocab.m

    xc_train, xc_dev = _control_inputs(train_ds, dev_ds, feature_set, policy)
    control = model_mod.grid_search(
        xc_train, y_train, xc_dev, y_dev, m,
        hidden_specs=control_grid,
        base_config=replace(control_config, seed=derive_seed(seed, "control", str(feature_set))),
        fingerprint=dev_fp,
    )

    if full_result is None:
        if full_matrices is None:
            xf_train, _ = features_mod.featurize_matrix(train_ds.samples, hashing)
            xf_dev, _ = features_mod.featurize_matrix(dev_ds.samples, hashing)
        else:
            xf_train, xf_dev = full_matrices
        full_result = model_mod.grid_search(
            xf_train, y_train, xf_dev, y_dev, m,
            hidden_specs=full_hidden,
            base_config=replace(full_config, seed=derive_seed(seed, "full")),
            fingerprint=dev_fp,
        )

    h_y = corpus_mod.label_entropy(dev_ds)
    report = compute_tsi(
        control.eval_result, full_result.eval_result, h_y, m, feature_set, n_train=len(train_ds)
    )
    prior = compute_tsi(
        prior_control_eval(y_dev, fingerprint=dev_fp),
        full_result.eval_result,
        h_y,
        m,
        "none",
        n_train=len(train_ds),
    )
    return PipelineResult(report=report, control=control, full=full_result, prior_report=prior)


def shortcut_sweep(
    train_ds: Dataset,
    dev_ds: Dataset,
    feature_sets: Sequence[FeatureSet],
    **kwargs,
) -> tuple[list[TsiReport], list[PipelineResult]]:
    """One TSI report per feature set, sharing a single full model."""
    if not feature_sets:
        raise ValueError("feature_sets must be non-empty")
    reports: list[TsiReport] = []
    results: list[PipelineResult] = []
    full_result = kwargs.pop("full_result", None)
    for fs in feature_sets:
        res = run_tsi(train_ds, dev_ds, fs, full_result=full_result, **kwargs)
        full_result = res.full
        reports.append(res.report)
        results.append(res)
    return reports, results


@dataclass
class SizeSweepPoint:
    fraction: float
    seed: int
    n_train: int
    report: TsiReport
    full_acc: float


def _size_sweep_point(task: dict) -> SizeSweepPoint:
    control = model_mod.grid_search(
        task["xc_train"], task["y_train"], task["xc_dev"], task["y_dev"], task["m"],
        hidden_specs=task["control_grid"],
        base_config=task["control_config"],
        fingerprint=task["dev_fp"],
    )
    full = model_mod.grid_search(
        task["xf_train"], task["y_train"], task["xf_dev"], task["y_dev"], task["m"],
        hidden_specs=task["full_hidden"],
        base_config=task["full_config"],
        fingerprint=task["dev_fp"],
    )
    report = compute_tsi(
        control.eval_result, full.eval_result, task["h_y"], task["m"],
        task["feature_set"], n_train=len(task["y_train"]),
    )
    return SizeSweepPoint(
        fraction=task["fraction"],
        seed=task["seed"],
        n_train=len(task["y_train"]),
        report=report,
        full_acc=full.eval_result.accuracy,
    )


def size_sweep(
    train_ds: Dataset,
    dev_ds: Dataset,
    fractions: Sequence[float],
    seeds: Sequence[int],
    feature_set: FeatureSet,
    *,
    policy: StopwordPolicy | None = None,
    hashing: HashingConfig = HashingConfig(),
    control_grid: Sequence[tuple[int, ...]] = ((30,),),
    control_config: TrainConfig = TrainConfig(batch_size=32),
    full_hidden: Sequence[tuple[int, ...]] = ((30,),),
    full_config: TrainConfig = TrainConfig(batch_size=64),
    base_seed: int = 0,
    jobs: int = 1,
) -> list[SizeSweepPoint]:
    """Retrain both models on stratified subsamples; the dev set is fixed.

    Features are extracted once for the whole train set and subsampled by
    row, which is equivalent to featurizing the subsample (featurization is
    per-sample and deterministic). Each point carries its own derived seeds,
    so running with jobs > 1 gives results identical to serial execution.
    """
    for f in fractions:
        if not (0.0 < f <= 1.0):
            raise ValueError(f"fractions must lie in (0, 1], got {f}")
    dev_fp = dev_ds.fingerprint()
    y_train = np.asarray(train_ds.labels())
    y_dev = np.asarray(dev_ds.labels())
    m = train_ds.vocab.m
    h_y = corpus_mod.label_entropy(dev_ds)

    xc_train, xc_dev = _control_inputs(train_ds, dev_ds, feature_set, policy)
    xf_train, _ = features_mod.featurize_matrix(train_ds.samples, hashing)
    xf_dev, _ = features_mod.featurize_matrix(dev_ds.samples, hashing)
    row_of = {sid: i for i, sid in enumerate(train_ds.ids())}

    tasks = []
    for fraction in fractions:
        for seed in seeds:
            sub_seed = derive_seed(base_seed, "subsample", fraction, seed)
            sub = corpus_mod.stratified_subsample(train_ds, fraction, sub_seed)
            rows = np.array([row_of[sid] for sid in sub.ids()])
            tasks.append(
                {
                    "fraction": fraction,
                    "seed": seed,
                    "xc_train": xc_train[rows],
                    "xf_train": xf_train[rows],
                    "y_train": y_train[rows],
                    "xc_dev": xc_dev,
                    "xf_dev": xf_dev,
                    "y_dev": y_dev,
                    "m": m,
                    "h_y": h_y,
                    "dev_fp": dev_fp,
                    "feature_set": str(feature_set),
                    "control_grid": tuple(tuple(h) for h in control_grid),
                    "full_hidden": tuple(tuple(h) for h in full_hidden),
                    "control_config": replace(
                        control_config, seed=derive_seed(base_seed, "control", fraction, seed)
                    ),
                    "full_config": replace(
                        full_config, seed=derive_seed(base_seed, "full", fraction, seed)
                    ),
                }
            )

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_size_sweep_point, tasks))
    return [_size_sweep_point(t) for t in tasks]
