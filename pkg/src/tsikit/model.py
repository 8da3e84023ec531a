"""From-scratch multilayer perceptron with softmax cross-entropy and Adam.

One trainer serves both classifiers: the control model on dense shortcut
vectors and the full-input model on sparse hashed features (sparse input is
supported for the first layer only; everything after is dense). Losses are
mean negative log-likelihood per sample in nats. Training is single-threaded
and deterministic given the config seed.

Checkpoint layout (row-major float64 throughout): 8 magic bytes
``TSIMLP01``, int64 layer count L, int64 sizes[L+1], then per layer the
weight matrix W (fan_in x fan_out) followed by the bias vector. A sidecar
``<path>.meta.json`` carries the config and seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse

from .util import new_rng

CHECKPOINT_MAGIC = b"TSIMLP01"

#: Hidden layer sizes searched for the control model.
DEFAULT_HIDDEN_GRID: tuple[tuple[int, ...], ...] = (
    (10,),
    (30,),
    (100,),
    (300,),
    (10, 10),
    (30, 30),
    (100, 100),
)


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    early_stop_patience: int = 5
    hidden_spec: tuple[int, ...] = (30,)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")
        if self.early_stop_patience < 0:
            raise ValueError("early_stop_patience must be non-negative")
        object.__setattr__(self, "hidden_spec", tuple(int(h) for h in self.hidden_spec))

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "early_stop_patience": self.early_stop_patience,
            "hidden_spec": list(self.hidden_spec),
        }


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return tuple([self.weights[0].shape[0]] + [w.shape[1] for w in self.weights])

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass(frozen=True)
class EvalResult:
    nll_nats: float
    accuracy: float
    n: int
    fingerprint: str | None = None

    def __post_init__(self):
        if self.nll_nats < 0 or not math.isfinite(self.nll_nats):
            raise ValueError(f"nll_nats must be finite and >= 0, got {self.nll_nats}")
        if not (0.0 <= self.accuracy <= 1.0):
            raise ValueError(f"accuracy must lie in [0, 1], got {self.accuracy}")


def init(layer_sizes: Sequence[int], seed: int) -> MlpParams:
    """Scaled-uniform weights, bound sqrt(6 / (fan_in + fan_out)); zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError(f"layer sizes must be positive with >= 2 entries, got {sizes}")
    rng = new_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def _as_batch(x):
    if sparse.issparse(x):
        return x
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    return x


def _forward_parts(params: MlpParams, x):
    """Hidden pre-activations and activations plus output logits."""
    preacts = []
    a = x
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        z = a @ W + b
        preacts.append(z)
        a = np.maximum(z, 0.0)
    logits = a @ params.weights[-1] + params.biases[-1]
    return preacts, logits


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward(params: MlpParams, x) -> np.ndarray:
    """Class probabilities, computed with max-subtracted softmax."""
    xb = _as_batch(x)
    if not sparse.issparse(xb) and not np.all(np.isfinite(xb)):
        raise ValueError("non-finite input")
    _, logits = _forward_parts(params, xb)
    probs = np.exp(_log_softmax(logits))
    if np.asarray(x).ndim == 1 and not sparse.issparse(x):
        return probs[0]
    return probs


def nll_loss(probs: np.ndarray, label: int) -> float:
    """Negative log-likelihood of one prediction, in nats."""
    return -math.log(probs[label])


def grad(params: MlpParams, x, y) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Analytic gradient of the mean NLL over a batch."""
    xb = _as_batch(x)
    yb = np.atleast_1d(np.asarray(y, dtype=np.int64))
    n = xb.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    preacts, logits = _forward_parts(params, xb)
    probs = np.exp(_log_softmax(logits))

    delta = probs.copy()
    delta[np.arange(n), yb] -= 1.0
    delta /= n

    acts = [xb] + [np.maximum(z, 0.0) for z in preacts]
    d_weights = [None] * len(params.weights)
    d_biases = [None] * len(params.biases)
    for layer in range(len(params.weights) - 1, -1, -1):
        d_weights[layer] = acts[layer].T @ delta
        d_biases[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ params.weights[layer].T) * (preacts[layer - 1] > 0.0)
    return d_weights, d_biases


def _batch_nll(logits: np.ndarray, y: np.ndarray) -> float:
    logp = _log_softmax(logits)
    return float(-logp[np.arange(len(y)), y].mean())


def evaluate(params: MlpParams, x, y, fingerprint: str | None = None,
             chunk: int = 8192) -> EvalResult:
    """Mean NLL in nats plus argmax accuracy (ties go to the lowest class)."""
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    if n == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    total_nll = 0.0
    correct = 0
    for lo in range(0, n, chunk):
        xb = x[lo : lo + chunk]
        yb = y[lo : lo + chunk]
        _, logits = _forward_parts(params, _as_batch(xb))
        logp = _log_softmax(logits)
        total_nll += float(-logp[np.arange(len(yb)), yb].sum())
        correct += int((logp.argmax(axis=1) == yb).sum())
    return EvalResult(
        nll_nats=total_nll / n, accuracy=correct / n, n=n, fingerprint=fingerprint
    )


@dataclass
class TrainResult:
    params: MlpParams
    history: list[tuple[int, float, float, float]]  # (epoch, train_nll, dev_nll, dev_acc)
    best_epoch: int
    config: TrainConfig


def train(x_train, y_train, x_dev, y_dev, n_classes: int, config: TrainConfig) -> TrainResult:
    """Minibatch Adam with per-epoch shuffling and dev-loss early stopping.

    Returns the parameters from the epoch with the lowest dev NLL; the
    untrained network counts as epoch 0, so the result is never worse than
    the initialization. train_nll in the history is the mean of minibatch
    losses seen during that epoch.
    """
    y_train = np.asarray(y_train, dtype=np.int64)
    y_dev = np.asarray(y_dev, dtype=np.int64)
    n = len(y_train)
    if config.batch_size > n:
        raise ValueError(f"batch_size {config.batch_size} exceeds train size {n}")
    input_dim = x_train.shape[1]
    params = init([input_dim, *config.hidden_spec, n_classes], seed=config.seed)
    rng = new_rng(config.seed)

    opt_m = [np.zeros_like(w) for w in params.weights] + [np.zeros_like(b) for b in params.biases]
    opt_v = [np.zeros_like(g) for g in opt_m]
    t = 0
    b1, b2, eps, lr = config.adam_beta1, config.adam_beta2, config.adam_eps, config.learning_rate

    init_eval = evaluate(params, x_dev, y_dev)
    init_train = evaluate(params, x_train, y_train)
    history: list[tuple[int, float, float, float]] = [
        (0, init_train.nll_nats, init_eval.nll_nats, init_eval.accuracy)
    ]
    best_nll = init_eval.nll_nats
    best_epoch = 0
    best_params = params.copy()

    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        xs = x_train[perm]
        ys = y_train[perm]
        batch_losses = []
        for lo in range(0, n, config.batch_size):
            xb = xs[lo : lo + config.batch_size]
            yb = ys[lo : lo + config.batch_size]
            bs = len(yb)
            preacts, logits = _forward_parts(params, xb)
            loss = _batch_nll(logits, yb)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, sample offset {lo} "
                    f"(hidden={config.hidden_spec}, lr={lr})"
                )
            batch_losses.append(loss)

            shifted = logits - logits.max(axis=1, keepdims=True)
            expz = np.exp(shifted)
            delta = expz / expz.sum(axis=1, keepdims=True)
            delta[np.arange(bs), yb] -= 1.0
            delta /= bs

            acts = [xb] + [np.maximum(z, 0.0) for z in preacts]
            grads: list[np.ndarray] = [None] * (2 * len(params.weights))
            n_layers = len(params.weights)
            for layer in range(n_layers - 1, -1, -1):
                grads[layer] = acts[layer].T @ delta
                grads[n_layers + layer] = delta.sum(axis=0)
                if layer > 0:
                    delta = (delta @ params.weights[layer].T) * (preacts[layer - 1] > 0.0)

            t += 1
            corr1 = 1.0 - b1**t
            corr2 = 1.0 - b2**t
            tensors = params.weights + params.biases
            for i, g in enumerate(grads):
                m = opt_m[i]
                v = opt_v[i]
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * (g * g)
                tensors[i] -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)

        dev_eval = evaluate(params, x_dev, y_dev)
        history.append((epoch, float(np.mean(batch_losses)), dev_eval.nll_nats, dev_eval.accuracy))
        if dev_eval.nll_nats < best_nll:
            best_nll = dev_eval.nll_nats
            best_epoch = epoch
            best_params = params.copy()
        elif epoch - best_epoch > config.early_stop_patience:
            break

    return TrainResult(params=best_params, history=history, best_epoch=best_epoch, config=config)


@dataclass(frozen=True)
class Candidate:
    hidden_spec: tuple[int, ...]
    dev_nll: float
    dev_acc: float
    status: str  # trained | diverged


@dataclass
class GridSearchResult:
    params: MlpParams
    eval_result: EvalResult
    hidden_spec: tuple[int, ...]
    candidates: list[Candidate]
    history: list[tuple[int, float, float, float]]  # best candidate's epochs


def grid_search(
    x_train,
    y_train,
    x_dev,
    y_dev,
    n_classes: int,
    hidden_specs: Sequence[tuple[int, ...]] = DEFAULT_HIDDEN_GRID,
    base_config: TrainConfig = TrainConfig(),
    fingerprint: str | None = None,
) -> GridSearchResult:
    """Train one model per hidden spec and keep the lowest dev NLL.

    Ties break toward the earlier spec in the list. Raises if every
    candidate diverges.
    """
    if not hidden_specs:
        raise ValueError("hidden_specs must be non-empty")
    best: GridSearchResult | None = None
    candidates: list[Candidate] = []
    for spec in hidden_specs:
        config = replace(base_config, hidden_spec=tuple(spec))
        try:
            result = train(x_train, y_train, x_dev, y_dev, n_classes, config)
        except TrainingDivergedError:
            candidates.append(Candidate(tuple(spec), math.inf, 0.0, "diverged"))
            continue
        ev = evaluate(result.params, x_dev, y_dev, fingerprint=fingerprint)
        candidates.append(Candidate(tuple(spec), ev.nll_nats, ev.accuracy, "trained"))
        if best is None or ev.nll_nats < best.eval_result.nll_nats:
            best = GridSearchResult(result.params, ev, tuple(spec), candidates, result.history)
    if best is None:
        raise TrainingDivergedError("every grid candidate diverged")
    best.candidates = candidates
    return best


def save_history(history, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        f.write("epoch,train_nll,dev_nll,dev_acc\n")
        for epoch, train_nll, dev_nll, dev_acc in history:
            f.write(f"{epoch},{float(train_nll)!r},{float(dev_nll)!r},{float(dev_acc)!r}\n")


def save_checkpoint(params: MlpParams, path, metadata: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sizes = params.layer_sizes
    with path.open("wb") as f:
        f.write(CHECKPOINT_MAGIC)
        np.array([len(params.weights)], dtype=np.int64).tofile(f)
        np.array(sizes, dtype=np.int64).tofile(f)
        for W, b in zip(params.weights, params.biases):
            np.ascontiguousarray(W, dtype=np.float64).tofile(f)
            np.ascontiguousarray(b, dtype=np.float64).tofile(f)
    meta_path = path.with_name(path.name + ".meta.json")
    meta_path.write_text(json.dumps(metadata or {}, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path) -> tuple[MlpParams, dict]:
    path = Path(path)
    with path.open("rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a tsikit checkpoint")
        n_layers = int(np.fromfile(f, dtype=np.int64, count=1)[0])
        sizes = np.fromfile(f, dtype=np.int64, count=n_layers + 1)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            W = np.fromfile(f, dtype=np.float64, count=int(fan_in * fan_out))
            weights.append(W.reshape(int(fan_in), int(fan_out)))
            biases.append(np.fromfile(f, dtype=np.float64, count=int(fan_out)))
    meta_path = path.with_name(path.name + ".meta.json")
    metadata = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return MlpParams(weights, biases), metadata


def prior_params(class_counts: Sequence[int], input_dim: int) -> MlpParams:
    """A class-prior predictor: zero weights, log-frequency biases.

    Evaluating it on data drawn from the same label distribution gives the
    plug-in label entropy, which is the natural empty-control baseline.
    """
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.sum() <= 0 or np.any(counts < 0):
        raise ValueError("class counts must be non-negative with a positive total")
    with np.errstate(divide="ignore"):
        logp = np.log(counts / counts.sum())
    logp[~np.isfinite(logp)] = -745.0  # empty class: smallest useful logit
    return MlpParams([np.zeros((input_dim, len(counts)))], [logp])
