"""Command-line entry point.

Commands: ``inspect``, ``extract``, ``tsi``, ``sweep-features``,
``sweep-size``, ``synth-kl``, ``knn-compare``. Each takes ``--config``
(JSON file), ``--seed``, ``--out`` and ``--jobs``; flags win over the
config file. Exit codes: 0 success, 1 runtime failure, 2 configuration or
validation error.

Every run is deterministic given its config: the master seed fans out to
per-stage seeds through a keyed hash, report JSON is written with sorted
keys, and every output file embeds the config fingerprint. ``tsi`` caches
its trained-model evaluations under fingerprinted filenames, so rerunning
an identical config is a cache hit that reproduces the report byte for
byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, corpus, features, knn_entropy, model, plots, shortcuts, synthetic, tsi
from .model import TrainConfig
from .util import (
    CacheMismatchError,
    ConfigError,
    StageError,
    derive_seed,
    fingerprint_config,
    read_json,
    write_csv,
    write_json,
    write_jsonl,
)

REPORT_NOTE = (
    "tsi = nll_control - nll_full on a shared dev set; residual model-misfit "
    "terms are excluded, with their scale checked empirically by the synth-kl harness"
)

DEFAULT_CONFIG = {
    "seed": 0,
    "data": {
        "format": None,
        "fields": {},
        "split_ratios": [0.8, 0.1, 0.1],
        "split_seed": 0,
    },
    "feature_set": "PS",
    "feature_sets": ["P", "PS"],
    "stopwords": None,
    "negations": None,
    "hashing": {"dims": 2**18, "ngram_orders": [1, 2], "hash_seed": 0},
    "control": {
        "grid": [list(h) for h in model.DEFAULT_HIDDEN_GRID],
        "learning_rate": 1e-3,
        "batch_size": 32,
        "epochs": 200,
        "patience": 5,
    },
    "full": {
        "hidden": [[30]],
        "learning_rate": 1e-3,
        "batch_size": 64,
        "epochs": 200,
        "patience": 5,
    },
    "external_nll": {"control": None, "full": None},
    "fractions": [1.0, 0.5, 0.25],
    "sweep_seeds": [0, 1, 2],
    "synth": {
        "m_values": list(range(2, 11)),
        "p_values": [round(0.1 * i, 1) for i in range(1, 10)],
        "g_kinds": ["sum", "and"],
        "n_train": 20000,
        "n_dev": 10000,
        "hidden": [30],
        "learning_rate": 3e-3,
        "batch_size": 128,
        "patience": 4,
        "epochs": 200,
        "thresholds": [0.04, 0.05],
    },
    "knn": {
        "subset_size": 2000,
        "seeds": list(range(10)),
        "k": 3,
        "x_dim_cap": 16,
        "include_full_input": True,
        "split": "train",
        "tree": True,
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _load_config(args) -> dict:
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            user = read_json(path)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}")
        if not isinstance(user, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        cfg = _deep_merge(cfg, user)
        cfg["_config_dir"] = str(path.parent)
    else:
        cfg["_config_dir"] = "."
    if getattr(args, "data", None):
        cfg.setdefault("data", {})
        cfg["data"]["train"] = args.data
        cfg["_config_dir"] = "."
    if getattr(args, "format", None):
        cfg["data"]["format"] = args.format
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "feature_set", None):
        cfg["feature_set"] = args.feature_set
    if getattr(args, "stopwords", None):
        cfg["stopwords"] = args.stopwords
    if getattr(args, "negations", None):
        cfg["negations"] = args.negations
    return cfg


def _resolve_path(cfg: dict, value: str) -> Path:
    path = Path(value)
    if not path.is_absolute():
        path = Path(cfg.get("_config_dir", ".")) / path
    return path


def _public_config(cfg: dict, command: str) -> dict:
    public = {k: v for k, v in cfg.items() if not k.startswith("_")}
    public["command"] = command
    return public


def _policy(cfg: dict) -> shortcuts.StopwordPolicy:
    data_dir = Path(__file__).parent / "data"
    sw = _resolve_path(cfg, cfg["stopwords"]) if cfg.get("stopwords") else data_dir / "stopwords.txt"
    ng = _resolve_path(cfg, cfg["negations"]) if cfg.get("negations") else data_dir / "negation_exclusions.txt"
    for p in (sw, ng):
        if not Path(p).exists():
            raise ConfigError(f"word list not found: {p}")
    return shortcuts.StopwordPolicy.from_files(sw, ng)


def _policy_fingerprint(policy: shortcuts.StopwordPolicy) -> str:
    text = ",".join(sorted(policy.effective)) + "|" + ",".join(sorted(policy.negation_exclusions))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _load_splits(cfg: dict) -> dict[str, corpus.Dataset]:
    """Resolve the data section into named splits (parse-time validation)."""
    data = cfg.get("data") or {}
    fields = data.get("fields") or {}
    fmt = data.get("format")
    splits: dict[str, corpus.Dataset] = {}
    if data.get("train") and data.get("dev"):
        train_path = _resolve_path(cfg, data["train"])
        if not train_path.exists():
            raise ConfigError(f"dataset file not found: {train_path}")
        train = corpus.load_dataset(train_path, fmt, fields, split_tag="train")
        for tag in ("dev", "test"):
            if data.get(tag):
                path = _resolve_path(cfg, data[tag])
                if not path.exists():
                    raise ConfigError(f"dataset file not found: {path}")
                splits[tag] = corpus.load_dataset(path, fmt, fields, vocab=train.vocab, split_tag=tag)
        splits["train"] = train
    elif data.get("path") or data.get("train"):
        path = _resolve_path(cfg, data.get("path") or data["train"])
        if not path.exists():
            raise ConfigError(f"dataset file not found: {path}")
        whole = corpus.load_dataset(path, fmt, fields)
        if data.get("path"):
            ratios = tuple(data.get("split_ratios", [0.8, 0.1, 0.1]))
            train, dev, test = corpus.split(whole, ratios, data.get("split_seed", 0))
            splits = {"train": train, "dev": dev, "test": test}
        else:
            splits = {"train": whole}
    else:
        raise ConfigError("config data section needs either train+dev paths or a single path")
    return splits


def _train_config(section: dict, batch_default: int) -> TrainConfig:
    return TrainConfig(
        learning_rate=section.get("learning_rate", 1e-3),
        epochs=section.get("epochs", 200),
        batch_size=section.get("batch_size", batch_default),
        adam_beta1=section.get("adam_beta1", 0.9),
        adam_beta2=section.get("adam_beta2", 0.999),
        adam_eps=section.get("adam_eps", 1e-8),
        early_stop_patience=section.get("patience", 5),
    )


def _flatten_report(report: tsi.TsiReport) -> list:
    return [
        report.feature_set,
        report.nll_control,
        report.nll_full,
        report.tsi,
        report.h_y,
        report.m,
        report.n_train,
        report.n_dev,
        str(report.flags["negative_tsi"]).lower(),
        str(report.flags["exceeds_h_y"]).lower(),
        str(report.flags["exceeds_log_m"]).lower(),
    ]


REPORT_COLUMNS = [
    "feature_set", "nll_control", "nll_full", "tsi", "h_y", "m", "n_train", "n_dev",
    "flag_negative_tsi", "flag_exceeds_h_y", "flag_exceeds_log_m",
]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_inspect(args) -> int:
    cfg = _load_config(args)
    splits = _load_splits(cfg)
    fp = fingerprint_config(_public_config(cfg, "inspect"))
    out = {"version": __version__, "config_fingerprint": fp, "splits": {}}
    for tag, ds in sorted(splits.items()):
        counts = ds.class_counts()
        out["splits"][tag] = {
            "n": len(ds),
            "m": ds.vocab.m,
            "labels": list(ds.vocab.names),
            "class_counts": {name: c for name, c in zip(ds.vocab.names, counts)},
            "h_y": corpus.label_entropy(ds),
            "pair": ds.is_pair,
            "n_skipped": ds.n_skipped,
        }
        print(
            f"{tag}: n={len(ds)} m={ds.vocab.m} pair={ds.is_pair} "
            f"h_y={out['splits'][tag]['h_y']:.4f} nats skipped={ds.n_skipped}"
        )
    out_dir = Path(args.out)
    write_json(out_dir / "inspect.json", out)
    print(f"wrote {out_dir / 'inspect.json'}")
    return 0


def cmd_extract(args) -> int:
    cfg = _load_config(args)
    splits = _load_splits(cfg)
    tag = args.split or "train"
    if tag not in splits:
        raise ConfigError(f"split {tag!r} not available; have {sorted(splits)}")
    ds = splits[tag]
    feature_set = shortcuts.FeatureSet.parse(cfg["feature_set"])
    if "O" in feature_set and not ds.is_pair:
        raise ConfigError("overlap features requested on a single-text dataset")
    policy = _policy(cfg)
    fp = fingerprint_config(_public_config(cfg, "extract"))

    matrix, warnings = shortcuts.extract_matrix(ds.samples, feature_set, policy)
    out_dir = Path(args.out)
    path = out_dir / f"shortcut_features_{tag}.csv"
    header = ["id", *feature_set.schema(), "warning"]
    rows = [
        [sid, *[float(v) for v in matrix[i]], str(bool(warnings[i])).lower()]
        for i, sid in enumerate(ds.ids())
    ]
    write_csv(path, header, rows, fingerprint=fp)
    print(f"wrote {path} ({len(rows)} rows, schema {list(feature_set.schema())})")
    return 0


def _load_external_nll(path: Path, dev: corpus.Dataset) -> model.EvalResult:
    """Per-sample NLL file: CSV with header id,nll[,correct]."""
    if not path.exists():
        raise ConfigError(f"external NLL file not found: {path}")
    with path.open("r", encoding="utf-8", newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or "id" not in reader.fieldnames or "nll" not in reader.fieldnames:
        raise ConfigError(f"{path} must be a CSV with id,nll[,correct] columns")
    nll_by_id: dict[str, float] = {}
    correct_by_id: dict[str, int] = {}
    has_correct = "correct" in reader.fieldnames
    for row in reader:
        nll = float(row["nll"])
        if nll < 0 or not math.isfinite(nll):
            raise ConfigError(f"{path}: nll for id {row['id']!r} must be finite and >= 0")
        nll_by_id[row["id"]] = nll
        if has_correct:
            correct_by_id[row["id"]] = int(row["correct"])
    dev_ids = dev.ids()
    if set(nll_by_id) != set(dev_ids):
        missing = sorted(set(dev_ids) - set(nll_by_id))[:3]
        extra = sorted(set(nll_by_id) - set(dev_ids))[:3]
        raise ConfigError(
            f"{path} ids do not match the dev set (missing {missing}, unexpected {extra})"
        )
    mean_nll = float(np.mean([nll_by_id[i] for i in dev_ids]))
    acc = float(np.mean([correct_by_id[i] for i in dev_ids])) if has_correct else 0.0
    return model.EvalResult(
        nll_nats=mean_nll, accuracy=acc, n=len(dev_ids), fingerprint=dev.fingerprint()
    )


def _cached_grid_search(cache_dir: Path, key: dict, train_fn) -> dict:
    """Run (or reuse) a grid search; cache the evaluation, not the weights."""
    fp = fingerprint_config(key)
    path = cache_dir / f"{key['kind']}-{fp[:16]}.json"
    if path.exists():
        cached = read_json(path)
        if cached.get("config_fingerprint") != fp:
            raise CacheMismatchError(path, fp, cached.get("config_fingerprint", "missing"))
        cached["source"] = "cache"
        return cached
    result = train_fn()
    entry = {
        "config_fingerprint": fp,
        "eval": {
            "nll_nats": result.eval_result.nll_nats,
            "accuracy": result.eval_result.accuracy,
            "n": result.eval_result.n,
            "fingerprint": result.eval_result.fingerprint,
        },
        "best_hidden": list(result.hidden_spec),
        "candidates": [
            {"hidden": list(c.hidden_spec), "dev_nll": None if math.isinf(c.dev_nll) else c.dev_nll,
             "dev_acc": c.dev_acc, "status": c.status}
            for c in result.candidates
        ],
    }
    write_json(path, entry)
    entry = read_json(path)
    entry["source"] = "trained"
    entry["_result"] = result
    return entry


def _entry_eval(entry: dict) -> model.EvalResult:
    ev = entry["eval"]
    return model.EvalResult(
        nll_nats=ev["nll_nats"], accuracy=ev["accuracy"], n=ev["n"], fingerprint=ev["fingerprint"]
    )


def cmd_tsi(args) -> int:
    cfg = _load_config(args)
    splits = _load_splits(cfg)
    if "dev" not in splits:
        raise ConfigError("tsi needs a dev split (train+dev paths or a single path with ratios)")
    train_ds, dev_ds = splits["train"], splits["dev"]
    feature_set = shortcuts.FeatureSet.parse(cfg["feature_set"])
    if "O" in feature_set and not train_ds.is_pair:
        raise ConfigError("overlap features requested on a single-text dataset")
    policy = _policy(cfg)
    hashing = features.HashingConfig.from_dict(cfg["hashing"])
    seed = cfg["seed"]
    run_fp = fingerprint_config(_public_config(cfg, "tsi"))
    out_dir = Path(args.out)
    cache_dir = out_dir / "cache"
    dev_fp = dev_ds.fingerprint()
    train_fp = train_ds.fingerprint()
    y_train = np.asarray(train_ds.labels())
    y_dev = np.asarray(dev_ds.labels())
    m = train_ds.vocab.m

    external = cfg.get("external_nll") or {}

    # Control side
    if external.get("control"):
        control_eval = _load_external_nll(_resolve_path(cfg, external["control"]), dev_ds)
        control_entry = {"source": "external", "best_hidden": None, "candidates": []}
    else:
        control_cfg = _train_config(cfg["control"], batch_default=32)
        control_key = {
            "kind": "control",
            "train_fp": train_fp,
            "dev_fp": dev_fp,
            "feature_set": str(feature_set),
            "policy": _policy_fingerprint(policy),
            "grid": cfg["control"]["grid"],
            "train": control_cfg.to_dict(),
            "seed": seed,
        }

        def _train_control():
            xc_train, _ = shortcuts.extract_matrix(train_ds.samples, feature_set, policy)
            xc_dev, _ = shortcuts.extract_matrix(dev_ds.samples, feature_set, policy)
            result = model.grid_search(
                xc_train, y_train, xc_dev, y_dev, m,
                hidden_specs=[tuple(h) for h in cfg["control"]["grid"]],
                base_config=replace(control_cfg, seed=derive_seed(seed, "control", str(feature_set))),
                fingerprint=dev_fp,
            )
            return result

        try:
            control_entry = _cached_grid_search(cache_dir, control_key, _train_control)
        except CacheMismatchError:
            raise
        except Exception as e:
            raise StageError("control", str(e))
        control_eval = _entry_eval(control_entry)

    # Full side
    if external.get("full"):
        full_eval = _load_external_nll(_resolve_path(cfg, external["full"]), dev_ds)
        full_entry = {"source": "external", "best_hidden": None, "candidates": []}
    else:
        full_cfg = _train_config(cfg["full"], batch_default=64)
        full_key = {
            "kind": "full",
            "train_fp": train_fp,
            "dev_fp": dev_fp,
            "hashing": hashing.to_dict(),
            "hidden": cfg["full"]["hidden"],
            "train": full_cfg.to_dict(),
            "seed": seed,
        }

        def _train_full():
            xf_train, _ = features.featurize_matrix(train_ds.samples, hashing)
            xf_dev, _ = features.featurize_matrix(dev_ds.samples, hashing)
            return model.grid_search(
                xf_train, y_train, xf_dev, y_dev, m,
                hidden_specs=[tuple(h) for h in cfg["full"]["hidden"]],
                base_config=replace(full_cfg, seed=derive_seed(seed, "full")),
                fingerprint=dev_fp,
            )

        try:
            full_entry = _cached_grid_search(cache_dir, full_key, _train_full)
        except CacheMismatchError:
            raise
        except Exception as e:
            raise StageError("full", str(e))
        full_eval = _entry_eval(full_entry)

    # Difference + bounds
    h_y = corpus.label_entropy(dev_ds)
    report = tsi.compute_tsi(control_eval, full_eval, h_y, m, feature_set, n_train=len(train_ds))
    diagnostics = tsi.validate_bounds(report)
    prior_report = tsi.compute_tsi(
        tsi.prior_control_eval(y_dev, fingerprint=dev_fp), full_eval, h_y, m, "none",
        n_train=len(train_ds),
    )

    payload = {
        "version": __version__,
        "config_fingerprint": run_fp,
        "note": REPORT_NOTE,
        "report": report.to_dict(),
        "prior_report": prior_report.to_dict(),
        "diagnostics": [
            {"check": d.check, "magnitude": d.magnitude, "message": d.message} for d in diagnostics
        ],
        "control": {
            "dev_acc": control_eval.accuracy,
            "best_hidden": control_entry.get("best_hidden"),
            "candidates": control_entry.get("candidates", []),
        },
        "full": {
            "dev_acc": full_eval.accuracy,
            "best_hidden": full_entry.get("best_hidden"),
        },
        "dev_fingerprint": dev_fp,
    }
    report_path = out_dir / "tsi_report.json"
    write_json(report_path, payload)

    for entry, name in ((control_entry, "control"), (full_entry, "full")):
        result = entry.get("_result")
        if result is not None:
            model.save_checkpoint(
                result.params,
                out_dir / f"{name}_model.bin",
                metadata={"config_fingerprint": run_fp, "hidden": list(result.hidden_spec), "seed": seed},
            )
            model.save_history(result.history, out_dir / f"{name}_history.csv")

    if not args.no_figures:
        plots.plot_tsi_bars(report.to_dict(), prior_report.to_dict(), out_dir / "tsi_nll_bars.png", fingerprint=run_fp)
        cand_points = [
            (c["dev_nll"], c["dev_acc"])
            for c in control_entry.get("candidates", [])
            if c["status"] == "trained" and c["dev_nll"] is not None
        ]
        if len({p[0] for p in cand_points}) >= 2:
            fit = tsi.acc_loss_trend(cand_points)
            plots.plot_acc_loss_trend(cand_points, fit, out_dir / "acc_loss_trend.png", fingerprint=run_fp)

    for d in diagnostics:
        print(f"bound violation: {d.message}")
    print(
        f"tsi={report.tsi:.4f} nats (control={report.nll_control:.4f} [{control_entry['source']}], "
        f"full={report.nll_full:.4f} [{full_entry['source']}], "
        f"h_y={report.h_y:.4f}, feature_set={report.feature_set})"
    )
    print(f"wrote {report_path}")
    return 0


def cmd_sweep_features(args) -> int:
    cfg = _load_config(args)
    splits = _load_splits(cfg)
    if "dev" not in splits:
        raise ConfigError("sweep-features needs a dev split")
    train_ds, dev_ds = splits["train"], splits["dev"]
    feature_sets = [shortcuts.FeatureSet.parse(s) for s in cfg["feature_sets"]]
    for fs in feature_sets:
        if "O" in fs and not train_ds.is_pair:
            raise ConfigError(f"overlap features in {fs} but dataset is single-text")
    policy = _policy(cfg)
    run_fp = fingerprint_config(_public_config(cfg, "sweep-features"))
    out_dir = Path(args.out)

    try:
        reports, _ = tsi.shortcut_sweep(
            train_ds, dev_ds, feature_sets,
            policy=policy,
            hashing=features.HashingConfig.from_dict(cfg["hashing"]),
            control_grid=[tuple(h) for h in cfg["control"]["grid"]],
            control_config=_train_config(cfg["control"], 32),
            full_hidden=[tuple(h) for h in cfg["full"]["hidden"]],
            full_config=_train_config(cfg["full"], 64),
            seed=cfg["seed"],
        )
    except Exception as e:
        raise StageError("sweep-features", str(e))

    write_csv(out_dir / "sweep_features.csv", REPORT_COLUMNS,
              [_flatten_report(r) for r in reports], fingerprint=run_fp)
    write_jsonl(out_dir / "sweep_features.jsonl",
                [{"config_fingerprint": run_fp, **r.to_dict()} for r in reports])
    summary_lines = [
        f"feature_set={r.feature_set}: tsi={r.tsi:.4f} nats "
        f"(control={r.nll_control:.4f}, full={r.nll_full:.4f})"
        for r in reports
    ]
    (out_dir / "summary.txt").write_text(
        f"# config_fingerprint={run_fp}\n" + "\n".join(summary_lines) + "\n"
    )
    if not args.no_figures:
        plots.plot_feature_sweep([r.to_dict() for r in reports], out_dir / "sweep_features_tsi.png", fingerprint=run_fp)
    print("\n".join(summary_lines))
    print(f"wrote {out_dir / 'sweep_features.csv'}")
    return 0


def cmd_sweep_size(args) -> int:
    cfg = _load_config(args)
    splits = _load_splits(cfg)
    if "dev" not in splits:
        raise ConfigError("sweep-size needs a dev split")
    train_ds, dev_ds = splits["train"], splits["dev"]
    feature_set = shortcuts.FeatureSet.parse(cfg["feature_set"])
    if "O" in feature_set and not train_ds.is_pair:
        raise ConfigError("overlap features requested on a single-text dataset")
    policy = _policy(cfg)
    run_fp = fingerprint_config(_public_config(cfg, "sweep-size"))
    out_dir = Path(args.out)

    try:
        points = tsi.size_sweep(
            train_ds, dev_ds,
            fractions=cfg["fractions"],
            seeds=cfg["sweep_seeds"],
            feature_set=feature_set,
            policy=policy,
            hashing=features.HashingConfig.from_dict(cfg["hashing"]),
            control_grid=[tuple(h) for h in cfg["control"].get("sweep_grid", [[30]])],
            control_config=_train_config(cfg["control"], 32),
            full_hidden=[tuple(h) for h in cfg["full"]["hidden"]],
            full_config=_train_config(cfg["full"], 64),
            base_seed=cfg["seed"],
            jobs=args.jobs,
        )
    except Exception as e:
        raise StageError("sweep-size", str(e))

    header = ["fraction", "seed", *REPORT_COLUMNS, "full_acc"]
    rows = [[p.fraction, p.seed, *_flatten_report(p.report), p.full_acc] for p in points]
    write_csv(out_dir / "sweep_size.csv", header, rows, fingerprint=run_fp)
    write_jsonl(
        out_dir / "sweep_size.jsonl",
        [
            {"config_fingerprint": run_fp, "fraction": p.fraction, "seed": p.seed,
             "full_acc": p.full_acc, **p.report.to_dict()}
            for p in points
        ],
    )

    lines = []
    for frac in sorted({p.fraction for p in points}, reverse=True):
        vals = [p.report.tsi for p in points if p.fraction == frac]
        lines.append(
            f"fraction={frac}: tsi mean={np.mean(vals):.4f} spread={max(vals) - min(vals):.4f} "
            f"({len(vals)} seeds)"
        )
    (out_dir / "summary.txt").write_text(f"# config_fingerprint={run_fp}\n" + "\n".join(lines) + "\n")

    if not args.no_figures:
        plots.plot_size_sweep(
            [{"fraction": p.fraction, "tsi": p.report.tsi} for p in points],
            out_dir / "sweep_size_tsi.png",
            fingerprint=run_fp,
        )
        trend_points = [(p.report.nll_full, p.full_acc) for p in points]
        if len({p[0] for p in trend_points}) >= 2:
            fit = tsi.acc_loss_trend(trend_points)
            plots.plot_acc_loss_trend(trend_points, fit, out_dir / "acc_loss_trend.png", fingerprint=run_fp)
    print("\n".join(lines))
    print(f"wrote {out_dir / 'sweep_size.csv'}")
    return 0


def cmd_synth_kl(args) -> int:
    cfg = _load_config(args)
    synth = cfg["synth"]
    run_fp = fingerprint_config(_public_config(cfg, "synth-kl"))
    out_dir = Path(args.out)

    grid = synthetic.default_grid(
        m_values=synth["m_values"],
        p_values=synth["p_values"],
        g_kinds=synth["g_kinds"],
        n_train=synth["n_train"],
        n_dev=synth["n_dev"],
    )
    train_cfg = TrainConfig(
        hidden_spec=tuple(synth["hidden"]),
        learning_rate=synth["learning_rate"],
        batch_size=synth["batch_size"],
        early_stop_patience=synth["patience"],
        epochs=synth["epochs"],
    )
    try:
        results, summary = synthetic.kl_scale_experiment(
            grid, train_cfg, base_seed=cfg["seed"], thresholds=synth["thresholds"], jobs=args.jobs
        )
    except Exception as e:
        raise StageError("synth-kl", str(e))

    header = ["m", "p_x", "p_y", "g_kind", "n_train", "n_dev", "seed", "status",
              "nll_dev", "h_y_given_x", "abs_gap"]
    rows = [
        [r.spec.m, r.spec.p_x, r.spec.p_y, r.spec.g_kind, r.spec.n_train, r.spec.n_dev,
         r.spec.seed, r.status, r.nll_dev, r.h_y_given_x, r.abs_gap]
        for r in results
    ]
    write_csv(out_dir / "synth_kl_results.csv", header, rows, fingerprint=run_fp)
    write_json(out_dir / "synth_kl_summary.json",
               {"version": __version__, "config_fingerprint": run_fp, **summary})

    lines = [
        f"configs={summary['n_configs']} trained={summary['n_trained']} failed={summary['n_failed']}",
        f"median gap: {summary['median_gap']:.4f} nats",
    ]
    for t, frac in summary["fraction_within"].items():
        lines.append(f"fraction within {t} nats: {100.0 * frac:.1f}%")
    (out_dir / "summary.txt").write_text(f"# config_fingerprint={run_fp}\n" + "\n".join(lines) + "\n")
    if not args.no_figures:
        plots.plot_kl_histogram(summary["histogram"], out_dir / "synth_kl_hist.png", fingerprint=run_fp)
    print("\n".join(lines))
    print(f"wrote {out_dir / 'synth_kl_results.csv'}")
    return 0


def cmd_knn_compare(args) -> int:
    cfg = _load_config(args)
    splits = _load_splits(cfg)
    knn_cfg = cfg["knn"]
    tag = knn_cfg.get("split", "train")
    if tag not in splits:
        raise ConfigError(f"knn-compare needs the {tag!r} split")
    ds = splits[tag]
    feature_set = shortcuts.FeatureSet.parse(cfg["feature_set"])
    if "O" in feature_set and not ds.is_pair:
        raise ConfigError("overlap features requested on a single-text dataset")
    policy = _policy(cfg)
    run_fp = fingerprint_config(_public_config(cfg, "knn-compare"))
    out_dir = Path(args.out)

    x_matrix = None
    if knn_cfg.get("include_full_input", True):
        hashing = features.HashingConfig.from_dict(cfg["hashing"])
        x_matrix, _ = features.featurize_matrix(ds.samples, hashing)
        x_matrix = np.asarray(x_matrix.todense()) if x_matrix.shape[1] <= knn_cfg["x_dim_cap"] else x_matrix

    try:
        rows, summary = knn_entropy.mc_compare(
            ds, feature_set,
            subset_size=knn_cfg["subset_size"],
            seeds=knn_cfg["seeds"],
            k=knn_cfg["k"],
            policy=policy,
            x_matrix=x_matrix,
            x_dim_cap=knn_cfg["x_dim_cap"],
            base_seed=cfg["seed"],
            tree=knn_cfg.get("tree", True),
        )
    except Exception as e:
        raise StageError("knn-compare", str(e))

    header = ["seed", "n", "k", "h_y", "h_y_given_xs_knn", "nll_control", "gap",
              "negative_flag", "h_y_given_x_knn"]
    write_csv(
        out_dir / "knn_compare.csv",
        header,
        [[r[c] if c != "negative_flag" else str(r[c]).lower() for c in header] for r in rows],
        fingerprint=run_fp,
    )
    write_json(out_dir / "knn_compare.json",
               {"version": __version__, "config_fingerprint": run_fp, "rows": rows, "summary": summary})
    lines = [
        f"seeds={summary['n_seeds']} subset={summary['subset_size']} k={summary['k']}",
        f"kNN H(Y|Xs): mean={summary['mean_h_y_given_xs_knn']:.4f} sd={summary['sd_h_y_given_xs_knn']:.4f}",
        f"gap vs control NLL: mean={summary['mean_gap']:.4f} mean|gap|={summary['mean_abs_gap']:.4f}",
        f"negative conditional entropies: {summary['n_negative']}",
        f"full-input side: {summary['x_side']}",
    ]
    (out_dir / "summary.txt").write_text(f"# config_fingerprint={run_fp}\n" + "\n".join(lines) + "\n")
    if not args.no_figures:
        plots.plot_knn_compare(rows, out_dir / "knn_compare.png", fingerprint=run_fp)
    print("\n".join(lines))
    print(f"wrote {out_dir / 'knn_compare.csv'}")
    return 0


# ---------------------------------------------------------------------------
# Parser / entry point
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    parser.add_argument("--out", default="tsikit_out", help="output directory")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers for sweeps")
    parser.add_argument("--no-figures", action="store_true", help="skip PNG rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsikit", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"tsikit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="dataset summary: sizes, classes, label entropy")
    p.add_argument("data", nargs="?", help="dataset file (alternative to --config)")
    p.add_argument("--format", choices=["jsonl", "csv", "tsv"])
    _add_common(p)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("extract", help="export shortcut features as CSV")
    p.add_argument("data", nargs="?", help="dataset file (alternative to --config)")
    p.add_argument("--format", choices=["jsonl", "csv", "tsv"])
    p.add_argument("--feature-set", help="e.g. P, PS, PSO")
    p.add_argument("--split", default="train", help="which split to extract")
    p.add_argument("--stopwords", help="stopword list file override")
    p.add_argument("--negations", help="negation exclusion file override")
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("tsi", help="compute one TSI report (control vs full)")
    p.add_argument("--feature-set", help="e.g. P, PS, PSO")
    _add_common(p)
    p.set_defaults(func=cmd_tsi)

    p = sub.add_parser("sweep-features", help="TSI across shortcut feature sets")
    _add_common(p)
    p.set_defaults(func=cmd_sweep_features)

    p = sub.add_parser("sweep-size", help="TSI across stratified train fractions")
    _add_common(p)
    p.set_defaults(func=cmd_sweep_size)

    p = sub.add_parser("synth-kl", help="synthetic grid: dev loss vs exact H(Y|X)")
    _add_common(p)
    p.set_defaults(func=cmd_synth_kl)

    p = sub.add_parser("knn-compare", help="kNN entropy estimates vs control losses")
    p.add_argument("--feature-set", help="e.g. P, PS")
    _add_common(p)
    p.set_defaults(func=cmd_knn_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure inside a stage
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
