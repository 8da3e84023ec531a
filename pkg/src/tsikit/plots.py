"""Figure rendering for the report paths.

Every CLI report command drops a PNG next to its CSV/JSON output so sweep
results are inspectable without a separate plotting step. All functions
take prepared data and a target path; nothing here recomputes results.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _finish(fig, path, fingerprint: str | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    metadata = {"Description": f"config_fingerprint={fingerprint}"} if fingerprint else None
    fig.savefig(path, dpi=130, metadata=metadata)
    plt.close(fig)
    return path


def plot_tsi_bars(report_dict: dict, prior_dict: dict, path, fingerprint: str | None = None) -> Path:
    """Control vs full NLL and the resulting TSI for one run."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.5, 3.2))
    labels = ["prior", f"control ({report_dict['feature_set']})", "full"]
    values = [prior_dict["nll_control"], report_dict["nll_control"], report_dict["nll_full"]]
    ax1.bar(labels, values, color=["#bbbbbb", "#348abd", "#e24a33"])
    ax1.axhline(report_dict["h_y"], color="k", lw=0.8, ls="--", label="H(Y)")
    ax1.set_ylabel("dev NLL (nats)")
    ax1.legend(frameon=False, fontsize=8)

    ax2.bar(["tsi (no control)", f"tsi ({report_dict['feature_set']})"],
            [prior_dict["tsi"], report_dict["tsi"]], color=["#bbbbbb", "#348abd"])
    ax2.set_ylabel("TSI (nats)")
    fig.suptitle("Task-specific information", fontsize=10)
    return _finish(fig, path, fingerprint)


def plot_acc_loss_trend(points, fit, path, fingerprint: str | None = None) -> Path:
    """Scatter of (dev NLL, accuracy) with the fitted line."""
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    ax.scatter(xs, ys, s=24, color="#348abd", zorder=3)
    if fit is not None:
        lo, hi = min(xs), max(xs)
        ax.plot(
            [lo, hi],
            [fit.slope * lo + fit.intercept, fit.slope * hi + fit.intercept],
            color="#e24a33",
            label=f"slope={fit.slope:.3f}, r$^2$={fit.r_squared:.3f}",
        )
        ax.legend(frameon=False, fontsize=8)
    ax.set_xlabel("dev NLL (nats)")
    ax.set_ylabel("dev accuracy")
    return _finish(fig, path, fingerprint)


def plot_feature_sweep(reports: list[dict], path, fingerprint: str | None = None) -> Path:
    """TSI per shortcut feature set, shared full model."""
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    names = [r["feature_set"] for r in reports]
    ax.bar(names, [r["tsi"] for r in reports], color="#348abd")
    ax.set_xlabel("shortcut feature set")
    ax.set_ylabel("TSI (nats)")
    if reports:
        ax.axhline(reports[0]["h_y"], color="k", lw=0.8, ls="--", label="H(Y)")
        ax.legend(frameon=False, fontsize=8)
    return _finish(fig, path, fingerprint)


def plot_size_sweep(rows: list[dict], path, fingerprint: str | None = None) -> Path:
    """TSI against train fraction, one marker per seed."""
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    fractions = sorted({r["fraction"] for r in rows})
    for frac in fractions:
        ys = [r["tsi"] for r in rows if r["fraction"] == frac]
        ax.scatter([frac] * len(ys), ys, s=20, color="#348abd", alpha=0.7)
    means = [
        sum(r["tsi"] for r in rows if r["fraction"] == f) / sum(1 for r in rows if r["fraction"] == f)
        for f in fractions
    ]
    ax.plot(fractions, means, color="#e24a33", marker="o", ms=4, label="mean")
    ax.set_xlabel("train fraction")
    ax.set_ylabel("TSI (nats)")
    ax.set_xscale("log")
    ax.legend(frameon=False, fontsize=8)
    return _finish(fig, path, fingerprint)


def plot_kl_histogram(histograms: dict, path, fingerprint: str | None = None) -> Path:
    """Per-generator histogram of |dev NLL - exact H(Y|X)|."""
    kinds = list(histograms)
    fig, axes = plt.subplots(1, len(kinds), figsize=(4.0 * len(kinds), 3.2), squeeze=False)
    for ax, kind in zip(axes[0], kinds):
        hist = histograms[kind]
        edges = hist["edges"]
        counts = list(hist["counts"]) + [hist["overflow"]]
        width = edges[1] - edges[0]
        centers = [e + width / 2 for e in edges[:-1]] + [edges[-1] + width / 2]
        ax.bar(centers, counts, width=width * 0.9, color="#348abd")
        ax.set_title(f"g = {kind}", fontsize=9)
        ax.set_xlabel("|dev NLL - H(Y|X)| (nats)")
        ax.set_ylabel("configs")
    return _finish(fig, path, fingerprint)


def plot_knn_compare(rows: list[dict], path, fingerprint: str | None = None) -> Path:
    """kNN conditional-entropy estimates vs control losses per seed."""
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    seeds = [r["seed"] for r in rows]
    ax.plot(seeds, [r["h_y_given_xs_knn"] for r in rows], "o-", label="kNN H(Y|Xs)", color="#348abd")
    ax.plot(seeds, [r["nll_control"] for r in rows], "s-", label="control NLL", color="#e24a33")
    ax.plot(seeds, [r["h_y"] for r in rows], "--", lw=0.8, color="k", label="H(Y)")
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("seed")
    ax.set_ylabel("nats")
    ax.legend(frameon=False, fontsize=8)
    return _finish(fig, path, fingerprint)
