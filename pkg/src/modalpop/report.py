"""Tables and figures for identification results.

Emits the population-statistics CSV (MAC / frequency error / damping error
by mode and split), per-mode decomposition panels (response, PSD with
reference markers, shape over topology), loss curves, population
histograms, and method-comparison bar charts.
"""

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .identify import IdentificationReport, psd

METRIC_LABELS = {
    "mac": "MAC",
    "freq_err_pct": "Frequency errors (%)",
    "damp_err_pct": "Damping ratio errors (%)",
}


def statistics_table(
    report: IdentificationReport, n_modes: int = 4
) -> pd.DataFrame:
    """Mean/median/std per metric per mode, split by train vs held-out."""
    rows = []
    for metric in METRIC_LABELS:
        for mode in range(1, n_modes + 1):
            row = {"metric": METRIC_LABELS[metric], "mode": mode}
            for label, splits in (
                ("train", ("train",)),
                ("held_out", ("validation", "test")),
            ):
                stats = report.statistics(splits=splits, n_modes=n_modes)
                cell = stats[mode][metric]
                row[f"{label}_mean"] = cell["mean"]
                row[f"{label}_median"] = cell["median"]
                row[f"{label}_std"] = cell["std"]
                row[f"{label}_count"] = cell["count"]
            rows.append(row)
    return pd.DataFrame(rows)


def write_statistics_csv(report: IdentificationReport, path, n_modes: int = 4):
    df = statistics_table(report, n_modes)
    held_out = [s for s in report.structures if s.split_tag != "train"]
    df.to_csv(path, index=False)
    if not held_out:
        with open(path, "a") as fh:
            fh.write("# held-out split empty: held_out columns omitted from use\n")
    return df


def comparison_table(reports: dict, n_modes: int = 4) -> pd.DataFrame:
    """Side-by-side statistics for several methods on the train split."""
    rows = []
    for metric in METRIC_LABELS:
        for mode in range(1, n_modes + 1):
            row = {"metric": METRIC_LABELS[metric], "mode": mode}
            for name, report in reports.items():
                stats = report.statistics(splits=("train",), n_modes=n_modes)
                cell = stats[mode][metric]
                row[f"{name}_mean"] = cell["mean"]
                row[f"{name}_median"] = cell["median"]
                row[f"{name}_std"] = cell["std"]
            rows.append(row)
    return pd.DataFrame(rows)


def plot_loss_curves(log, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(log.epochs, log.train_loss, label="training")
    ax.plot(log.epochs, log.val_loss, label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_decomposition_panels(
    truss, result, reference, mask, fs, path, max_modes: int | None = None
):
    """P rows x 3 columns: modal response, PSD with reference-frequency
    markers, and mode shape drawn over the truss topology."""
    q = result.modal_responses
    phi = result.mode_shapes
    n_rows = q.shape[0] if max_modes is None else min(max_modes, q.shape[0])
    fig, axes = plt.subplots(n_rows, 3, figsize=(12, 2.2 * n_rows), squeeze=False)
    t = np.arange(q.shape[1]) / fs
    coords = truss.node_coords
    for p in range(n_rows):
        ax = axes[p][0]
        ax.plot(t, q[p], lw=0.6)
        ax.set_ylabel(f"mode {p + 1}")
        if p == 0:
            ax.set_title("modal response")

        ax = axes[p][1]
        freqs, power = psd(q[p], fs, pad_factor=4)
        ax.plot(freqs, power, lw=0.8)
        if reference is not None:
            for f_ref in reference.frequencies_Hz[:4]:
                ax.axvline(f_ref, color="r", ls="--", lw=0.8)
        ax.set_xlim(0, min(25, fs / 2))
        if p == 0:
            ax.set_title("PSD")

        ax = axes[p][2]
        for i, j in truss.edges:
            ax.plot(coords[[i, j], 0], coords[[i, j], 1], "k--", lw=0.4)
        scale = 0.15 * np.ptp(coords[:, 0])
        deformed = coords[:, 1] + scale * phi[:, p]
        measured = mask if mask is not None else np.zeros(len(coords), dtype=bool)
        ax.plot(coords[:, 0], deformed, "-", color="C0", lw=1.0)
        ax.scatter(coords[measured, 0], deformed[measured], c="r", s=12, zorder=3)
        ax.scatter(coords[~measured, 0], deformed[~measured], c="g", s=12, zorder=3)
        ax.set_xticks([])
        ax.set_yticks([])
        if p == 0:
            ax.set_title("mode shape")
    axes[-1][0].set_xlabel("time (s)")
    axes[-1][1].set_xlabel("frequency (Hz)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _hist(ax, values, label):
    values = np.asarray(values, dtype=float)
    span = values.max() - values.min()
    if span <= 1e-12 * max(1.0, np.abs(values).max()):
        # degenerate range (e.g. damping pinned at the design value)
        center = values.mean()
        pad = 0.05 * max(abs(center), 1e-6)
        ax.hist(values, bins=3, range=(center - pad, center + pad),
                alpha=0.5, label=label)
    else:
        ax.hist(values, bins=15, alpha=0.5, label=label)


def plot_population_histograms(references, path, n_modes: int = 6):
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for mode in range(n_modes):
        freqs = [r.frequencies_Hz[mode] for r in references]
        zetas = [r.damping_ratios[mode] for r in references]
        _hist(axes[0], freqs, f"mode {mode + 1}")
        _hist(axes[1], zetas, f"mode {mode + 1}")
    axes[0].set_xlabel("natural frequency (Hz)")
    axes[1].set_xlabel("damping ratio")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_method_comparison(reports: dict, path, n_modes: int = 4):
    """Grouped bars of mean MAC per mode for each method."""
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / len(reports)
    x = np.arange(1, n_modes + 1)
    for k, (name, report) in enumerate(reports.items()):
        stats = report.statistics(splits=("train",), n_modes=n_modes)
        means = [stats[m]["mac"]["mean"] for m in x]
        ax.bar(x + (k - len(reports) / 2 + 0.5) * width, means, width, label=name)
    ax.set_xticks(x)
    ax.set_xlabel("mode")
    ax.set_ylabel("mean MAC")
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_report(
    report: IdentificationReport,
    out_dir,
    log=None,
    references=None,
    comparisons: dict | None = None,
    n_modes: int = 4,
):
    """Write every table/figure artifact for one identification run."""
    os.makedirs(out_dir, exist_ok=True)
    write_statistics_csv(report, os.path.join(out_dir, "statistics.csv"), n_modes)
    if log is not None:
        plot_loss_curves(log, os.path.join(out_dir, "loss_curves.png"))
    if references:
        plot_population_histograms(
            references, os.path.join(out_dir, "population_histograms.png")
        )
    if comparisons:
        all_reports = {"proposed": report, **comparisons}
        comparison_table(all_reports, n_modes).to_csv(
            os.path.join(out_dir, "method_comparison.csv"), index=False
        )
        plot_method_comparison(
            all_reports, os.path.join(out_dir, "method_comparison.png"), n_modes
        )
