"""Metrics emission: per-epoch CSV, per-layer summary table, and figures.

The CSV carries one row per layer per epoch. The summary table mirrors the
usual pruning-report layout: per-layer original node/weight counts, retained
percentages, a weighted Total row, and the unpruned/pruned precision and
loss (means over the last up-to-10 epochs before the first prune event and
of the whole run, respectively).
"""

import csv
import os

import numpy as np

from .errors import RlspruneError

CSV_HEADER = ["epoch", "loss", "precision", "prune_event", "layer",
              "retained_nodes_pct", "retained_weights_pct"]


def _tail_mean(values, n=10):
    tail = values[-n:] if len(values) > n else values
    return float(np.mean(tail)) if tail else float("nan")


def summarize(metrics):
    """Aggregate a RunMetrics into the summary-table numbers."""
    epochs = metrics.epochs
    if not epochs:
        raise RlspruneError("cannot summarize an empty run")
    first_prune = next((i for i, e in enumerate(epochs) if e.prune_event), None)
    pre = epochs if first_prune is None else epochs[:first_prune]
    unpruned_prec = _tail_mean([e.precision for e in pre])
    unpruned_loss = _tail_mean([e.loss for e in pre])
    pruned_prec = _tail_mean([e.precision for e in epochs])
    pruned_loss = _tail_mean([e.loss for e in epochs])
    final = epochs[-1]
    total_units = sum(metrics.original_units)
    total_weights = sum(metrics.original_weights)
    total_nodes_pct = sum(
        p * u for p, u in zip(final.nodes_pct, metrics.original_units)
    ) / total_units
    total_weights_pct = sum(
        p * w for p, w in zip(final.weights_pct, metrics.original_weights)
    ) / total_weights
    return {
        "unpruned_precision": unpruned_prec, "unpruned_loss": unpruned_loss,
        "pruned_precision": pruned_prec, "pruned_loss": pruned_loss,
        "total_nodes_pct": total_nodes_pct, "total_weights_pct": total_weights_pct,
    }


def summary_path(metrics_path):
    stem, ext = os.path.splitext(metrics_path)
    return f"{stem}_summary{ext or '.csv'}"


def emit_metrics(metrics, report, path, figures=True):
    """Write the per-epoch CSV, the summary table, and (optionally) figures.

    Returns the list of files written.
    """
    written = [path]
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for em in metrics.epochs:
                for name, npct, wpct in zip(metrics.layer_names,
                                            em.nodes_pct, em.weights_pct):
                    writer.writerow([em.epoch, f"{em.loss:.6f}",
                                     f"{em.precision:.4f}", em.prune_event, name,
                                     f"{npct:.4f}", f"{wpct:.4f}"])
    except OSError as exc:
        raise RlspruneError(f"cannot write metrics to {path}: {exc}") from exc

    spath = summary_path(path)
    agg = summarize(metrics)
    final = metrics.epochs[-1]
    try:
        with open(spath, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["layer", "n", "w", "n_pct", "w_pct"])
            for name, units, weights, npct, wpct in zip(
                metrics.layer_names, metrics.original_units,
                metrics.original_weights, final.nodes_pct, final.weights_pct
            ):
                writer.writerow([name, units, weights, f"{npct:.1f}", f"{wpct:.1f}"])
            writer.writerow(["Total", sum(metrics.original_units),
                             sum(metrics.original_weights),
                             f"{agg['total_nodes_pct']:.1f}",
                             f"{agg['total_weights_pct']:.1f}"])
            writer.writerow(["unpruned_precision", f"{agg['unpruned_precision']:.2f}",
                             "pruned_precision", f"{agg['pruned_precision']:.2f}", "", ""])
            writer.writerow(["unpruned_loss", f"{agg['unpruned_loss']:.4f}",
                             "pruned_loss", f"{agg['pruned_loss']:.4f}", "", ""])
    except OSError as exc:
        raise RlspruneError(f"cannot write summary to {spath}: {exc}") from exc
    written.append(spath)

    if figures:
        written.extend(render_figures(metrics, os.path.dirname(path) or "."))
    return written


def render_figures(metrics, out_dir):
    """Render retained-node, retained-weight and precision curves as PNGs."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    epochs = [e.epoch for e in metrics.epochs]
    files = []

    def curve_plot(fname, title, ylabel, series):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, values in series:
            ax.plot(epochs, values, label=label)
        ax.set_xlabel("epoch")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        if len(series) > 1:
            ax.legend(fontsize=8, ncol=2)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        out = os.path.join(out_dir, fname)
        fig.savefig(out, dpi=120)
        plt.close(fig)
        files.append(out)

    per_layer_nodes = [
        (name, [e.nodes_pct[i] for e in metrics.epochs])
        for i, name in enumerate(metrics.layer_names)
    ]
    per_layer_weights = [
        (name, [e.weights_pct[i] for e in metrics.epochs])
        for i, name in enumerate(metrics.layer_names)
    ]
    curve_plot("retained_nodes.png", "Retained nodes", "retained nodes (%)",
               per_layer_nodes)
    curve_plot("retained_weights.png", "Retained weights", "retained weights (%)",
               per_layer_weights)
    curve_plot("precision.png", "Test precision", "precision (%)",
               [("test", [e.precision for e in metrics.epochs])])
    return files
