"""Post-hoc report generation from metrics CSV files."""

import csv
import logging
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)


def read_metrics(path):
    """Parse a metrics.csv into {column: list of floats} (pl_precision blanks -> None)."""
    with open(path) as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or "step" not in reader.fieldnames:
            raise ValueError(f"{path}: not a metrics CSV")
        columns = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name in reader.fieldnames:
                value = row[name]
                columns[name].append(float(value) if value != "" else None)
    return columns


def generate_report(run_dirs, out_dir):
    """Write loss/threshold curves and a combined CSV for a set of run directories.

    Malformed or empty metrics files are skipped with a notice. Returns the
    list of written file paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    runs = {}
    for run_dir in run_dirs:
        name = os.path.basename(os.path.normpath(run_dir))
        path = os.path.join(run_dir, "metrics.csv")
        try:
            columns = read_metrics(path)
        except (OSError, ValueError) as exc:
            logger.warning("skipping %s: %s", path, exc)
            continue
        if not columns["step"]:
            logger.warning("skipping %s: no steps logged", path)
            continue
        runs[name] = columns
    written = []
    if not runs:
        return written

    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for name, cols in runs.items():
        axes[0].plot(cols["step"], cols["L_match"], label=name)
        axes[1].plot(cols["step"], cols["total"], label=name)
    axes[0].set_title("consistency loss")
    axes[1].set_title("total loss")
    for ax in axes:
        ax.set_xlabel("step")
        ax.legend(fontsize=7)
    tag = "_".join(sorted(runs)) if len(runs) <= 3 else f"{len(runs)}_runs"
    loss_path = os.path.join(out_dir, f"losses_{tag}.png")
    fig.savefig(loss_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(loss_path)

    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for name, cols in runs.items():
        axes[0].plot(cols["step"], cols["tau_global"], label=name)
        axes[1].plot(cols["step"], cols["mask_rate"], label=name)
    axes[0].set_title("global threshold")
    axes[1].set_title("mask rate")
    for ax in axes:
        ax.set_xlabel("step")
        ax.legend(fontsize=7)
    thr_path = os.path.join(out_dir, f"thresholds_{tag}.png")
    fig.savefig(thr_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(thr_path)

    combined_path = os.path.join(out_dir, f"combined_{tag}.csv")
    with open(combined_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["run", "step", "L_match", "total", "tau_global", "mask_rate"])
        for name, cols in runs.items():
            for i in range(len(cols["step"])):
                writer.writerow([name, cols["step"][i], cols["L_match"][i],
                                 cols["total"][i], cols["tau_global"][i],
                                 cols["mask_rate"][i]])
    written.append(combined_path)
    return written
