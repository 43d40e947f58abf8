"""Benchmark reports: CSV tables, gnuplot-style plot data, rendered figures."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .bench import ExperimentRecord, mean_metric, summarize_speedup

_METRICS = (
    ("offline", "offline_ms", "offline time [ms]"),
    ("online", "online_ms", "online time [ms]"),
    ("relerr", "rel_err", "relative output error"),
)


def write_results_csv(records: list[ExperimentRecord], path) -> None:
    lines = [
        "# morinv-results v1",
        "suite,model,method,size,N,P_dim,R,seed,offline_ms,online_ms,rel_err,status",
    ]
    for r in records:
        lines.append(
            f"{r.suite},{r.model},{r.method},{r.size},{r.N},{r.P_dim},{r.R},{r.seed},"
            f"{r.offline_ms:.6g},{r.online_ms:.6g},{r.rel_err:.17g},{r.status}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_speedup_csv(records: list[ExperimentRecord], path) -> None:
    lines = [
        "# morinv-speedup v1",
        "suite,size,method,total_ms,speedup_vs_full_order,speedup_vs_original",
    ]
    for row in summarize_speedup(records):
        lines.append(
            f"{row.suite},{row.size},{row.method},{row.total_ms:.6g},"
            f"{row.vs_full_order:.6g},{row.vs_original:.6g}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def _table(records):
    sizes = sorted({r.size for r in records})
    methods = list(dict.fromkeys(r.method for r in records))
    return sizes, methods


def write_plot_data(records: list[ExperimentRecord], out_dir) -> list[Path]:
    """One whitespace-delimited .dat file per metric: rows are sizes, one
    column per method, seed-averaged; nan marks missing/infeasible cells."""
    out_dir = Path(out_dir)
    sizes, methods = _table(records)
    paths = []
    for name, metric, label in _METRICS:
        path = out_dir / f"plot_{name}.dat"
        lines = [f"# {label} per size, seed-averaged", "# size " + " ".join(methods)]
        for size in sizes:
            values = " ".join("%.17g" % mean_metric(records, size, m, metric) for m in methods)
            lines.append(f"{size} {values}")
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    return paths


def render_figures(records: list[ExperimentRecord], out_dir) -> list[Path]:
    """Render one PNG per metric next to the plot data (offline time, online
    time, relative error against size)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    sizes, methods = _table(records)
    paths = []
    for name, metric, label in _METRICS:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for method in methods:
            values = np.array([mean_metric(records, size, method, metric) for size in sizes])
            mask = np.isfinite(values) & (values > 0)
            if not mask.any():
                continue
            ax.plot(np.asarray(sizes)[mask], values[mask], marker="o", label=method)
        ax.set_yscale("log")
        ax.set_xlabel("problem size")
        ax.set_ylabel(label)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"fig_{name}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths


def write_all(records: list[ExperimentRecord], out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_results_csv(records, out_dir / "results.csv")
    write_speedup_csv(records, out_dir / "speedup.csv")
    write_plot_data(records, out_dir)
    render_figures(records, out_dir)
