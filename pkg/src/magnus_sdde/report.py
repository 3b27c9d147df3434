"""CSV and figure output for reports, trajectories and fields.

Numbers are written with 17 significant digits so CSV files round-trip
exactly. Figures are rendered with matplotlib's Agg canvas (no display
needed); SVG output tags each drawn series with an ``id`` so the documents
can be inspected structurally.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import ConvergenceReport, SchemeResult  # noqa: E402
from .model import Trajectory  # noqa: E402

__all__ = [
    "fmt",
    "write_report_csv",
    "read_report_csv",
    "plot_report",
    "write_trajectory_csv",
    "write_field_csv",
    "read_field_csv",
    "plot_field",
    "plot_slices",
    "emit",
]

REPORT_COLUMNS = ("scheme", "h", "mse", "slope")

_LABELS = {"em": "EM", "milstein": "Milstein", "mem": "MEM", "mm": "MM"}
_STYLE = {
    "em": dict(color="tab:blue", linestyle="--", marker="o"),
    "milstein": dict(color="tab:orange", linestyle="--", marker="s"),
    "mem": dict(color="tab:blue", linestyle="-", marker="o"),
    "mm": dict(color="tab:orange", linestyle="-", marker="s"),
}


def fmt(x) -> str:
    return format(float(x), ".17g")


def _open(path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_report_csv(report: ConvergenceReport, path) -> None:
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for scheme, h, mse, slope in report.rows():
            w.writerow([scheme, fmt(h), fmt(mse), fmt(slope)])


def read_report_csv(path) -> ConvergenceReport:
    """Rebuild the per-scheme (h, mse, slope) content of a report CSV."""
    report = ConvergenceReport()
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != REPORT_COLUMNS:
        raise ValueError(f"{path}: not a convergence report")
    for scheme, h, mse, slope in rows[1:]:
        res = report.results.setdefault(scheme, SchemeResult(scheme, [], [], []))
        res.steps.append(float(h))
        res.mse.append(float(mse))
        res.diverged.append(float(mse) == float("inf"))
        res.slope = float(slope)
    return report


def plot_report(report: ConvergenceReport, path, title: str | None = None) -> None:
    """Log-log error graph with reference slopes 1/2 and 1."""
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    finite = []
    for r in report.results.values():
        pts = [(h, e) for h, e in r.fitted_points() if e > 0]
        if not pts:
            continue
        h, e = np.array(pts).T
        finite.extend(e)
        label = f"{_LABELS.get(r.scheme, r.scheme)} (slope {r.slope:.2f})"
        (line,) = ax.loglog(h, e, label=label, **_STYLE.get(r.scheme, {}))
        line.set_gid(f"scheme-{r.scheme}")
    steps = sorted({h for r in report.results.values() for h in r.steps})
    if steps:
        hs = np.array([steps[0], steps[-1]])
        anchor = np.exp(np.mean(np.log(finite))) if finite else 1.0
        h_mid = np.sqrt(hs[0] * hs[-1])
        for order, gid, style in ((0.5, "ref-slope-0.5", ":"), (1.0, "ref-slope-1", "-.")):
            (line,) = ax.loglog(
                hs, anchor * (hs / h_mid) ** order, color="gray", linestyle=style,
                label=f"order {order:g}",
            )
            line.set_gid(gid)
    ax.set_xlabel("step size h")
    ax.set_ylabel("mean-square error at T")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    _save(fig, path)


def _save(fig, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, bbox_inches="tight")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """One row per mesh time: ``t, y1..yd`` (single trial only)."""
    values = traj.values
    if values.ndim != 2:
        raise ValueError("write_trajectory_csv takes a single-trial trajectory")
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"y{i + 1}" for i in range(values.shape[1])])
        for t, row in zip(traj.times, values):
            w.writerow([fmt(t)] + [fmt(v) for v in row])


def write_field_csv(times, grid, values, path) -> None:
    """Rows are times, columns grid points; the header carries the x values."""
    values = np.asarray(values)
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [fmt(x) for x in grid])
        for t, row in zip(times, values):
            w.writerow([fmt(t)] + [fmt(v) for v in row])


def read_field_csv(path):
    """Inverse of :func:`write_field_csv`: ``(times, grid, values)``."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    grid = np.array([float(x) for x in rows[0][1:]])
    body = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(grid) + 1)
    return body[:, 0], grid, body[:, 1:]


def plot_field(times, grid, values, path, title=None, label="U(t, x)") -> None:
    """Heat map with time on the horizontal axis."""
    values = np.asarray(values, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 3.6))
    mesh = ax.pcolormesh(times, grid, values.T, shading="nearest", cmap="coolwarm")
    mesh.set_gid("field")
    fig.colorbar(mesh, ax=ax, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("x")
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_slices(slices, path, labels=None, title=None) -> None:
    """Overlay cross sections (e.g. with and without delay)."""
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for i, s in enumerate(slices):
        label = labels[i] if labels else None
        (line,) = ax.plot(s.coords, s.values, label=label)
        line.set_gid(f"slice-{i}")
    xlabel = "x" if slices and slices[0].axis == "time" else "t"
    ax.set_xlabel(xlabel)
    ax.set_ylabel("U")
    if title:
        ax.set_title(title)
    if labels:
        ax.legend(fontsize=8)
    _save(fig, path)


def emit(obj, fmt_: str, path, **kwargs) -> None:
    """Write a report, trajectory or field tuple ``(times, grid, values)``.

    ``fmt_`` is "csv" or "svg" (any matplotlib-supported extension works for
    figures).
    """
    if isinstance(obj, ConvergenceReport):
        (write_report_csv if fmt_ == "csv" else plot_report)(obj, path, **kwargs)
    elif isinstance(obj, Trajectory):
        if fmt_ != "csv":
            raise ValueError("trajectories are written as csv")
        write_trajectory_csv(obj, path)
    elif isinstance(obj, tuple) and len(obj) == 3:
        (write_field_csv if fmt_ == "csv" else plot_field)(*obj, path, **kwargs)
    else:
        raise TypeError(f"cannot emit {type(obj).__name__}")
