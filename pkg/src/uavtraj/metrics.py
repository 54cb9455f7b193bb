"""Regression metrics over flattened prediction/target scalars, and report tables."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyInput

REPORT_COLUMNS = ["model_id", "channel", "norm_method", "hidden_dim", "num_layers",
                  "mse", "rmse", "mae", "r2", "adjusted_r2", "n_samples"]
# width offset in the complexity-penalised R^2, kept verbatim from the reference formula
ADJ_R2_OFFSET = 128


@dataclass
class MetricsReport:
    mse: float
    rmse: float
    mae: float
    r2: float | None  # None when every target scalar is identical
    adjusted_r2: float | None
    n_samples: int
    model_id: str = ""
    channel: str = ""
    norm_method: str = ""
    hidden_dim: int | None = None
    num_layers: int | None = None
    per_axis_rmse: tuple[float, ...] = field(default_factory=tuple)

    @property
    def r2_undefined(self) -> bool:
        return self.r2 is None

    def row(self) -> dict:
        return {k: getattr(self, k) for k in REPORT_COLUMNS}


def adjusted_r2(r2: float, num_layers: int) -> float:
    """``r2 / (128 + num_layers)``.

    This is not the textbook adjusted R^2; it reproduces the penalised score
    used for the layer-depth sweep so numbers stay comparable.
    """
    if num_layers < 1:
        raise ValueError("num_layers must be >= 1")
    return r2 / (ADJ_R2_OFFSET + num_layers)


def evaluate(preds, targets, *, model_id: str = "", channel: str = "", norm_method: str = "",
             hidden_dim: int | None = None, num_layers: int | None = None) -> MetricsReport:
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.size == 0 or y.size == 0:
        raise EmptyInput("need at least one prediction/target pair")
    if p.shape != y.shape:
        raise DimensionMismatch(f"preds {p.shape} vs targets {y.shape}")
    err = (y - p).reshape(-1)
    sse = math.fsum(err * err)
    mse = sse / err.size
    flat_y = y.reshape(-1)
    y_bar = math.fsum(flat_y) / flat_y.size
    dev = flat_y - y_bar
    sst = math.fsum(dev * dev)
    r2 = None if sst == 0.0 else 1.0 - sse / sst
    adj = None if r2 is None or num_layers is None else adjusted_r2(r2, num_layers)
    per_axis = ()
    if y.ndim >= 2:
        axis_err = (y - p).reshape(-1, y.shape[-1])
        per_axis = tuple(float(v) for v in np.sqrt(np.mean(axis_err * axis_err, axis=0)))
    n_samples = y.shape[0] if y.ndim == 3 else 1
    return MetricsReport(
        mse=mse, rmse=math.sqrt(mse), mae=math.fsum(np.abs(err)) / err.size, r2=r2, adjusted_r2=adj,
        n_samples=n_samples, model_id=model_id, channel=channel, norm_method=norm_method,
        hidden_dim=hidden_dim, num_layers=num_layers, per_axis_rmse=per_axis)


def sci(value) -> str:
    """Two significant digits in scientific notation, e.g. ``2.2E-08``."""
    if value is None:
        return "n/a"
    return f"{value:.1E}"


GRID_COLUMNS = [("Model", "model_id"), ("Complexity", None), ("Type", "channel"), ("Norm", "norm_method"),
                ("MSE", "mse"), ("RMSE", "rmse"), ("MAE", "mae"), ("R2", "r2"), ("Adj. R2", "adjusted_r2")]
COMPARISON_COLUMNS = [("Model", "model_id"), ("Type", "channel"), ("Norm", "norm_method"), ("Average RMSE", "rmse")]


def _cell(report: MetricsReport, attr: str | None) -> str:
    if attr is None:
        return f"{report.hidden_dim} units, {report.num_layers} layers"
    value = getattr(report, attr)
    return sci(value) if attr in ("mse", "rmse", "mae", "r2", "adjusted_r2") else str(value)


def report_table(reports: list[MetricsReport], layout: str = "grid") -> tuple[str, str]:
    """Render ``(text_table, csv_text)``; rows sorted by model id.

    The CSV always carries the full column set at full precision; the text
    table shows the layout's columns at two significant digits.
    """
    if not reports:
        raise EmptyInput("no reports to tabulate")
    columns = {"grid": GRID_COLUMNS, "comparison": COMPARISON_COLUMNS}[layout]
    rows = sorted(reports, key=lambda r: _model_sort_key(r.model_id))
    cells = [[title for title, _ in columns]] + [[_cell(r, attr) for _, attr in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = []
    for i, row in enumerate(cells):
        lines.append(" | ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("-+-".join("-" * w for w in widths))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow(["" if v is None else (f"{v:.17g}" if isinstance(v, float) else v) for v in r.row().values()])
    return "\n".join(lines) + "\n", buf.getvalue()


def _model_sort_key(model_id: str):
    # GRU_2 sorts before GRU_10
    head = model_id.rstrip("0123456789")
    tail = model_id[len(head):]
    return (head, int(tail) if tail else -1, model_id)
