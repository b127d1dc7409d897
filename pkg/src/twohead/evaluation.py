"""Evaluation and analysis: open-set prediction, per-class recall with a
unified unknown class, divergence density estimates, and 2-D decision
boundary grids with SVG rendering."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import ClassRole, DomainDataset
from .errors import ConfigError, UsageError
from .losses import crs_rows
from .nn import TwoHeadModel, forward

UNKNOWN = -1


def predict(model: TwoHeadModel, x: np.ndarray, delta: float
            ) -> tuple[np.ndarray, np.ndarray]:
    """Classify a batch: a sample whose crs exceeds ``delta`` is rejected
    as unknown (label -1); otherwise the head-averaged probabilities
    decide, ties going to the lower class index.

    Returns (labels, per-sample crs).
    """
    p1, p2, _ = forward(model, x)
    l_crs = crs_rows(p1, p2)
    mean_p = 0.5 * (p1 + p2)
    labels = np.argmax(mean_p, axis=1).astype(np.int64)
    labels[l_crs > delta] = UNKNOWN
    return labels, l_crs


@dataclass
class EvalReport:
    per_class_accuracy: dict[int, float]   # class index (UNKNOWN for private)
    average_accuracy: float
    common_divergences: np.ndarray
    private_divergences: np.ndarray
    density_curves: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    delta: float = 0.0

    @property
    def common_accuracy(self) -> float:
        vals = [v for k, v in self.per_class_accuracy.items() if k != UNKNOWN]
        return float(np.mean(vals))

    @property
    def unknown_recall(self) -> float:
        return self.per_class_accuracy.get(UNKNOWN, float("nan"))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["class", "role", "recall"])
            for cls, rec in sorted(self.per_class_accuracy.items(), key=lambda kv: kv[0]):
                if cls == UNKNOWN:
                    writer.writerow(["unknown", ClassRole.TARGET_PRIVATE.value, repr(rec)])
                else:
                    writer.writerow([cls, ClassRole.COMMON.value, repr(rec)])
            writer.writerow(["average", "", repr(self.average_accuracy)])


def evaluate(model: TwoHeadModel, target: DomainDataset, delta: float) -> EvalReport:
    """Per-class recall over the common classes plus one unified unknown
    class, averaged with equal weight across those |C|+1 entries."""
    preds, l_crs = predict(model, target.features, delta)
    roles = target.class_roles
    true = target.true_labels

    per_class: dict[int, float] = {}
    for cls in target.common_classes():
        mask = true == cls
        if mask.any():
            per_class[cls] = float((preds[mask] == cls).mean())

    private_mask = np.array([roles[t] is ClassRole.TARGET_PRIVATE for t in true])
    if private_mask.any():
        per_class[UNKNOWN] = float((preds[private_mask] == UNKNOWN).mean())
    else:
        warnings.warn("target has no private samples; averaging over the "
                      "common classes only", stacklevel=2)

    common_mask_true = np.array([roles[t] is ClassRole.COMMON for t in true])
    report = EvalReport(
        per_class_accuracy=per_class,
        average_accuracy=float(np.mean(list(per_class.values()))),
        common_divergences=l_crs[common_mask_true],
        private_divergences=l_crs[private_mask],
        delta=delta,
    )
    _attach_density_curves(report)
    return report


def _attach_density_curves(report: EvalReport, points: int = 256) -> None:
    groups = {"common": report.common_divergences,
              "private": report.private_divergences}
    usable = {k: v for k, v in groups.items()
              if v.size >= 2 and float(np.std(v, ddof=1)) > 0.0}
    if not usable:
        return
    h = max(scott_bandwidth(v) for v in usable.values())
    lo = min(float(v.min()) for v in usable.values()) - 5.0 * h
    hi = max(float(v.max()) for v in usable.values()) + 5.0 * h
    grid = np.linspace(lo, hi, points)
    for name, v in usable.items():
        report.density_curves[name] = (grid, divergence_density(v, grid))


def scott_bandwidth(values: np.ndarray) -> float:
    """Scott's rule for 1-D data: sample stddev times n^(-1/5)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise UsageError("bandwidth needs at least 2 values")
    sigma = float(np.std(values, ddof=1))
    if sigma == 0.0:
        raise UsageError("zero variance: jitter the values before estimating density")
    return sigma * values.size ** (-0.2)


def divergence_density(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Gaussian KDE with Scott's-rule bandwidth, evaluated on ``grid``."""
    values = np.asarray(values, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    h = scott_bandwidth(values)
    z = (grid[:, None] - values[None, :]) / h
    return np.exp(-0.5 * z * z).sum(axis=1) / (values.size * h * np.sqrt(2.0 * np.pi))


@dataclass
class BoundaryGrid:
    xs: np.ndarray            # (res,) cell x coordinates
    ys: np.ndarray            # (res,) cell y coordinates
    pred1: np.ndarray         # (res, res) head-1 argmax, row i = ys[i]
    pred2: np.ndarray         # (res, res) head-2 argmax
    l_crs: np.ndarray         # (res, res)
    unknown: np.ndarray       # (res, res) bool, l_crs > delta
    delta: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "y", "pred1", "pred2", "l_crs", "unknown"])
            for j, y in enumerate(self.ys):
                for i, x in enumerate(self.xs):
                    writer.writerow([repr(float(x)), repr(float(y)),
                                     int(self.pred1[j, i]), int(self.pred2[j, i]),
                                     repr(float(self.l_crs[j, i])),
                                     int(self.unknown[j, i])])


def boundary_grid(model: TwoHeadModel, bounds: tuple[tuple[float, float], tuple[float, float]],
                  resolution: int, delta: float) -> BoundaryGrid:
    """Evaluate both heads on a regular 2-D grid (resolution cells per
    axis)."""
    if model.input_dim != 2:
        raise ConfigError("boundary grids need a 2-D input model")
    (x0, x1), (y0, y1) = bounds
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    p1, p2, _ = forward(model, pts)
    l_crs = crs_rows(p1, p2).reshape(resolution, resolution)
    return BoundaryGrid(
        xs=xs, ys=ys,
        pred1=np.argmax(p1, axis=1).reshape(resolution, resolution),
        pred2=np.argmax(p2, axis=1).reshape(resolution, resolution),
        l_crs=l_crs,
        unknown=l_crs > delta,
        delta=delta,
    )


# region fills for agreed classes, then scatter colors for source points
_REGION_COLORS = ["#f7b6c2", "#b6d4f7", "#f7ecb6", "#c9f7b6", "#e0b6f7"]
_POINT_COLORS = ["#d62728", "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd"]
_UNKNOWN_COLOR = "#b0b0b0"
_DISAGREE_COLOR = "#ffffff"


def write_boundary_svg(grid: BoundaryGrid, path,
                       source: DomainDataset | None = None,
                       target: DomainDataset | None = None,
                       size: int = 640) -> None:
    """Self-contained SVG: regions colored by the class both heads agree
    on, gray where the sample would be rejected as unknown, plus optional
    dataset scatter overlays."""
    res = len(grid.xs)
    cell = size / res
    x0, x1 = float(grid.xs[0]), float(grid.xs[-1])
    y0, y1 = float(grid.ys[0]), float(grid.ys[-1])

    def sx(x: float) -> float:
        return (x - x0) / (x1 - x0) * size

    def sy(y: float) -> float:
        return size - (y - y0) / (y1 - y0) * size

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
             f'height="{size}" viewBox="0 0 {size} {size}">']
    for j in range(res):
        for i in range(res):
            if grid.unknown[j, i]:
                color = _UNKNOWN_COLOR
            elif grid.pred1[j, i] == grid.pred2[j, i]:
                color = _REGION_COLORS[int(grid.pred1[j, i]) % len(_REGION_COLORS)]
            else:
                color = _DISAGREE_COLOR
            cx = sx(float(grid.xs[i])) - cell / 2
            cy = sy(float(grid.ys[j])) - cell / 2
            parts.append(f'<rect x="{cx:.2f}" y="{cy:.2f}" width="{cell:.2f}" '
                         f'height="{cell:.2f}" fill="{color}"/>')
    if source is not None and source.observed_labels is not None:
        for (px, py), lab in zip(source.features, source.observed_labels):
            color = _POINT_COLORS[int(lab) % len(_POINT_COLORS)]
            parts.append(f'<circle cx="{sx(px):.2f}" cy="{sy(py):.2f}" r="2.5" '
                         f'fill="{color}" stroke="#333333" stroke-width="0.4"/>')
    if target is not None:
        for px, py in target.features:
            parts.append(f'<circle cx="{sx(px):.2f}" cy="{sy(py):.2f}" r="2.0" '
                         f'fill="#ffffff" stroke="#333333" stroke-width="0.5"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))


def density_to_csv(report: EvalReport, path) -> None:
    """x,pdf_common,pdf_private on a shared grid (empty cells when a curve
    is unavailable)."""
    common = report.density_curves.get("common")
    private = report.density_curves.get("private")
    grid = (common or private or (np.array([]),))[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "pdf_common", "pdf_private"])
        for i, x in enumerate(grid):
            row = [repr(float(x))]
            row.append(repr(float(common[1][i])) if common is not None else "")
            row.append(repr(float(private[1][i])) if private is not None else "")
            writer.writerow(row)
