"""Depth metrics on normalized disparity and K-prediction aggregation."""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

log = logging.getLogger(__name__)

NMAE_EPS = 1e-6
ABSREL_MIN_GT = 1e-4
DELTA_THRESHOLD = 1.25
METRIC_NAMES = ("mae", "nmae", "absrel", "delta_125")
ERROR_METRICS = ("mae", "nmae", "absrel")


class MetricError(ValueError):
    pass


def _valid(pred, gt, mask) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise MetricError(f"shape mismatch {pred.shape} vs {gt.shape}")
    mask = np.ones(gt.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != gt.shape:
        raise MetricError("mask shape mismatch")
    if not mask.any():
        raise MetricError("no valid pixels")
    return pred[mask], gt[mask]


def mae(pred, gt, mask=None) -> float:
    p, y = _valid(pred, gt, mask)
    return float(np.mean(np.abs(y - p)))


def nmae(pred, gt, mask=None, eps: float = NMAE_EPS) -> float:
    """MAE divided by the ground-truth disparity range (+eps).

    A constant ground truth gives ``mae / eps``.
    """
    p, y = _valid(pred, gt, mask)
    return float(np.mean(np.abs(y - p)) / (y.max() - y.min() + eps))


def absrel(pred, gt, mask=None, min_gt: float = ABSREL_MIN_GT) -> float:
    p, y = _valid(pred, gt, mask)
    keep = y >= min_gt
    dropped = int((~keep).sum())
    if dropped:
        log.warning("absrel: excluded %d pixel(s) with gt disparity < %g", dropped, min_gt)
    if not keep.any():
        raise MetricError(f"absrel: all {dropped} valid pixel(s) have gt disparity < {min_gt}")
    return float(np.mean(np.abs(y[keep] - p[keep]) / y[keep]))


def delta_accuracy(pred, gt, mask=None, threshold: float = DELTA_THRESHOLD, strict: bool = True) -> float:
    """Fraction of pixels with max(pred/gt, gt/pred) < threshold.

    With ``strict=False`` a nonpositive prediction counts as a miss and
    nonpositive ground truth pixels are skipped instead of raising.
    """
    p, y = _valid(pred, gt, mask)
    if strict:
        if (p <= 0).any() or (y <= 0).any():
            raise MetricError("delta accuracy needs positive pred and gt")
        ratio = np.maximum(p / y, y / p)
        return float(np.mean(ratio < threshold))
    keep = y > 0
    if not keep.any():
        raise MetricError("delta accuracy: no positive gt pixels")
    p, y = p[keep], y[keep]
    ok = p > 0
    hits = np.zeros(len(y), dtype=bool)
    hits[ok] = np.maximum(p[ok] / y[ok], y[ok] / p[ok]) < threshold
    return float(hits.mean())


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    nmae: float
    absrel: float
    delta_125: float
    n_valid: int

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(pred, gt, mask=None, strict: bool = False) -> MetricsReport:
    p, y = _valid(pred, gt, mask)
    return MetricsReport(
        mae=mae(p, y),
        nmae=nmae(p, y),
        absrel=absrel(p, y),
        delta_125=delta_accuracy(p, y, strict=strict),
        n_valid=int(len(y)),
    )


class AggregationMode(str, enum.Enum):
    AVERAGE = "average"
    BEST = "best"


@dataclass(frozen=True)
class AggregateReport:
    mode: AggregationMode
    per_sample: tuple[MetricsReport, ...]
    mean: dict
    stderr: dict
    std: dict

    @property
    def n_samples(self) -> int:
        return len(self.per_sample)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "n_samples": self.n_samples,
            "mean": self.mean,
            "stderr": self.stderr,
            "std": self.std,
        }


def _combine(group: list[MetricsReport], mode: AggregationMode) -> MetricsReport:
    if mode is AggregationMode.BEST:
        # one winner per sample, chosen by NMAE (first on ties)
        return min(group, key=lambda r: r.nmae)
    return MetricsReport(
        *(float(np.mean([getattr(r, m) for r in group])) for m in METRIC_NAMES),
        n_valid=group[0].n_valid,
    )


def aggregate(samples: list[list[MetricsReport]], mode: AggregationMode | str) -> AggregateReport:
    """Collapse K predictions per sample, then summarise over samples (mean, SE, SD)."""
    mode = AggregationMode(mode)
    if not samples:
        raise MetricError("no samples to aggregate")
    k = len(samples[0])
    if k < 1 or any(len(g) != k for g in samples):
        raise MetricError("prediction groups must all have the same size K >= 1")
    per = tuple(_combine(list(g), mode) for g in samples)
    n = len(per)
    mean, se, sd = {}, {}, {}
    for m in METRIC_NAMES:
        vals = np.array([getattr(r, m) for r in per])
        mean[m] = float(vals.mean())
        sd[m] = float(vals.std(ddof=1)) if n > 1 else 0.0
        se[m] = sd[m] / math.sqrt(n)
    return AggregateReport(mode, per, mean, se, sd)


def table_rows(reports: list[AggregateReport], label: str = "") -> list[dict]:
    rows = []
    for rep in reports:
        row = {"model": label, "mode": rep.mode.value, "n_samples": rep.n_samples}
        for m in ("nmae", "absrel", "delta_125", "mae"):
            row[m] = rep.mean[m]
            row[f"{m}_se"] = rep.stderr[m]
            row[f"{m}_sd"] = rep.std[m]
        rows.append(row)
    return rows


def write_table_csv(reports: list[AggregateReport], label: str = "") -> str:
    """CSV with the NMAE / AbsRel / delta triple (plus MAE) per aggregation mode."""
    rows = table_rows(reports, label)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
