"""Saliency evaluation metrics.

Distribution-based: CC (Pearson correlation) and SIM (histogram intersection
of the sum-normalized maps).  Location-based: NSS (mean standardized saliency
at fixations), AUC-Judd (ROC area with all non-fixated pixels as negatives)
and shuffled AUC (negatives pooled from other frames' fixations).

AUC convention, shared by the brute-force oracle in the tests: thresholds
sweep the distinct positive values in descending order, a pixel ties with the
threshold as classified-positive (>=), and the (FPR, TPR) curve is integrated
by trapezoid with (0,0) and (1,1) anchors.  A constant map scores 0.5.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, ShapeError

SAUC_NEGATIVE_CAP_RATIO = 10


@dataclass(frozen=True)
class FixationRecord:
    """Discrete gaze points for one frame; coordinates are (row, col) pixels."""

    frame: int
    points: tuple[tuple[int, int], ...]
    height: int
    width: int

    def __post_init__(self):
        for r, c in self.points:
            if not (0 <= r < self.height and 0 <= c < self.width):
                raise ShapeError(
                    f"fixation ({r}, {c}) outside {self.height}x{self.width} frame {self.frame}"
                )

    def is_empty(self) -> bool:
        return len(self.points) == 0


@dataclass
class MetricsReport:
    """Per-frame metric rows plus aggregate means over the scored frames."""

    video: str
    rows: list[dict] = field(default_factory=list)
    skipped: dict[str, int] = field(default_factory=lambda: {"auc_j": 0, "s_auc": 0, "nss": 0})

    METRICS = ("auc_j", "s_auc", "nss", "cc", "sim")

    def add_frame(self, frame: int, **values) -> None:
        row = {"video": self.video, "frame": frame}
        for m in self.METRICS:
            row[m] = values.get(m)
        self.rows.append(row)

    def aggregate(self) -> dict[str, float]:
        out = {}
        for m in self.METRICS:
            vals = [r[m] for r in self.rows if r[m] is not None]
            out[m] = float(np.mean(vals)) if vals else float("nan")
        return out


def _flat(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64).reshape(-1)


def _check_same_shape(s, g, op):
    if np.asarray(s).shape != np.asarray(g).shape:
        raise ShapeError(f"{op}: map shapes differ: {np.asarray(s).shape} vs {np.asarray(g).shape}")


def nss(saliency, fixations: FixationRecord) -> float:
    """Mean of the zero-mean/unit-std standardized map at the fixation points."""
    s = np.asarray(saliency, dtype=np.float64)
    if fixations.is_empty():
        raise DegenerateInputError("nss: empty fixation record (frame should be skipped)")
    if (fixations.height, fixations.width) != s.shape:
        raise ShapeError(f"nss: map {s.shape} vs fixation frame {(fixations.height, fixations.width)}")
    std = s.std()
    if std == 0.0:
        raise DegenerateInputError("nss: constant saliency map")
    z = (s - s.mean()) / std
    return float(np.mean([z[r, c] for r, c in fixations.points]))


def cc_metric(saliency, density) -> float:
    """Pearson linear correlation between the two maps."""
    _check_same_shape(saliency, density, "cc")
    s = _flat(saliency)
    g = _flat(density)
    if s.std() == 0.0 or g.std() == 0.0:
        raise DegenerateInputError("cc: constant map")
    s = s - s.mean()
    g = g - g.mean()
    return float((s * g).mean() / (s.std() * g.std()))


def sim(saliency, density) -> float:
    """Histogram intersection of the sum-normalized maps, in [0, 1]."""
    _check_same_shape(saliency, density, "sim")
    s = _flat(saliency)
    g = _flat(density)
    if np.any(s < 0) or np.any(g < 0):
        raise DegenerateInputError("sim: maps must be non-negative")
    if s.sum() <= 0 or g.sum() <= 0:
        raise DegenerateInputError("sim: zero-sum map")
    return float(np.minimum(s / s.sum(), g / g.sum()).sum())


def _roc_area(pos_vals: np.ndarray, neg_vals: np.ndarray) -> float:
    thresholds = np.unique(pos_vals)[::-1]
    n_pos = pos_vals.size
    n_neg = neg_vals.size
    fprs = [0.0]
    tprs = [0.0]
    for tau in thresholds:
        tprs.append(float(np.count_nonzero(pos_vals >= tau)) / n_pos)
        fprs.append(float(np.count_nonzero(neg_vals >= tau)) / n_neg)
    fprs.append(1.0)
    tprs.append(1.0)
    area = 0.0
    for i in range(len(fprs) - 1):
        area += 0.5 * (tprs[i] + tprs[i + 1]) * (fprs[i + 1] - fprs[i])
    return area


def auc_judd(saliency, fixations: FixationRecord) -> float:
    """ROC area with fixated pixels as positives, all other pixels as negatives."""
    s = np.asarray(saliency, dtype=np.float64)
    if fixations.is_empty():
        raise DegenerateInputError("auc_judd: empty fixation record (frame should be skipped)")
    pos_set = set(fixations.points)
    mask = np.zeros(s.shape, dtype=bool)
    for r, c in pos_set:
        mask[r, c] = True
    pos_vals = s[mask]
    neg_vals = s[~mask]
    if neg_vals.size == 0:
        raise DegenerateInputError("auc_judd: fixations cover every pixel")
    return _roc_area(pos_vals, neg_vals)


def shuffled_auc(saliency, fixations: FixationRecord,
                 negatives: list[FixationRecord], seed: int = 0,
                 cap_ratio: int = SAUC_NEGATIVE_CAP_RATIO) -> float:
    """AUC with negatives drawn from other frames' fixation locations.

    The pooled locations are deduplicated against the positives and capped at
    cap_ratio x the positive count by seeded uniform subsampling.
    """
    s = np.asarray(saliency, dtype=np.float64)
    if fixations.is_empty():
        raise DegenerateInputError("shuffled_auc: empty fixation record")
    pos_set = set(fixations.points)
    pool = sorted({p for rec in negatives for p in rec.points} - pos_set)
    if not pool:
        raise DegenerateInputError("shuffled_auc: negative pool is empty after deduplication")
    cap = cap_ratio * len(pos_set)
    if len(pool) > cap:
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(pool), size=cap, replace=False)
        pool = [pool[i] for i in sorted(idx)]
    pos_vals = np.array([s[r, c] for r, c in sorted(pos_set)])
    neg_vals = np.array([s[r, c] for r, c in pool])
    return _roc_area(pos_vals, neg_vals)


def evaluate_video(pred_maps, gt_maps, fixations: list[FixationRecord],
                   negatives_pool: list[FixationRecord], video: str = "video",
                   seed: int = 0) -> MetricsReport:
    """Score every frame of one video and aggregate.

    Frames without fixations still contribute CC/SIM but are skipped (and
    counted) for the location-based metrics.  The negatives pool must come
    from other videos.
    """
    if not (len(pred_maps) == len(gt_maps) == len(fixations)):
        raise ShapeError(
            f"evaluate_video: got {len(pred_maps)} predictions, {len(gt_maps)} ground-truth "
            f"maps, {len(fixations)} fixation records"
        )
    report = MetricsReport(video=video)
    for i, (pred, gt, fix) in enumerate(zip(pred_maps, gt_maps, fixations)):
        values: dict[str, float | None] = {
            "cc": cc_metric(pred, gt),
            "sim": sim(pred, gt),
            "auc_j": None,
            "s_auc": None,
            "nss": None,
        }
        if fix.is_empty():
            report.skipped["auc_j"] += 1
            report.skipped["s_auc"] += 1
            report.skipped["nss"] += 1
        else:
            values["auc_j"] = auc_judd(pred, fix)
            values["nss"] = nss(pred, fix)
            try:
                values["s_auc"] = shuffled_auc(pred, fix, negatives_pool, seed=seed)
            except DegenerateInputError:
                report.skipped["s_auc"] += 1
        report.add_frame(i, **values)
    return report
