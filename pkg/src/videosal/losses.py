"""Training objective: negative Pearson correlation plus KL divergence.

The correlation term works on raw maps (Pearson is scale invariant); the KL
term sum-normalizes both maps first.  A tiny additive epsilon inside the log
denominator guards against exactly-zero predictions without perturbing the
identity cases beyond 1e-9.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DegenerateInputError, ShapeError

log = logging.getLogger(__name__)

KL_EPS = 1e-14


@dataclass
class LossReport:
    cc_term: float
    kl_term: float
    total: float
    loss: Tensor | None = None
    cc_degenerate: bool = False


def _as_const(x, like: Tensor) -> np.ndarray:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    return arr.astype(like.data.dtype, copy=False)


def _check_pair(pred: Tensor, target: np.ndarray, op: str) -> None:
    if tuple(pred.shape) != tuple(target.shape):
        raise ShapeError(f"{op}: map shapes differ: {tuple(pred.shape)} vs {tuple(target.shape)}")
    if pred.size < 2:
        raise ShapeError(f"{op}: maps need at least 2 elements, got {pred.size}")


def cc_loss(pred: Tensor, target) -> Tensor:
    """Negative Pearson correlation between the two maps (differentiable in pred)."""
    pred = pred if isinstance(pred, Tensor) else ad.tensor(pred)
    t = _as_const(target, pred)
    _check_pair(pred, t, "cc_loss")
    if float(pred.data.std()) == 0.0 or float(t.std()) == 0.0:
        raise DegenerateInputError("cc_loss: constant map has zero standard deviation")
    t_centered = t - t.mean()
    t_std = float(t.std())
    pm = pred - pred.mean()
    cov = (pm * ad.tensor(t_centered)).mean()
    std_p = ad.sqrt((pm * pm).mean())
    return -(cov / (std_p * t_std))


def kl_loss(pred: Tensor, target) -> Tensor:
    """KL(target || pred) after normalizing each map to sum 1."""
    pred = pred if isinstance(pred, Tensor) else ad.tensor(pred)
    t = _as_const(target, pred)
    _check_pair(pred, t, "kl_loss")
    if np.any(pred.data < 0) or np.any(t < 0):
        raise DegenerateInputError("kl_loss: maps must be non-negative")
    t_sum = float(t.sum())
    p_sum = float(pred.data.sum())
    if t_sum <= 0 or p_sum <= 0:
        raise DegenerateInputError("kl_loss: zero-sum map cannot be normalized")
    gn = (t / t_sum).astype(np.float64)
    entropy = float(np.sum(np.where(gn > 0, gn * np.log(np.where(gn > 0, gn, 1.0)), 0.0)))
    sn = pred / pred.sum()
    cross = (ad.tensor(gn.astype(pred.data.dtype)) * ad.log(sn + KL_EPS)).sum()
    return entropy - cross


def total_loss(pred: Tensor, target, on_degenerate: str = "raise") -> LossReport:
    """CC + KL objective.  on_degenerate='zero' replaces a degenerate CC term
    with 0 and logs a warning (training-time behavior); 'raise' is strict."""
    cc_degenerate = False
    try:
        cc = cc_loss(pred, target)
    except DegenerateInputError:
        if on_degenerate != "zero":
            raise
        cc_degenerate = True
        log.warning("cc_loss degenerate (constant map); using cc_term=0 for this step")
        cc = ad.tensor(np.zeros((), dtype=pred.data.dtype))
    kl = kl_loss(pred, target)
    loss = cc + kl
    return LossReport(
        cc_term=float(cc.data),
        kl_term=float(kl.data),
        total=float(loss.data),
        loss=loss,
        cc_degenerate=cc_degenerate,
    )
