"""Training loop, sliding-window inference, evaluation and ablation drivers.

Sliding windows: frame t >= T-1 is predicted from the forward clip
[t-T+1 .. t].  Earlier frames lack history, so the clip is reversed: the
window walks frames t+T-1, t+T-2, ..., t so the target stays last while only
same-or-later frames supply context.  When the video is shorter than 2T-1,
out-of-range indices reflect off the last frame (mirror continuation), which
keeps every window in range for any N >= T.

Training samples one (video, window) pair per iteration from a counter-keyed
RNG stream, so a run is a pure function of (seed, iteration index) and can be
resumed bit-identically from a checkpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .config import ModelConfig, TrainConfig
from .errors import ConfigurationError, TrainingDiverged
from .losses import total_loss
from .metrics import MetricsReport, evaluate_video
from .model import SaliencyModel
from .optim import AdamState, adam_init, adam_step
from .synth import Video


@dataclass(frozen=True)
class ClipWindow:
    target: int
    indices: tuple[int, ...]
    reversed: bool


def make_clip_windows(n_frames: int, clip_len: int) -> list[ClipWindow]:
    """One window per frame; reversed (with mirror continuation) for t < T-1."""
    if n_frames < clip_len:
        raise ConfigurationError(
            f"video has {n_frames} frames but clips need {clip_len}; "
            "pad the video or shorten the clip length"
        )
    last = n_frames - 1
    windows = []
    for t in range(n_frames):
        if t >= clip_len - 1:
            idx = tuple(range(t - clip_len + 1, t + 1))
            windows.append(ClipWindow(target=t, indices=idx, reversed=False))
        else:
            raw = range(t + clip_len - 1, t - 1, -1)
            idx = tuple(i if i <= last else 2 * last - i for i in raw)
            windows.append(ClipWindow(target=t, indices=idx, reversed=True))
    return windows


@dataclass
class TrainResult:
    log_rows: list[dict] = field(default_factory=list)
    best_arrays: dict[str, np.ndarray] = field(default_factory=dict)
    best_val: float = math.nan
    best_iteration: int = 0
    final_iteration: int = 0
    stopped_early: bool = False


def _sample_rng(seed: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1, iteration])


def _clip_for(video: Video, window: ClipWindow, dtype) -> np.ndarray:
    return video.frames[list(window.indices)].astype(dtype, copy=False)


def validation_loss(model: SaliencyModel, videos: list[Video]) -> float:
    """Mean objective over each video's final forward window (deterministic)."""
    t_len = model.config.frames
    total = 0.0
    with ad.no_grad():
        for video in videos:
            window = make_clip_windows(video.n_frames, t_len)[-1]
            pred = model.forward(_clip_for(video, window, model.dtype))
            pred2d = pred.reshape(model.config.height, model.config.width)
            gt = video.density[window.target].astype(model.dtype)
            total += total_loss(pred2d, gt, on_degenerate="zero").total
    return total / len(videos)


def train(model: SaliencyModel, dataset: list[Video], tcfg: TrainConfig,
          val_dataset: list[Video] | None = None,
          adam_state: AdamState | None = None,
          start_iteration: int = 0,
          on_row=None) -> TrainResult:
    """Adam training with periodic validation and early stopping.

    Resuming: pass the checkpointed optimizer state and start_iteration; the
    continuation reproduces an uninterrupted run bit-for-bit because sampling
    is keyed on (seed, absolute iteration).
    """
    tcfg.validate()
    if tcfg.clip_len != model.config.frames:
        raise ConfigurationError(
            f"train clip length {tcfg.clip_len} != model clip length {model.config.frames}"
        )
    if not dataset:
        raise ConfigurationError("empty training dataset")
    val_videos = val_dataset if val_dataset is not None else dataset
    windows = [make_clip_windows(v.n_frames, tcfg.clip_len) for v in dataset]
    state = adam_state if adam_state is not None else adam_init(model.params, lr=tcfg.learning_rate)
    result = TrainResult(best_arrays={k: p.data.copy() for k, p in model.params.items()})
    evals_without_improvement = 0
    saw_validation = False
    result.final_iteration = start_iteration

    for k in range(start_iteration + 1, tcfg.max_iterations + 1):
        rng = _sample_rng(tcfg.seed, k)
        v = int(rng.integers(0, len(dataset)))
        w = int(rng.integers(0, len(windows[v])))
        window = windows[v][w]
        video = dataset[v]
        clip = _clip_for(video, window, model.dtype)
        gt = video.density[window.target].astype(model.dtype)

        ad.zero_grads(model.params)
        pred = model.forward(clip)
        pred2d = pred.reshape(model.config.height, model.config.width)
        report = total_loss(pred2d, gt, on_degenerate="zero")
        if not math.isfinite(report.total):
            raise TrainingDiverged(
                f"non-finite loss at iteration {k} (video {video.name}, frame {window.target}): "
                f"cc={report.cc_term} kl={report.kl_term}",
                snapshot={"iteration": k, "video": video.name, "target": window.target,
                          "cc": report.cc_term, "kl": report.kl_term},
            )
        report.loss.backward()
        adam_step(model.params, None, state)

        row = {"iteration": k, "cc": report.cc_term, "kl": report.kl_term,
               "total": report.total, "val_total": None}
        if k % tcfg.val_every == 0:
            val = validation_loss(model, val_videos)
            row["val_total"] = val
            saw_validation = True
            if not math.isfinite(val):
                raise TrainingDiverged(f"non-finite validation loss at iteration {k}",
                                       snapshot={"iteration": k, "val_total": val})
            if math.isnan(result.best_val) or val < result.best_val:
                result.best_val = val
                result.best_iteration = k
                result.best_arrays = {name: p.data.copy() for name, p in model.params.items()}
                evals_without_improvement = 0
            else:
                evals_without_improvement += 1
        result.log_rows.append(row)
        if on_row is not None:
            on_row(row)
        result.final_iteration = k
        if evals_without_improvement >= tcfg.patience:
            result.stopped_early = True
            break

    if not saw_validation:
        result.best_arrays = {name: p.data.copy() for name, p in model.params.items()}
        result.best_iteration = result.final_iteration
    return result


def infer_video(model: SaliencyModel, frames: np.ndarray, on_window=None) -> list[np.ndarray]:
    """One saliency map per frame via the sliding-window rule."""
    n = frames.shape[0]
    maps = []
    for window in make_clip_windows(n, model.config.frames):
        if on_window is not None:
            on_window(window)
        clip = frames[list(window.indices)].astype(model.dtype, copy=False)
        maps.append(model.predict_map(clip))
    return maps


def evaluate_model(model: SaliencyModel, videos: list[Video], seed: int = 0) -> list[MetricsReport]:
    """Sliding-window inference + metrics per video.

    The shuffled-AUC negative pool for a video is every other video's fixations.
    """
    reports = []
    for i, video in enumerate(videos):
        preds = infer_video(model, video.frames)
        pool = [rec for j, other in enumerate(videos) if j != i for rec in other.fixations
                if not rec.is_empty()]
        gts = [video.density[t] for t in range(video.n_frames)]
        reports.append(evaluate_video(preds, gts, video.fixations, pool,
                                      video=video.name, seed=seed))
    return reports


def pooled_aggregate(reports: list[MetricsReport]) -> dict[str, float]:
    """Mean of each metric over all scored frames of all videos."""
    out = {}
    for m in MetricsReport.METRICS:
        vals = [row[m] for rep in reports for row in rep.rows if row[m] is not None]
        out[m] = float(np.mean(vals)) if vals else float("nan")
    return out


def run_ablation(base_config: ModelConfig, variants: list[str], dataset: list[Video],
                 tcfg: TrainConfig, val_dataset: list[Video] | None = None,
                 eval_seed: int = 0) -> list[dict]:
    """Train and evaluate each decoder variant under an identical seed and budget."""
    rows = []
    for variant in variants:
        cfg = replace(base_config, variant=variant)
        cfg.validate()
        model = SaliencyModel(cfg, dtype=tcfg.dtype, seed=tcfg.seed)
        result = train(model, dataset, tcfg, val_dataset=val_dataset)
        model.load_state(result.best_arrays)
        agg = pooled_aggregate(evaluate_model(model, dataset, seed=eval_seed))
        rows.append({
            "variant": variant,
            "params": model.parameter_count(),
            "cc": agg["cc"],
            "nss": agg["nss"],
            "sim": agg["sim"],
            "auc_j": agg["auc_j"],
        })
    return rows
