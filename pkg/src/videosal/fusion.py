"""Unify the four encoder levels and fuse them by element-wise summation.

Each stage is projected to 2C channels by a 1x1x1 convolution, stages 2-4 are
spatially upsampled by factors 2, 4, 8 back to H/4 x W/4, and the four aligned
tensors are added.  The temporal dimension (T/2) is never touched.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelConfig
from .encoder import StageFeatures
from .errors import ShapeError
from .ops import ConvSpec, conv3d, upsample_spatial

UPSAMPLE_FACTORS = (1, 2, 4, 8)


def init_fusion_params(cfg: ModelConfig, rng: np.random.Generator,
                       dtype=np.float32) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    out_ch = 2 * cfg.base_dim
    for s in range(1, 5):
        c_in = cfg.stage_dim(s)
        std = float(np.sqrt(2.0 / c_in))
        w = rng.normal(0.0, std, (out_ch, c_in, 1, 1, 1))
        params[f"fusion.p{s}.w"] = ad.tensor(w, dtype=dtype, requires_grad=True)
        params[f"fusion.p{s}.b"] = ad.tensor(np.zeros(out_ch), dtype=dtype, requires_grad=True)
    return params


def projection_spec(cfg: ModelConfig, stage: int) -> ConvSpec:
    return ConvSpec(kernel=(1, 1, 1), in_channels=cfg.stage_dim(stage),
                    out_channels=2 * cfg.base_dim)


def project_stage(feature: Tensor, stage: int, params: dict[str, Tensor],
                  cfg: ModelConfig) -> Tensor:
    """1x1x1-convolve stage features (C_i, T', h, w) to 2C channels."""
    expected = (cfg.stage_dim(stage),) + cfg.token_grid(stage)
    if tuple(feature.shape) != expected:
        raise ShapeError(f"stage {stage} features {tuple(feature.shape)} != expected {expected}")
    x = feature.reshape((1,) + tuple(feature.shape))
    out = conv3d(x, projection_spec(cfg, stage), params[f"fusion.p{stage}.w"],
                 params[f"fusion.p{stage}.b"])
    return out.reshape(tuple(out.shape[1:]))


def align_and_sum(projected: list[Tensor]) -> Tensor:
    """Upsample stages 2-4 by (2, 4, 8) and add all four elementwise."""
    if len(projected) != 4:
        raise ShapeError(f"expected 4 projected stages, got {len(projected)}")
    target = None
    total = None
    for stage0, (p, factor) in enumerate(zip(projected, UPSAMPLE_FACTORS)):
        x = p.reshape((1,) + tuple(p.shape))
        x = upsample_spatial(x, factor)
        x = x.reshape(tuple(x.shape[1:]))
        if target is None:
            target = tuple(x.shape)
        elif tuple(x.shape) != target:
            raise ShapeError(
                f"stage {stage0 + 1} aligns to {tuple(x.shape)}, expected {target}; "
                "projected inputs violate the pyramid contract"
            )
        total = x if total is None else total + x
    return total


def fuse(features: StageFeatures, params: dict[str, Tensor], cfg: ModelConfig) -> Tensor:
    projected = [project_stage(f, s + 1, params, cfg) for s, f in enumerate(features.as_list())]
    fused = align_and_sum(projected)
    if tuple(fused.shape) != cfg.fused_shape():
        raise ShapeError(f"fused shape {tuple(fused.shape)} != contract {cfg.fused_shape()}")
    return fused
