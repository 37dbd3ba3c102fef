"""Hierarchical spatio-temporal encoder.

A clip (T, H, W, 3) is split into non-overlapping 2x4x4 patches, each flattened
to a 96-vector and linearly embedded to C channels.  Four stages of pre-norm
windowed multi-head self-attention blocks follow; between stages a patch-merge
step concatenates 2x2 spatial neighbors and re-projects to double the channel
width, halving spatial resolution.  The temporal dimension stays at T/2
throughout.  Windows never shift and carry no positional bias; at late stages
the configured window is clipped to the token grid.

Tokens flow as (T', Hs, Ws, C); stage outputs are returned channel-first as
(C_i, T', Hs, Ws).
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelConfig
from .errors import ConfigurationError, ShapeError
from .ops import layer_norm, linear, relu, softmax


@dataclass
class StageFeatures:
    """The four-level feature pyramid; level i has shape (2^(i-1)C, T/2, h_i, w_i)."""

    f1: Tensor
    f2: Tensor
    f3: Tensor
    f4: Tensor

    def as_list(self) -> list[Tensor]:
        return [self.f1, self.f2, self.f3, self.f4]

    def shapes(self) -> list[tuple[int, ...]]:
        return [tuple(f.shape) for f in self.as_list()]


def init_encoder_params(cfg: ModelConfig, rng: np.random.Generator,
                        dtype=np.float32) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}

    def proj(name, shape):
        params[name] = ad.tensor(_trunc_normal(rng, shape, 0.02), dtype=dtype, requires_grad=True)

    def vec(name, n, value):
        params[name] = ad.tensor(np.full(n, value), dtype=dtype, requires_grad=True)

    proj("encoder.embed.w", (cfg.base_dim, 96))
    vec("encoder.embed.b", cfg.base_dim, 0.0)
    for s in range(1, 5):
        dim = cfg.stage_dim(s)
        hidden = int(dim * cfg.mlp_ratio)
        for b in range(cfg.depths[s - 1]):
            px = f"encoder.s{s}.b{b}"
            for ln in ("ln1", "ln2"):
                vec(f"{px}.{ln}_g", dim, 1.0)
                vec(f"{px}.{ln}_b", dim, 0.0)
            for name in ("q", "k", "v", "o"):
                proj(f"{px}.{name}_w", (dim, dim))
                vec(f"{px}.{name}_b", dim, 0.0)
            proj(f"{px}.mlp1_w", (hidden, dim))
            vec(f"{px}.mlp1_b", hidden, 0.0)
            proj(f"{px}.mlp2_w", (dim, hidden))
            vec(f"{px}.mlp2_b", dim, 0.0)
        vec(f"encoder.s{s}.norm_g", dim, 1.0)
        vec(f"encoder.s{s}.norm_b", dim, 0.0)
        if s < 4:
            proj(f"encoder.merge{s}.w", (2 * dim, 4 * dim))
            vec(f"encoder.merge{s}.b", 2 * dim, 0.0)
    return params


def _trunc_normal(rng, shape, std):
    return np.clip(rng.normal(0.0, std, shape), -2 * std, 2 * std)


def patch_embed(clip: Tensor, params: dict[str, Tensor], cfg: ModelConfig) -> Tensor:
    """(T, H, W, 3) -> token grid (T/2, H/4, W/4, C)."""
    t, h, w = cfg.frames, cfg.height, cfg.width
    if tuple(clip.shape) != (t, h, w, 3):
        raise ShapeError(f"clip shape {tuple(clip.shape)} != expected ({t}, {h}, {w}, 3)")
    pt, ph, pw = cfg.patch
    if t % pt or h % ph or w % pw:
        raise ConfigurationError(f"clip dims ({t},{h},{w}) not divisible by patch {cfg.patch}")
    x = clip.reshape(t // pt, pt, h // ph, ph, w // pw, pw, 3)
    x = x.transpose(0, 2, 4, 1, 3, 5, 6)
    raw = x.reshape(t // pt, h // ph, w // pw, pt * ph * pw * 3)
    return linear(raw, params["encoder.embed.w"], params["encoder.embed.b"])


def patch_tokens_raw(clip: Tensor, cfg: ModelConfig) -> Tensor:
    """The flattened 96-dim patch vectors before the embedding projection."""
    pt, ph, pw = cfg.patch
    t, h, w = cfg.frames, cfg.height, cfg.width
    x = clip.reshape(t // pt, pt, h // ph, ph, w // pw, pw, 3)
    x = x.transpose(0, 2, 4, 1, 3, 5, 6)
    return x.reshape(t // pt, h // ph, w // pw, pt * ph * pw * 3)


def _partition_windows(x: Tensor, window: tuple[int, int, int]) -> tuple[Tensor, tuple]:
    t, h, w, c = x.shape
    wt, wh, ww = window
    if t % wt or h % wh or w % ww:
        raise ConfigurationError(f"window {window} does not divide token grid {(t, h, w)}")
    nt, nh, nw = t // wt, h // wh, w // ww
    x = x.reshape(nt, wt, nh, wh, nw, ww, c)
    x = x.transpose(0, 2, 4, 1, 3, 5, 6)
    return x.reshape(nt * nh * nw, wt * wh * ww, c), (nt, nh, nw)


def _merge_windows(x: Tensor, window: tuple[int, int, int], counts: tuple) -> Tensor:
    wt, wh, ww = window
    nt, nh, nw = counts
    c = x.shape[-1]
    x = x.reshape(nt, nh, nw, wt, wh, ww, c)
    x = x.transpose(0, 3, 1, 4, 2, 5, 6)
    return x.reshape(nt * wt, nh * wh, nw * ww, c)


def window_mhsa(x: Tensor, window: tuple[int, int, int], heads: int,
                params: dict[str, Tensor], prefix: str,
                return_weights: bool = False):
    """Multi-head self-attention inside each non-overlapping 3D window.

    No residual or normalization here; shape in == shape out.
    """
    c = x.shape[-1]
    if c % heads:
        raise ConfigurationError(f"token dim {c} not divisible by {heads} heads")
    hd = c // heads
    wins, counts = _partition_windows(x, window)
    nwin, wsize, _ = wins.shape

    def heads_view(t):
        return t.reshape(nwin, wsize, heads, hd).transpose(0, 2, 1, 3)

    q = heads_view(linear(wins, params[f"{prefix}.q_w"], params[f"{prefix}.q_b"]))
    k = heads_view(linear(wins, params[f"{prefix}.k_w"], params[f"{prefix}.k_b"]))
    v = heads_view(linear(wins, params[f"{prefix}.v_w"], params[f"{prefix}.v_b"]))
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(hd))
    attn = softmax(scores, axis=-1)
    ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(nwin, wsize, c)
    out = linear(ctx, params[f"{prefix}.o_w"], params[f"{prefix}.o_b"])
    merged = _merge_windows(out, window, counts)
    if return_weights:
        return merged, attn
    return merged


def window_attention(x: Tensor, window: tuple[int, int, int], heads: int,
                     params: dict[str, Tensor], prefix: str) -> Tensor:
    """Pre-norm windowed attention sub-block: x + MHSA(LN(x))."""
    h = layer_norm(x, params[f"{prefix}.ln1_g"], params[f"{prefix}.ln1_b"])
    return x + window_mhsa(h, window, heads, params, prefix)


def encoder_block(x: Tensor, window: tuple[int, int, int], heads: int,
                  params: dict[str, Tensor], prefix: str) -> Tensor:
    """Attention sub-block followed by a pre-norm two-layer MLP sub-block."""
    x = window_attention(x, window, heads, params, prefix)
    h = layer_norm(x, params[f"{prefix}.ln2_g"], params[f"{prefix}.ln2_b"])
    h = relu(linear(h, params[f"{prefix}.mlp1_w"], params[f"{prefix}.mlp1_b"]))
    h = linear(h, params[f"{prefix}.mlp2_w"], params[f"{prefix}.mlp2_b"])
    return x + h


def patch_merge(x: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    """Concatenate 2x2 spatial token neighborhoods and project C -> 2C.

    Neighbor order in the concatenated 4C vector: (0,0), (0,1), (1,0), (1,1),
    so the first C entries are the top-left token's features.
    """
    t, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"patch_merge needs even spatial token dims, got {(h, w)}")
    x = x.reshape(t, h // 2, 2, w // 2, 2, c)
    x = x.transpose(0, 1, 3, 2, 4, 5)
    cat = x.reshape(t, h // 2, w // 2, 4 * c)
    return linear(cat, params[f"{prefix}.w"], params[f"{prefix}.b"])


def encode(clip: Tensor, params: dict[str, Tensor], cfg: ModelConfig) -> StageFeatures:
    """Run the four-stage encoder; features are checked against the shape contract."""
    x = patch_embed(clip, params, cfg)
    feats: list[Tensor] = []
    expected = cfg.stage_shapes()
    for s in range(1, 5):
        heads = cfg.heads[s - 1]
        window = cfg.stage_window(s)
        for b in range(cfg.depths[s - 1]):
            x = encoder_block(x, window, heads, params, f"encoder.s{s}.b{b}")
        f = layer_norm(x, params[f"encoder.s{s}.norm_g"], params[f"encoder.s{s}.norm_b"])
        f = f.transpose(3, 0, 1, 2)
        if tuple(f.shape) != expected[s - 1]:
            raise ShapeError(
                f"stage {s} features {tuple(f.shape)} violate the contract {expected[s - 1]}"
            )
        feats.append(f)
        if s < 4:
            x = patch_merge(x, params, f"encoder.merge{s}")
    return StageFeatures(*feats)
