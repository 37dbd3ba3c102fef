"""Structural and training hyperparameters.

The encoder is a four-stage hierarchy over 3D patch tokens.  For an input clip
of T frames at H x W, stage i (1-based) produces features with

    channels 2^(i-1) * C,  temporal T/2,  spatial H/2^(i+1) x W/2^(i+1)

and the fusion stage unifies all four to (2C, T/2, H/4, W/4).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ConfigurationError

DECODER_VARIANTS = (
    "baseline",
    "layers4",
    "layers3",
    "layers2",
    "double",
    "triple",
    "mobilenet",
    "half_temporal",
)


@dataclass(frozen=True)
class ModelConfig:
    frames: int
    height: int
    width: int
    base_dim: int
    window: tuple[int, int, int]
    heads: tuple[int, int, int, int]
    depths: tuple[int, int, int, int]
    patch: tuple[int, int, int] = (2, 4, 4)
    mlp_ratio: float = 4.0
    variant: str = "baseline"

    def validate(self) -> None:
        if self.frames % 2:
            raise ConfigurationError(f"frame count must be even, got {self.frames}")
        if self.height % 32 or self.width % 32:
            raise ConfigurationError(
                f"frame size must be divisible by 32 for four stages, got {self.height}x{self.width}"
            )
        t_half = self.frames // 2
        if t_half < 2 or t_half & (t_half - 1):
            raise ConfigurationError(
                f"half temporal dim must be a power of two >= 2 for the decoder, got {t_half}"
            )
        if self.patch != (2, 4, 4):
            raise ConfigurationError(f"patch size is fixed at (2,4,4), got {self.patch}")
        if self.variant not in DECODER_VARIANTS:
            raise ConfigurationError(
                f"unknown decoder variant {self.variant!r}; valid: {', '.join(DECODER_VARIANTS)}"
            )
        for i in range(4):
            dim = self.stage_dim(i + 1)
            if dim % self.heads[i]:
                raise ConfigurationError(
                    f"stage {i + 1} dim {dim} not divisible by {self.heads[i]} heads"
                )
            grid = self.token_grid(i + 1)
            win = self.stage_window(i + 1)
            if any(g % w for g, w in zip(grid, win)):
                raise ConfigurationError(
                    f"window {win} does not divide stage {i + 1} token grid {grid}"
                )

    def stage_dim(self, stage: int) -> int:
        return (2 ** (stage - 1)) * self.base_dim

    def token_grid(self, stage: int) -> tuple[int, int, int]:
        return (
            self.frames // 2,
            self.height // (2 ** (stage + 1)),
            self.width // (2 ** (stage + 1)),
        )

    def stage_window(self, stage: int) -> tuple[int, int, int]:
        """Attention window at a stage: configured window clipped to the grid."""
        grid = self.token_grid(stage)
        return tuple(min(w, g) for w, g in zip(self.window, grid))

    def stage_shapes(self) -> list[tuple[int, int, int, int]]:
        """The four (channels, T/2, h, w) feature shapes."""
        return [(self.stage_dim(i),) + self.token_grid(i) for i in range(1, 5)]

    def fused_shape(self) -> tuple[int, int, int, int]:
        return (2 * self.base_dim, self.frames // 2, self.height // 4, self.width // 4)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 1
    clip_len: int = 8
    max_iterations: int = 2000
    val_every: int = 100
    patience: int = 5
    seed: int = 0
    dtype: str = "f32"

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigurationError("batch size must be >= 1")
        if self.patience < 1:
            raise ConfigurationError("patience must be >= 1")
        if self.val_every < 1:
            raise ConfigurationError("val_every must be >= 1")
        if self.dtype not in ("f32", "f64"):
            raise ConfigurationError(f"dtype must be f32 or f64, got {self.dtype!r}")


def paper_profile(variant: str = "baseline", depths: tuple[int, int, int, int] = (2, 2, 18, 2)) -> ModelConfig:
    """Full-scale profile: T=32 clips at 224x384, C=96, Swin-S style depths."""
    return ModelConfig(
        frames=32,
        height=224,
        width=384,
        base_dim=96,
        window=(2, 7, 12),
        heads=(3, 6, 12, 24),
        depths=depths,
        variant=variant,
    )


def toy_profile(variant: str = "baseline") -> ModelConfig:
    """Desk-scale profile: T=8 clips at 32x64, C=16."""
    return ModelConfig(
        frames=8,
        height=32,
        width=64,
        base_dim=16,
        window=(2, 4, 4),
        heads=(1, 2, 4, 8),
        depths=(1, 1, 2, 1),
        variant=variant,
    )


def paper_train_config(**overrides) -> TrainConfig:
    base = TrainConfig(learning_rate=1e-5, clip_len=32, max_iterations=100000,
                       val_every=1000, patience=5)
    return replace(base, **overrides)


def toy_train_config(**overrides) -> TrainConfig:
    base = TrainConfig(learning_rate=1e-3, clip_len=8, max_iterations=2000,
                       val_every=100, patience=5)
    return replace(base, **overrides)
