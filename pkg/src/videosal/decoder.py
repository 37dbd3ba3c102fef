"""Single-branch decoder over full-temporal-resolution fused features.

The baseline alternates shape-preserving 1x3x3 convolutions with 2x3x3
stride-(2,1,1) temporal halvings so the time axis shrinks gradually
(16 -> 8 -> 4 -> 2 -> 1 at full scale) while two nearest-neighbor x2
upsamplings late in the stack restore full frame resolution.  Channels taper
monotonically from 2C down to 1 and the last layer applies a sigmoid.

Variant constructors cover the ablation grid: compressed schedules (2-4
layers with bigger temporal strides), double/triple depth (extra
shape-preserving layers after each base layer), depthwise-separable
convolution pairs, and a halved-temporal-input variant that average-pools
time by 2 before decoding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import DECODER_VARIANTS, ModelConfig
from .errors import ConfigurationError, ShapeError
from .ops import ConvSpec, avg_pool_temporal, conv3d, relu, sigmoid, upsample_spatial

# Output-channel taper of the canonical 9-layer schedule, as fractions of the
# 2C input width; other layer counts sample this curve.
_TAPER = (1.0, 2 / 3, 2 / 3, 1 / 2, 1 / 3, 1 / 3, 1 / 6, 1 / 12)


@dataclass(frozen=True)
class DecoderLayerSpec:
    in_channels: int
    out_channels: int
    kernel: tuple[int, int, int]
    stride: tuple[int, int, int]
    upsample_before: int = 1
    activation: str = "relu"
    depthwise: bool = False

    @property
    def temporal_reduce(self) -> bool:
        return self.stride[0] > 1

    def conv_spec(self) -> ConvSpec:
        kt, kh, kw = self.kernel
        return ConvSpec(
            kernel=self.kernel,
            stride=self.stride,
            padding=(0, (kh - 1) // 2, (kw - 1) // 2),
            in_channels=self.in_channels,
            out_channels=self.out_channels,
            groups=self.in_channels if self.depthwise else 1,
        )


@dataclass(frozen=True)
class DecoderSchedule:
    variant: str
    layers: tuple[DecoderLayerSpec, ...]
    temporal_prepool: int = 1

    def validate(self, in_shape: tuple[int, int, int, int]) -> None:
        c, t, h, w = in_shape
        if self.layers[0].in_channels != c:
            raise ConfigurationError(
                f"schedule expects {self.layers[0].in_channels} input channels, fused has {c}"
            )
        trace = shape_trace(self, in_shape)
        final = trace[-1][1]
        if final != (1, 1, 4 * h, 4 * w):
            raise ConfigurationError(f"schedule ends at {final}, not (1, 1, {4 * h}, {4 * w})")
        chans = [self.layers[0].in_channels] + [l.out_channels for l in self.layers]
        if any(b > a for a, b in zip(chans, chans[1:])):
            raise ConfigurationError(f"channel sequence must be non-increasing, got {chans}")
        if self.layers[-1].activation != "sigmoid" or self.layers[-1].out_channels != 1:
            raise ConfigurationError("final layer must be a 1-channel sigmoid layer")
        if any(l.activation == "sigmoid" for l in self.layers[:-1]):
            raise ConfigurationError("only the final layer may use sigmoid")


def _channel_taper(width: int, n_layers: int) -> list[int]:
    """Monotone non-increasing out-channel list of length n_layers, ending at 1."""
    if n_layers < 2:
        raise ConfigurationError(f"decoder needs at least 2 layers, got {n_layers}")
    pos = np.linspace(0.0, len(_TAPER) - 1, n_layers - 1)
    fracs = np.interp(pos, np.arange(len(_TAPER)), _TAPER)
    outs = [max(1, round(f * width)) for f in fracs]
    outs = list(np.minimum.accumulate(outs))
    return outs + [1]


def _keep_layer(c_in, c_out, up=1, activation="relu"):
    return DecoderLayerSpec(c_in, c_out, (1, 3, 3), (1, 1, 1), up, activation)


def _reduce_layer(c_in, c_out, stride_t=2, up=1):
    return DecoderLayerSpec(c_in, c_out, (stride_t, 3, 3), (stride_t, 1, 1), up)


def _baseline_layers(width: int, n_half: int) -> list[DecoderLayerSpec]:
    n_layers = 2 * n_half + 1
    outs = _channel_taper(width, n_layers)
    # keep layers sit at even indices; the keeps of the last two halving pairs
    # carry the two x2 upsamplings, overflowing onto the final layer if needed
    up_at = {2 * (p - 1) for p in (n_half - 1, n_half) if p >= 1}
    ups_missing = 2 - len(up_at)
    layers = []
    c_in = width
    for i in range(n_layers):
        up = 2 if i in up_at else 1
        if i == n_layers - 1 and ups_missing:
            up = 2**ups_missing
        if i % 2 == 0:
            act = "sigmoid" if i == n_layers - 1 else "relu"
            layers.append(_keep_layer(c_in, outs[i], up, act))
        else:
            layers.append(_reduce_layer(c_in, outs[i], 2, up))
        c_in = outs[i]
    return layers


def _compressed_layers(width: int, n_half: int, n_layers: int) -> list[DecoderLayerSpec]:
    base, extra = divmod(n_half, n_layers)
    strides = [2 ** (base + 1)] * extra + [2**base] * (n_layers - extra)
    outs = _channel_taper(width, n_layers)
    layers = []
    c_in = width
    for i, st in enumerate(strides):
        up = 2 if i >= n_layers - 2 else 1
        act = "sigmoid" if i == n_layers - 1 else "relu"
        kt = st if st > 1 else 1
        layers.append(DecoderLayerSpec(c_in, outs[i], (kt, 3, 3), (st, 1, 1), up, act))
        c_in = outs[i]
    return layers


def _widened_layers(base_layers: list[DecoderLayerSpec], copies: int) -> list[DecoderLayerSpec]:
    layers = []
    for i, layer in enumerate(base_layers):
        is_last_group = i == len(base_layers) - 1
        layers.append(
            DecoderLayerSpec(layer.in_channels, layer.out_channels, layer.kernel,
                             layer.stride, layer.upsample_before, "relu")
        )
        for j in range(copies):
            last = is_last_group and j == copies - 1
            layers.append(_keep_layer(layer.out_channels, layer.out_channels,
                                      1, "sigmoid" if last else "relu"))
    return layers


def _separable_layers(base_layers: list[DecoderLayerSpec]) -> list[DecoderLayerSpec]:
    layers = []
    for layer in base_layers:
        layers.append(
            DecoderLayerSpec(layer.in_channels, layer.in_channels, layer.kernel,
                             layer.stride, layer.upsample_before, "relu", depthwise=True)
        )
        layers.append(
            DecoderLayerSpec(layer.in_channels, layer.out_channels, (1, 1, 1),
                             (1, 1, 1), 1, layer.activation)
        )
    return layers


def build_schedule(cfg: ModelConfig, variant: str | None = None) -> DecoderSchedule:
    """Construct the decoder layer schedule for a variant tag."""
    variant = cfg.variant if variant is None else variant
    if variant not in DECODER_VARIANTS:
        raise ConfigurationError(
            f"unknown decoder variant {variant!r}; valid: {', '.join(DECODER_VARIANTS)}"
        )
    width = 2 * cfg.base_dim
    t_half = cfg.frames // 2
    if t_half < 2 or t_half & (t_half - 1):
        raise ConfigurationError(f"decoder needs a power-of-two temporal dim >= 2, got {t_half}")
    n_half = int(math.log2(t_half))
    prepool = 1
    if variant == "baseline":
        layers = _baseline_layers(width, n_half)
    elif variant in ("layers4", "layers3", "layers2"):
        layers = _compressed_layers(width, n_half, int(variant[-1]))
    elif variant == "double":
        layers = _widened_layers(_baseline_layers(width, n_half), 1)
    elif variant == "triple":
        layers = _widened_layers(_baseline_layers(width, n_half), 2)
    elif variant == "mobilenet":
        layers = _separable_layers(_baseline_layers(width, n_half))
    else:  # half_temporal
        if n_half < 2:
            raise ConfigurationError("half_temporal needs a temporal dim >= 4 before pooling")
        prepool = 2
        layers = _baseline_layers(width, n_half - 1)
    schedule = DecoderSchedule(variant, tuple(layers), prepool)
    schedule.validate(cfg.fused_shape())
    return schedule


def shape_trace(schedule: DecoderSchedule,
                in_shape: tuple[int, int, int, int]) -> list[tuple[str, tuple]]:
    """Per-layer (description, output shape) walk, starting from the fused shape."""
    c, t, h, w = in_shape
    steps = []
    if schedule.temporal_prepool > 1:
        if t % schedule.temporal_prepool:
            raise ConfigurationError(f"prepool {schedule.temporal_prepool} does not divide T'={t}")
        t //= schedule.temporal_prepool
        steps.append((f"avgpool t/{schedule.temporal_prepool}", (c, t, h, w)))
    for i, layer in enumerate(schedule.layers):
        if layer.in_channels != c:
            raise ConfigurationError(
                f"layer {i + 1} expects {layer.in_channels} channels, trace has {c}"
            )
        h *= layer.upsample_before
        w *= layer.upsample_before
        t2, h, w = layer.conv_spec().out_dims((t, h, w))
        t = t2
        c = layer.out_channels
        kind = "dw" if layer.depthwise else ("tred" if layer.temporal_reduce else "keep")
        up = f" up x{layer.upsample_before}" if layer.upsample_before > 1 else ""
        steps.append((f"L{i + 1} {kind}{up} {layer.kernel} -> {c}ch", (c, t, h, w)))
    return steps


def init_decoder_params(schedule: DecoderSchedule, rng: np.random.Generator,
                        dtype=np.float32) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    for i, layer in enumerate(schedule.layers):
        spec = layer.conv_spec()
        fan_in = int(np.prod(spec.weight_shape[1:]))
        std = float(np.sqrt(2.0 / fan_in))
        w = rng.normal(0.0, std, spec.weight_shape)
        params[f"decoder.l{i}.w"] = ad.tensor(w, dtype=dtype, requires_grad=True)
        params[f"decoder.l{i}.b"] = ad.tensor(np.zeros(spec.out_channels), dtype=dtype,
                                              requires_grad=True)
    return params


def decode(fused: Tensor, schedule: DecoderSchedule, params: dict[str, Tensor]) -> Tensor:
    """Map fused features (2C, T', H/4, W/4) to a saliency map (1, 1, H, W)."""
    in_shape = tuple(fused.shape)
    trace = shape_trace(schedule, in_shape)
    x = fused.reshape((1,) + in_shape)
    if schedule.temporal_prepool > 1:
        x = avg_pool_temporal(x, schedule.temporal_prepool)
    for i, layer in enumerate(schedule.layers):
        if layer.upsample_before > 1:
            x = upsample_spatial(x, layer.upsample_before)
        x = conv3d(x, layer.conv_spec(), params[f"decoder.l{i}.w"], params[f"decoder.l{i}.b"])
        x = sigmoid(x) if layer.activation == "sigmoid" else relu(x)
    expected = (1,) + trace[-1][1]
    if tuple(x.shape) != expected:
        raise ShapeError(f"decoder output {tuple(x.shape)} drifted from trace {expected}")
    return x.reshape(1, 1, x.shape[3], x.shape[4])


def parameter_count(schedule: DecoderSchedule) -> int:
    """Exact decoder weight+bias count; separable pairs counted per layer."""
    return sum(layer.conv_spec().parameter_count() for layer in schedule.layers)
