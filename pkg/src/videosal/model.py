"""End-to-end saliency model: encoder -> fusion -> decoder."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelConfig
from .decoder import DecoderSchedule, build_schedule, decode, init_decoder_params, parameter_count
from .encoder import StageFeatures, encode, init_encoder_params
from .fusion import fuse, init_fusion_params

_DTYPES = {"f32": np.float32, "f64": np.float64}


def resolve_dtype(dtype) -> np.dtype:
    if isinstance(dtype, str):
        return np.dtype(_DTYPES[dtype])
    return np.dtype(dtype)


class SaliencyModel:
    """Holds the parameter set for one configuration and runs the forward pass."""

    def __init__(self, config: ModelConfig, dtype="f32", seed: int = 0):
        config.validate()
        self.config = config
        self.dtype = resolve_dtype(dtype)
        self.schedule: DecoderSchedule = build_schedule(config)
        rng = np.random.default_rng(seed)
        params: dict[str, Tensor] = {}
        params.update(init_encoder_params(config, rng, self.dtype))
        params.update(init_fusion_params(config, rng, self.dtype))
        params.update(init_decoder_params(self.schedule, rng, self.dtype))
        self.params = params

    def encode(self, clip) -> StageFeatures:
        return encode(self._as_clip(clip), self.params, self.config)

    def forward(self, clip) -> Tensor:
        feats = self.encode(clip)
        fused = fuse(feats, self.params, self.config)
        return decode(fused, self.schedule, self.params)

    def predict_map(self, clip) -> np.ndarray:
        """Inference-only forward returning a plain (H, W) array."""
        with ad.no_grad():
            out = self.forward(clip)
        return out.data[0, 0].copy()

    def _as_clip(self, clip) -> Tensor:
        if isinstance(clip, Tensor):
            return clip
        return ad.tensor(np.asarray(clip, dtype=self.dtype))

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def decoder_parameter_count(self) -> int:
        return parameter_count(self.schedule)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise KeyError(f"parameter set mismatch: missing={sorted(missing)[:3]} extra={sorted(extra)[:3]}")
        for name, p in self.params.items():
            arr = arrays[name]
            if arr.shape != p.data.shape:
                raise ValueError(f"parameter {name!r}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.astype(self.dtype, copy=True)
