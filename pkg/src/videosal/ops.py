"""Differentiable tensor kernels used by the saliency model.

All kernels are pure functions of their inputs and record tape nodes through
:mod:`videosal.autodiff`.  The 3D convolution runs as an unrolled matrix
product per output time step, which keeps the im2col scratch buffer small even
at full input resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import Tensor, _accumulate, _node, tmean, reshape
from .errors import ConfigurationError, ShapeError


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a 3D convolution: kernel/stride/padding as (t, h, w)."""

    kernel: tuple[int, int, int]
    stride: tuple[int, int, int] = (1, 1, 1)
    padding: tuple[int, int, int] = (0, 0, 0)
    in_channels: int = 1
    out_channels: int = 1
    groups: int = 1

    def validate(self) -> None:
        if any(k < 1 for k in self.kernel) or any(s < 1 for s in self.stride):
            raise ConfigurationError(f"kernel and stride entries must be >= 1: {self}")
        if any(p < 0 for p in self.padding):
            raise ConfigurationError(f"padding entries must be >= 0: {self}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigurationError(f"channel counts must be >= 1: {self}")
        if self.groups not in (1, self.in_channels):
            raise ConfigurationError(f"groups must be 1 or in_channels, got {self.groups}")
        if self.groups == self.in_channels and self.out_channels != self.in_channels:
            raise ConfigurationError("depthwise convolution requires out_channels == in_channels")

    def out_dims(self, in_dims: tuple[int, int, int]) -> tuple[int, int, int]:
        """Output (T', H', W') per out = floor((in + 2p - k)/s) + 1."""
        out = tuple(
            (n + 2 * p - k) // s + 1
            for n, k, s, p in zip(in_dims, self.kernel, self.stride, self.padding)
        )
        if any(n < 1 for n in out):
            raise ConfigurationError(
                f"convolution output dims {out} collapse below 1 for input {in_dims} with {self}"
            )
        return out

    @property
    def weight_shape(self) -> tuple[int, ...]:
        return (self.out_channels, self.in_channels // self.groups) + self.kernel

    def parameter_count(self) -> int:
        return int(np.prod(self.weight_shape)) + self.out_channels


def _conv3d_forward(x, w, b, spec: ConvSpec):
    n, cin, t, h, wd = x.shape
    kt, kh, kw = spec.kernel
    st, sh, sw = spec.stride
    pt, ph, pw = spec.padding
    to, ho, wo = spec.out_dims((t, h, wd))
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
    out = np.empty((n, spec.out_channels, to, ho, wo), dtype=x.dtype)
    if spec.groups == 1:
        wmat = w.reshape(spec.out_channels, -1)
        for ti in range(to):
            slab = xp[:, :, ti * st : ti * st + kt]
            win = sliding_window_view(slab, (kh, kw), axis=(3, 4))[:, :, :, ::sh, ::sw]
            cols = win.transpose(0, 3, 4, 1, 2, 5, 6).reshape(n * ho * wo, cin * kt * kh * kw)
            y = cols @ wmat.T + b
            out[:, :, ti] = y.reshape(n, ho, wo, spec.out_channels).transpose(0, 3, 1, 2)
    else:
        wdw = w[:, 0]
        for ti in range(to):
            slab = xp[:, :, ti * st : ti * st + kt]
            win = sliding_window_view(slab, (kh, kw), axis=(3, 4))[:, :, :, ::sh, ::sw]
            out[:, :, ti] = np.einsum("nctHWjk,ctjk->ncHW", win, wdw) + b[None, :, None, None]
    return out


def _conv3d_backward(g, x, w, spec: ConvSpec):
    n, cin, t, h, wd = x.shape
    kt, kh, kw = spec.kernel
    st, sh, sw = spec.stride
    pt, ph, pw = spec.padding
    to, ho, wo = spec.out_dims((t, h, wd))
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    gb = g.sum(axis=(0, 2, 3, 4))
    if spec.groups == 1:
        wmat = w.reshape(spec.out_channels, -1)
        gwmat = gw.reshape(spec.out_channels, -1)
        for ti in range(to):
            t0 = ti * st
            slab = xp[:, :, t0 : t0 + kt]
            win = sliding_window_view(slab, (kh, kw), axis=(3, 4))[:, :, :, ::sh, ::sw]
            cols = win.transpose(0, 3, 4, 1, 2, 5, 6).reshape(n * ho * wo, cin * kt * kh * kw)
            gout = g[:, :, ti].transpose(0, 2, 3, 1).reshape(n * ho * wo, spec.out_channels)
            gwmat += gout.T @ cols
            gcols = (gout @ wmat).reshape(n, ho, wo, cin, kt, kh, kw)
            for i in range(kt):
                for j in range(kh):
                    for k in range(kw):
                        gxp[:, :, t0 + i, j : j + ho * sh : sh, k : k + wo * sw : sw] += (
                            gcols[:, :, :, :, i, j, k].transpose(0, 3, 1, 2)
                        )
    else:
        wdw = w[:, 0]
        for ti in range(to):
            t0 = ti * st
            slab = xp[:, :, t0 : t0 + kt]
            win = sliding_window_view(slab, (kh, kw), axis=(3, 4))[:, :, :, ::sh, ::sw]
            gout = g[:, :, ti]
            gw[:, 0] += np.einsum("ncHW,nctHWjk->ctjk", gout, win)
            for i in range(kt):
                for j in range(kh):
                    for k in range(kw):
                        gxp[:, :, t0 + i, j : j + ho * sh : sh, k : k + wo * sw : sw] += (
                            gout * wdw[None, :, i, j, k, None, None]
                        )
    if pt or ph or pw:
        gx = gxp[:, :, pt : pt + t, ph : ph + h, pw : pw + wd]
    else:
        gx = gxp
    return gx, gw, gb


def conv3d(x: Tensor, spec: ConvSpec, weight: Tensor, bias: Tensor) -> Tensor:
    """3D convolution over (N, C, T, H, W) input; differentiable in all three."""
    spec.validate()
    if x.ndim != 5:
        raise ShapeError(f"conv3d input must be 5-D (N,C,T,H,W), got shape {tuple(x.shape)}")
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"conv3d input has {x.shape[1]} channels, spec expects {spec.in_channels}")
    if tuple(weight.shape) != spec.weight_shape:
        raise ShapeError(f"conv3d weight shape {tuple(weight.shape)} != expected {spec.weight_shape}")
    if tuple(bias.shape) != (spec.out_channels,):
        raise ShapeError(f"conv3d bias shape {tuple(bias.shape)} != ({spec.out_channels},)")
    out_data = _conv3d_forward(x.data, weight.data, bias.data, spec)

    def bw(g):
        gx, gw, gb = _conv3d_backward(g, x.data, weight.data, spec)
        _accumulate(x, gx)
        _accumulate(weight, gw)
        _accumulate(bias, gb)

    return _node(out_data, (x, weight, bias), bw, "conv3d")


def upsample_spatial(x: Tensor, factor: int) -> Tensor:
    """Nearest-neighbor upsampling of H and W by an integer factor."""
    if factor < 1:
        raise ConfigurationError(f"upsample factor must be >= 1, got {factor}")
    if x.ndim != 5:
        raise ShapeError(f"upsample_spatial input must be 5-D, got shape {tuple(x.shape)}")
    if factor == 1:
        out_data = x.data.copy()

        def bw1(g):
            _accumulate(x, g)

        return _node(out_data, (x,), bw1, "upsample")
    out_data = x.data.repeat(factor, axis=3).repeat(factor, axis=4)

    def bw(g):
        n, c, t, h, w = x.shape
        _accumulate(x, g.reshape(n, c, t, h, factor, w, factor).sum(axis=(4, 6)))

    return _node(out_data, (x,), bw, "upsample")


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map over the last dimension: y = x @ W.T + b, W is (D_out, D_in)."""
    d_in = x.shape[-1]
    if weight.ndim != 2 or weight.shape[1] != d_in:
        raise ShapeError(f"linear weight {tuple(weight.shape)} incompatible with input dim {d_in}")
    if tuple(bias.shape) != (weight.shape[0],):
        raise ShapeError(f"linear bias shape {tuple(bias.shape)} != ({weight.shape[0]},)")
    out_data = x.data @ weight.data.T + bias.data

    def bw(g):
        g2 = g.reshape(-1, weight.shape[0])
        x2 = x.data.reshape(-1, d_in)
        _accumulate(x, (g2 @ weight.data).reshape(x.shape))
        _accumulate(weight, g2.T @ x2)
        _accumulate(bias, g2.sum(axis=0))

    return _node(out_data, (x, weight, bias), bw, "linear")


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0)

    def bw(g):
        _accumulate(x, g * (x.data > 0))

    return _node(out_data, (x,), bw, "relu")


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out_data = np.empty_like(d)
    pos = d >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def bw(g):
        _accumulate(x, g * out_data * (1.0 - out_data))

    return _node(out_data, (x,), bw, "sigmoid")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis` (max-subtracted)."""
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for {x.ndim}-D tensor")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        _accumulate(x, out_data * (g - dot))

    return _node(out_data, (x,), bw, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last dimension to zero mean / unit variance, then scale-shift."""
    d = x.shape[-1]
    if tuple(gamma.shape) != (d,) or tuple(beta.shape) != (d,):
        raise ShapeError(
            f"layer_norm gamma/beta must have shape ({d},), got {tuple(gamma.shape)}/{tuple(beta.shape)}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out_data = xhat * gamma.data + beta.data

    def bw(g):
        lead = tuple(range(g.ndim - 1))
        _accumulate(gamma, (g * xhat).sum(axis=lead))
        _accumulate(beta, g.sum(axis=lead))
        gx = g * gamma.data
        m1 = gx.mean(axis=-1, keepdims=True)
        m2 = (gx * xhat).mean(axis=-1, keepdims=True)
        _accumulate(x, inv * (gx - m1 - xhat * m2))

    return _node(out_data, (x, gamma, beta), bw, "layer_norm")


def avg_pool_temporal(x: Tensor, factor: int) -> Tensor:
    """Average non-overlapping groups of `factor` steps along the T axis of (N,C,T,H,W)."""
    if factor < 1:
        raise ConfigurationError(f"temporal pool factor must be >= 1, got {factor}")
    if factor == 1:
        return x
    n, c, t, h, w = x.shape
    if t % factor:
        raise ShapeError(f"temporal dim {t} not divisible by pool factor {factor}")
    grouped = reshape(x, (n, c, t // factor, factor, h, w))
    return tmean(grouped, axis=3)
