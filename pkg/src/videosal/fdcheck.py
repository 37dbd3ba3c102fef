"""Central finite-difference gradient verification.

Used by the test suite and by the `gradcheck` CLI subcommand.  Checks run at
64-bit with step 1e-5 by default; the comparison is a max relative error over
all checked coordinates with an absolute floor so near-zero gradients do not
blow up the ratio.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor, backward, zero_grads


def finite_difference_grad(f: Callable[[], Tensor], param: Tensor,
                           step: float = 1e-5, coords: Sequence[int] | None = None) -> np.ndarray:
    """Central-difference gradient of scalar f() w.r.t. selected flat coords of `param`.

    Returns a dense array shaped like `param` with unchecked coordinates zero.
    """
    flat = param.data.reshape(-1)
    idx = range(flat.size) if coords is None else coords
    grad = np.zeros_like(flat)
    for i in idx:
        orig = flat[i]
        flat[i] = orig + step
        hi = float(f().data.reshape(-1)[0])
        flat[i] = orig - step
        lo = float(f().data.reshape(-1)[0])
        flat[i] = orig
        grad[i] = (hi - lo) / (2.0 * step)
    return grad.reshape(param.data.shape)


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray,
                       coords: Sequence[int] | None = None, floor: float = 1e-6) -> float:
    a = analytic.reshape(-1)
    n = numeric.reshape(-1)
    if coords is not None:
        a = a[list(coords)]
        n = n[list(coords)]
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def l2_relative_error(analytic: np.ndarray, numeric: np.ndarray,
                      coords: Sequence[int] | None = None) -> float:
    """Whole-vector ||a - n|| / ||n||; robust when single-eval noise dominates."""
    a = analytic.reshape(-1)
    n = numeric.reshape(-1)
    if coords is not None:
        a = a[list(coords)]
        n = n[list(coords)]
    denom = max(float(np.linalg.norm(n)), 1e-12)
    return float(np.linalg.norm(a - n)) / denom


def check_gradients(build_loss: Callable[[], Tensor], params: Sequence[Tensor],
                    step: float = 1e-5, max_coords_per_param: int | None = None,
                    rng: np.random.Generator | None = None,
                    metric: str = "max_rel") -> float:
    """Backprop `build_loss` once, FD-check each parameter, return worst relative error.

    With `max_coords_per_param`, a random subset of coordinates per parameter is
    checked (for composed models where a dense sweep is too slow).  metric
    "max_rel" bounds the per-coordinate error; "l2" compares whole vectors
    (the right notion when evaluations themselves are float32-noisy).
    """
    zero_grads(params)
    loss = build_loss()
    backward(loss)
    compare = max_relative_error if metric == "max_rel" else l2_relative_error
    worst = 0.0
    for p in params:
        if max_coords_per_param is not None and p.data.size > max_coords_per_param:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(p.data.size, size=max_coords_per_param, replace=False)
            coords = [int(c) for c in coords]
        else:
            coords = list(range(p.data.size))
        numeric = finite_difference_grad(build_loss, p, step=step, coords=coords)
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        worst = max(worst, compare(analytic, numeric, coords=coords))
    return worst


@dataclass
class SuiteResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def _primitive_suites(dtype, rng):
    from . import autodiff as ad
    from .ops import (ConvSpec, avg_pool_temporal, conv3d, layer_norm, linear,
                      relu, sigmoid, softmax, upsample_spatial)

    def t(shape, positive=False):
        data = rng.uniform(0.5, 2.0, shape) if positive else rng.standard_normal(shape)
        return ad.tensor(data, dtype=dtype, requires_grad=True)

    a, b = t((3, 4)), t((3, 4))
    pos = t((3, 4), positive=True)
    # inputs bounded away from the relu kink so finite differences stay valid
    kink_free = ad.tensor(rng.uniform(0.2, 1.5, (3, 4)) * rng.choice([-1.0, 1.0], (3, 4)),
                          dtype=dtype, requires_grad=True)
    mm = t((4, 5))
    x5 = t((1, 2, 4, 4, 3))
    dense = ConvSpec(kernel=(2, 3, 3), stride=(2, 1, 1), padding=(0, 1, 1),
                     in_channels=2, out_channels=2)
    wd, bd = t(dense.weight_shape), t((2,))
    xdw = t((1, 3, 4, 4, 4))
    depth = ConvSpec(kernel=(2, 3, 3), stride=(2, 1, 1), padding=(0, 1, 1),
                     in_channels=3, out_channels=3, groups=3)
    wdw, bdw = t(depth.weight_shape), t((3,))
    xl, wl, bl = t((2, 3, 4)), t((5, 4)), t((5,))
    xn, gn, bn = t((3, 8)), t((8,)), t((8,))

    return [
        ("elementwise", lambda: ((a * b + a / pos - b) ** 2.0).sum(), [a, b, pos]),
        ("log_sqrt_exp", lambda: (ad.log(pos) + ad.sqrt(pos) + ad.exp(a * 0.3)).sum(), [a, pos]),
        ("reductions_matmul", lambda: ((a @ mm).mean(axis=0) ** 2.0).sum(), [a, mm]),
        ("conv3d", lambda: (conv3d(x5, dense, wd, bd) ** 2.0).sum(), [x5, wd, bd]),
        ("conv3d_depthwise", lambda: (conv3d(xdw, depth, wdw, bdw) ** 2.0).sum(), [xdw, wdw, bdw]),
        ("upsample_spatial", lambda: (upsample_spatial(x5, 2) ** 2.0).sum(), [x5]),
        ("linear", lambda: (linear(xl, wl, bl) ** 2.0).sum(), [xl, wl, bl]),
        ("softmax", lambda: (softmax(xn, axis=1) ** 2.0).sum(), [xn]),
        ("layer_norm", lambda: (layer_norm(xn, gn, bn) ** 2.0).sum(), [xn, gn, bn]),
        ("activations", lambda: (relu(kink_free) * sigmoid(b)).sum(), [kink_free, b]),
        ("temporal_pool", lambda: (avg_pool_temporal(x5, 2) ** 2.0).sum(), [x5]),
    ]


def _loss_suites(dtype, rng):
    from . import autodiff as ad
    from .losses import cc_loss, kl_loss, total_loss

    s = ad.tensor(rng.uniform(0.05, 1.0, (6, 6)), dtype=dtype, requires_grad=True)
    g = rng.uniform(0.05, 1.0, (6, 6)).astype(dtype)
    return [
        ("cc_loss", lambda: cc_loss(s, g), [s]),
        ("kl_loss", lambda: kl_loss(s, g), [s]),
        ("total_loss", lambda: total_loss(s, g).loss, [s]),
    ]


_E2E_PARAM_NAMES = (
    "encoder.embed.w", "encoder.s1.b0.q_w", "encoder.s3.b0.mlp2_w",
    "encoder.merge2.w", "fusion.p1.w", "fusion.p4.b",
    "decoder.l0.w",
)


def _tiny_model(dtype, seed):
    from .config import ModelConfig
    from .model import SaliencyModel

    cfg = ModelConfig(frames=4, height=32, width=32, base_dim=8,
                      window=(2, 2, 2), heads=(1, 1, 1, 1), depths=(1, 1, 1, 1))
    return SaliencyModel(cfg, dtype=dtype, seed=seed)


def _end_to_end_suite(dtype, seed):
    from .losses import total_loss

    model = _tiny_model(dtype, seed)
    rng = np.random.default_rng(seed)
    clip = rng.uniform(0, 1, (4, 32, 32, 3))
    gt = rng.uniform(0.05, 1.0, (32, 32))
    gt /= gt.sum()
    names = _E2E_PARAM_NAMES + (f"decoder.l{len(model.schedule.layers) - 1}.w",)
    subset = [model.params[name] for name in names]

    def loss():
        pred = model.forward(clip).reshape(32, 32)
        return total_loss(pred, gt).loss

    return loss, subset


def _e2e_f32_against_f64_twin(seed) -> float:
    """L2 error of the float32 backward against the float64 analytic gradient.

    Finite differences through a whole model are pure noise at float32, so the
    32-bit path is checked against the 64-bit twin (same seed, same weights up
    to rounding) instead.
    """
    from .losses import total_loss

    worst = 0.0
    grads = {}
    for dtype in (np.float32, np.float64):
        model = _tiny_model(dtype, seed)
        rng = np.random.default_rng(seed)
        clip = rng.uniform(0, 1, (4, 32, 32, 3))
        gt = rng.uniform(0.05, 1.0, (32, 32))
        gt /= gt.sum()
        pred = model.forward(clip).reshape(32, 32)
        loss = total_loss(pred, gt).loss
        backward(loss)
        names = _E2E_PARAM_NAMES + (f"decoder.l{len(model.schedule.layers) - 1}.w",)
        grads[dtype] = [model.params[n].grad for n in names]
    for g32, g64 in zip(grads[np.float32], grads[np.float64]):
        worst = max(worst, l2_relative_error(g32.astype(np.float64), g64))
    return worst


def run_suites(dtype: str = "f64", seeds: int = 10, base_seed: int = 0) -> list[SuiteResult]:
    """Run every finite-difference suite; primitives/losses over `seeds` seeds."""
    np_dtype = np.float64 if dtype == "f64" else np.float32
    if dtype == "f64":
        step, tol, tol_e2e, metric = 1e-5, 1e-4, 1e-3, "max_rel"
    else:
        # float32 evaluations carry ~1e-7 relative noise: use a larger step and
        # compare whole gradient vectors instead of per-coordinate ratios
        step, tol, tol_e2e, metric = 1e-2, 5e-2, 5e-2, "l2"
    worst: dict[str, float] = {}
    for s in range(seeds):
        rng = np.random.default_rng([base_seed, s])
        for name, fn, params in _primitive_suites(np_dtype, rng) + _loss_suites(np_dtype, rng):
            err = check_gradients(fn, params, step=step, metric=metric)
            worst[name] = max(worst.get(name, 0.0), err)
    results = [SuiteResult(name, err, tol) for name, err in worst.items()]
    if dtype == "f64":
        loss, subset = _end_to_end_suite(np_dtype, base_seed)
        err = check_gradients(loss, subset, step=step, max_coords_per_param=3,
                              rng=np.random.default_rng(base_seed), metric=metric)
    else:
        err = _e2e_f32_against_f64_twin(base_seed)
    results.append(SuiteResult("model_end_to_end", err, tol_e2e))
    return results
