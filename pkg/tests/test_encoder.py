"""Patch embedding, windowed attention, patch merging, and the stage pyramid."""

import numpy as np
import pytest

from videosal import autodiff as ad
from videosal.config import ModelConfig, paper_profile, toy_profile
from videosal.encoder import (
    encode,
    encoder_block,
    init_encoder_params,
    patch_embed,
    patch_merge,
    patch_tokens_raw,
    window_attention,
    window_mhsa,
)
from videosal.errors import ConfigurationError, ShapeError
from videosal.fdcheck import check_gradients
from videosal.ops import layer_norm

from refimpl import dense_attention_naive


def tiny_profile():
    return ModelConfig(frames=4, height=32, width=32, base_dim=8,
                       window=(2, 2, 2), heads=(1, 1, 1, 1), depths=(1, 1, 1, 1))


def rand_clip(rng, cfg, dtype=np.float64):
    return ad.tensor(rng.uniform(0, 1, (cfg.frames, cfg.height, cfg.width, 3)), dtype=dtype)


def make_params(cfg, seed=0, dtype=np.float64):
    return init_encoder_params(cfg, np.random.default_rng(seed), dtype=dtype)


class TestPatchEmbed:
    def test_paper_token_grid_arithmetic(self):
        cfg = paper_profile()
        assert cfg.token_grid(1) == (16, 56, 96)
        assert int(np.prod(cfg.patch)) * 3 == 96

    def test_constant_clip_gives_constant_raw_tokens(self, rng):
        cfg = toy_profile()
        clip = ad.tensor(np.full((8, 32, 64, 3), 0.73), dtype=np.float64)
        raw = patch_tokens_raw(clip, cfg)
        assert raw.shape == (4, 8, 16, 96)
        np.testing.assert_array_equal(raw.data, np.full((4, 8, 16, 96), 0.73))

    def test_toy_grid_against_index_enumeration_oracle(self, rng):
        cfg = toy_profile()
        clip = rand_clip(rng, cfg)
        raw = patch_tokens_raw(clip, cfg).data
        assert raw.shape == (4, 8, 16, 96)
        # token (t,y,x) slot ((dt*4+dy)*4+dx)*3+c must equal pixel (2t+dt, 4y+dy, 4x+dx, c)
        checks = [(t, y, x, dt, dy, dx, c)
                  for t in (0, 3) for y in (0, 7) for x in (0, 15)
                  for dt in (0, 1) for dy in (0, 3) for dx in (0, 3) for c in (0, 2)]
        for t, y, x, dt, dy, dx, c in checks:
            slot = ((dt * 4 + dy) * 4 + dx) * 3 + c
            assert raw[t, y, x, slot] == clip.data[2 * t + dt, 4 * y + dy, 4 * x + dx, c]

    def test_embeds_to_base_dim(self, rng):
        cfg = toy_profile()
        out = patch_embed(rand_clip(rng, cfg), make_params(cfg), cfg)
        assert out.shape == (4, 8, 16, cfg.base_dim)

    def test_wrong_clip_shape_raises(self, rng):
        cfg = toy_profile()
        with pytest.raises(ShapeError):
            patch_embed(ad.tensor(np.zeros((8, 32, 60, 3))), make_params(cfg), cfg)


class TestWindowAttention:
    def _identity_params(self, dim, prefix="blk"):
        p = {}
        for name in ("q", "k", "v", "o"):
            p[f"{prefix}.{name}_w"] = ad.tensor(np.eye(dim), dtype=np.float64)
            p[f"{prefix}.{name}_b"] = ad.tensor(np.zeros(dim), dtype=np.float64)
        return p

    def test_single_window_matches_dense_oracle(self, rng):
        dim = 6
        x = ad.tensor(rng.standard_normal((2, 2, 2, dim)), dtype=np.float64)
        p = self._identity_params(dim)
        out = window_mhsa(x, (2, 2, 2), 1, p, "blk")
        eye, zero = np.eye(dim), np.zeros(dim)
        expected = dense_attention_naive(
            x.data.reshape(8, dim), eye, eye, eye, eye, zero, zero, zero, zero, heads=1
        ).reshape(2, 2, 2, dim)
        np.testing.assert_allclose(out.data, expected, atol=1e-10)

    def test_multi_head_matches_dense_oracle(self, rng):
        dim, heads = 8, 2
        x = ad.tensor(rng.standard_normal((1, 2, 2, dim)), dtype=np.float64)
        p = {}
        for name in ("q", "k", "v", "o"):
            p[f"blk.{name}_w"] = ad.tensor(rng.standard_normal((dim, dim)), dtype=np.float64)
            p[f"blk.{name}_b"] = ad.tensor(rng.standard_normal(dim), dtype=np.float64)
        out = window_mhsa(x, (1, 2, 2), heads, p, "blk")
        expected = dense_attention_naive(
            x.data.reshape(4, dim),
            p["blk.q_w"].data, p["blk.k_w"].data, p["blk.v_w"].data, p["blk.o_w"].data,
            p["blk.q_b"].data, p["blk.k_b"].data, p["blk.v_b"].data, p["blk.o_b"].data,
            heads=heads,
        ).reshape(1, 2, 2, dim)
        np.testing.assert_allclose(out.data, expected, atol=1e-10)

    def test_disjoint_windows_do_not_interact(self, rng):
        dim = 4
        base = rng.standard_normal((2, 2, 4, dim))
        p = self._identity_params(dim)
        out_a = window_mhsa(ad.tensor(base, dtype=np.float64), (2, 2, 2), 1, p, "blk").data
        perturbed = base.copy()
        perturbed[0, 0, 0] += 5.0  # lives in the first window (x < 2)
        out_b = window_mhsa(ad.tensor(perturbed, dtype=np.float64), (2, 2, 2), 1, p, "blk").data
        np.testing.assert_array_equal(out_a[:, :, 2:], out_b[:, :, 2:])
        assert np.abs(out_a[:, :, :2] - out_b[:, :, :2]).max() > 0

    def test_attention_rows_sum_to_one(self, rng):
        dim = 4
        x = ad.tensor(rng.standard_normal((2, 4, 4, dim)), dtype=np.float64)
        p = self._identity_params(dim)
        _, attn = window_mhsa(x, (2, 2, 2), 2, p, "blk", return_weights=True)
        np.testing.assert_allclose(attn.data.sum(axis=-1),
                                   np.ones(attn.shape[:-1]), atol=1e-9)

    def test_window_locality_gradient_exactly_zero(self, rng):
        dim = 4
        x = ad.tensor(rng.standard_normal((2, 2, 4, dim)), dtype=np.float64, requires_grad=True)
        p = self._identity_params(dim)
        out = window_mhsa(x, (2, 2, 2), 1, p, "blk")
        out_window_b = out * ad.tensor(
            np.concatenate([np.zeros((2, 2, 2, dim)), np.ones((2, 2, 2, dim))], axis=2),
            dtype=np.float64)
        out_window_b.sum().backward()
        np.testing.assert_array_equal(x.grad[:, :, :2], np.zeros((2, 2, 2, dim)))
        assert np.abs(x.grad[:, :, 2:]).max() > 0

    def test_indivisible_window_raises(self, rng):
        x = ad.tensor(rng.standard_normal((2, 3, 4, 4)), dtype=np.float64)
        with pytest.raises(ConfigurationError):
            window_mhsa(x, (2, 2, 2), 1, self._identity_params(4), "blk")

    def test_residual_block_output_shape(self, rng):
        cfg = tiny_profile()
        params = make_params(cfg)
        x = ad.tensor(rng.standard_normal((2, 8, 8, 8)), dtype=np.float64)
        out = window_attention(x, (2, 2, 2), 1, params, "encoder.s1.b0")
        assert out.shape == x.shape


class TestPatchMerge:
    def test_selector_projection_returns_top_left(self, rng):
        c = 5
        x = ad.tensor(rng.standard_normal((2, 4, 6, c)), dtype=np.float64)
        w = np.zeros((2 * c, 4 * c))
        w[:c, :c] = np.eye(c)  # rows selecting the first C inputs = top-left neighbor
        p = {"m.w": ad.tensor(w, dtype=np.float64), "m.b": ad.tensor(np.zeros(2 * c), dtype=np.float64)}
        out = patch_merge(x, p, "m")
        assert out.shape == (2, 2, 3, 2 * c)
        np.testing.assert_allclose(out.data[..., :c], x.data[:, 0::2, 0::2, :], atol=1e-12)
        np.testing.assert_array_equal(out.data[..., c:], np.zeros((2, 2, 3, c)))

    def test_paper_stage2_grid_arithmetic(self):
        cfg = paper_profile()
        assert cfg.token_grid(2) == (16, 28, 48)
        assert cfg.stage_dim(2) == 2 * cfg.base_dim

    def test_output_depends_only_on_its_2x2_neighborhood(self, rng):
        c = 4
        base = rng.standard_normal((1, 4, 4, c))
        p = {"m.w": ad.tensor(rng.standard_normal((2 * c, 4 * c)), dtype=np.float64),
             "m.b": ad.tensor(rng.standard_normal(2 * c), dtype=np.float64)}
        ref = patch_merge(ad.tensor(base, dtype=np.float64), p, "m").data
        pert = base.copy()
        pert[0, 3, 3] += 2.0  # inside output token (1, 1)'s neighborhood only
        out = patch_merge(ad.tensor(pert, dtype=np.float64), p, "m").data
        delta = np.abs(out - ref).sum(axis=-1)[0]
        assert delta[1, 1] > 0
        delta[1, 1] = 0.0
        np.testing.assert_array_equal(delta, np.zeros((2, 2)))

    def test_odd_spatial_raises(self, rng):
        x = ad.tensor(np.zeros((2, 3, 4, 4)))
        p = {"m.w": ad.tensor(np.zeros((8, 16))), "m.b": ad.tensor(np.zeros(8))}
        with pytest.raises(ShapeError):
            patch_merge(x, p, "m")


class TestEncode:
    def test_toy_pyramid_shapes(self, rng):
        cfg = toy_profile()
        feats = encode(rand_clip(rng, cfg), make_params(cfg), cfg)
        assert feats.shapes() == [(16, 4, 8, 16), (32, 4, 4, 8), (64, 4, 2, 4), (128, 4, 1, 2)]

    def test_paper_pyramid_shape_contract(self):
        cfg = paper_profile()
        assert cfg.stage_shapes() == [
            (96, 16, 56, 96),
            (192, 16, 28, 48),
            (384, 16, 14, 24),
            (768, 16, 7, 12),
        ]

    def test_temporal_dim_preserved_across_stages(self, rng):
        cfg = tiny_profile()
        feats = encode(rand_clip(rng, cfg), make_params(cfg), cfg)
        assert all(s[1] == cfg.frames // 2 for s in feats.shapes())

    def test_zero_projections_reduce_to_norms_of_embedding(self, rng):
        cfg = tiny_profile()
        params = make_params(cfg)
        for name, p in params.items():
            if name.endswith("_w") and ".embed." not in name and ".merge" not in name:
                p.data[:] = 0.0
        clip = rand_clip(rng, cfg)
        feats = encode(clip, params, cfg)
        tokens = patch_embed(clip, params, cfg)
        expected = layer_norm(tokens, params["encoder.s1.norm_g"], params["encoder.s1.norm_b"])
        np.testing.assert_allclose(feats.f1.data, expected.data.transpose(3, 0, 1, 2), atol=1e-12)

    def test_deterministic_given_weights(self, rng):
        cfg = tiny_profile()
        params = make_params(cfg)
        clip = rand_clip(rng, cfg)
        a = encode(clip, params, cfg)
        b = encode(clip, params, cfg)
        for fa, fb in zip(a.as_list(), b.as_list()):
            np.testing.assert_array_equal(fa.data, fb.data)

    def test_end_to_end_gradients_finite_difference(self, rng):
        cfg = tiny_profile()
        params = make_params(cfg)
        clip = rand_clip(rng, cfg)
        checked = {
            "encoder.embed.w": params["encoder.embed.w"],
            "encoder.s1.b0.q_w": params["encoder.s1.b0.q_w"],
            "encoder.s2.b0.mlp1_w": params["encoder.s2.b0.mlp1_w"],
            "encoder.merge1.w": params["encoder.merge1.w"],
            "encoder.s4.norm_g": params["encoder.s4.norm_g"],
            "encoder.s3.b0.o_b": params["encoder.s3.b0.o_b"],
        }

        def loss():
            feats = encode(clip, params, cfg)
            return sum((f ** 2.0).mean() for f in feats.as_list())

        err = check_gradients(loss, list(checked.values()), max_coords_per_param=4,
                              rng=np.random.default_rng(7))
        assert err <= 1e-4
