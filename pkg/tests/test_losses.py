"""Correlation and KL loss identities, oracle equivalence, gradient checks."""

import logging
import math

import numpy as np
import pytest

from videosal import autodiff as ad
from videosal.errors import DegenerateInputError
from videosal.fdcheck import check_gradients
from videosal.losses import KL_EPS, cc_loss, kl_loss, total_loss

from refimpl import kl_naive, pearson_naive


def tmap(rng, shape=(8, 8), positive=False):
    data = rng.uniform(0.1, 1.0, shape) if positive else rng.standard_normal(shape)
    return ad.tensor(data, dtype=np.float64, requires_grad=True)


class TestCcLoss:
    def test_self_correlation_is_minus_one(self, rng):
        s = tmap(rng)
        assert abs(cc_loss(s, s.data).data + 1.0) <= 1e-9

    def test_anticorrelation_is_plus_one(self, rng):
        s = tmap(rng)
        g = -s.data + 3.7
        assert abs(cc_loss(s, g).data - 1.0) <= 1e-9

    def test_matches_pearson_oracle(self, rng):
        for _ in range(20):
            s = tmap(rng)
            g = rng.standard_normal((8, 8))
            assert abs(cc_loss(s, g).data + pearson_naive(s.data, g)) <= 1e-12

    def test_invariant_under_positive_affine_transform(self, rng):
        s = tmap(rng)
        g = rng.standard_normal((8, 8))
        base = float(cc_loss(s, g).data)
        for a, b in [(2.0, 0.0), (0.3, 1.5), (10.0, -4.0)]:
            scaled = ad.tensor(a * s.data + b, dtype=np.float64)
            assert abs(float(cc_loss(scaled, g).data) - base) <= 1e-9

    def test_constant_map_raises(self, rng):
        s = ad.tensor(np.full((4, 4), 2.0), dtype=np.float64)
        with pytest.raises(DegenerateInputError):
            cc_loss(s, rng.standard_normal((4, 4)))
        with pytest.raises(DegenerateInputError):
            cc_loss(tmap(rng, (4, 4)), np.ones((4, 4)))

    def test_transpose_invariance(self, rng):
        s = tmap(rng, (5, 9))
        g = rng.standard_normal((5, 9))
        a = float(cc_loss(s, g).data)
        b = float(cc_loss(ad.tensor(s.data.T, dtype=np.float64), g.T).data)
        assert abs(a - b) <= 1e-12


class TestKlLoss:
    def test_identical_maps_near_zero(self, rng):
        g = rng.uniform(0.1, 1.0, (8, 8))
        s = ad.tensor(g.copy(), dtype=np.float64)
        val = float(kl_loss(s, g).data)
        assert abs(val) <= 1e-9

    def test_delta_vs_uniform_closed_form(self):
        n = 16
        g = np.zeros((4, 4))
        g[1, 2] = 1.0
        s = ad.tensor(np.full((4, 4), 1.0 / n), dtype=np.float64)
        assert abs(float(kl_loss(s, g).data) - math.log(n)) <= 1e-6

    def test_matches_direct_summation_oracle(self, rng):
        for _ in range(20):
            s = tmap(rng, positive=True)
            g = rng.uniform(0.0, 1.0, (8, 8))
            ours = float(kl_loss(s, g).data)
            ref = kl_naive(s.data, g, KL_EPS)
            assert abs(ours - ref) <= 1e-10

    def test_nonnegative_up_to_tolerance(self, rng):
        for _ in range(50):
            s = tmap(rng, positive=True)
            g = rng.uniform(0.0, 1.0, (8, 8))
            assert float(kl_loss(s, g).data) >= -1e-9

    def test_zero_only_when_proportional(self, rng):
        g = rng.uniform(0.1, 1.0, (6, 6))
        prop = ad.tensor(3.0 * g, dtype=np.float64)
        assert abs(float(kl_loss(prop, g).data)) <= 1e-9
        other = ad.tensor(g + rng.uniform(0.1, 0.5, (6, 6)), dtype=np.float64)
        assert float(kl_loss(other, g).data) > 1e-4

    def test_negative_entries_raise(self, rng):
        s = ad.tensor(np.full((3, 3), -0.1), dtype=np.float64)
        with pytest.raises(DegenerateInputError):
            kl_loss(s, np.ones((3, 3)))

    def test_zero_sum_raises(self):
        s = ad.tensor(np.zeros((3, 3)), dtype=np.float64)
        with pytest.raises(DegenerateInputError):
            kl_loss(s, np.ones((3, 3)))

    def test_transpose_invariance(self, rng):
        s = tmap(rng, (5, 9), positive=True)
        g = rng.uniform(0.0, 1.0, (5, 9))
        a = float(kl_loss(s, g).data)
        b = float(kl_loss(ad.tensor(s.data.T, dtype=np.float64), g.T).data)
        assert abs(a - b) <= 1e-12


class TestTotalLoss:
    def test_identical_maps_total_minus_one(self, rng):
        g = rng.uniform(0.1, 1.0, (8, 8))
        rep = total_loss(ad.tensor(g.copy(), dtype=np.float64), g)
        assert abs(rep.total + 1.0) <= 1e-9
        assert abs(rep.total - (rep.cc_term + rep.kl_term)) <= 1e-12

    def test_gradient_against_finite_differences(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            s = tmap(rng, (6, 6), positive=True)
            g = rng.uniform(0.05, 1.0, (6, 6))
            err = check_gradients(lambda: total_loss(s, g).loss, [s])
            assert err <= 1e-4, f"seed {seed}: {err}"

    def test_gradient_flows_through_both_terms(self, rng):
        s = tmap(rng, positive=True)
        g = rng.uniform(0.05, 1.0, (8, 8))
        cc_loss(s, g).backward()
        cc_grad = s.grad.copy()
        s.zero_grad()
        kl_loss(s, g).backward()
        kl_grad = s.grad.copy()
        assert np.abs(cc_grad).max() > 0 and np.abs(kl_grad).max() > 0

    def test_blending_toward_target_decreases_loss(self):
        rng = np.random.default_rng(99)
        s0 = rng.uniform(0.05, 1.0, (8, 8))
        g = rng.uniform(0.05, 1.0, (8, 8))
        losses = []
        for lam in np.linspace(0.0, 0.9, 10):
            blend = ad.tensor((1 - lam) * s0 + lam * g, dtype=np.float64)
            losses.append(total_loss(blend, g).total)
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_degenerate_cc_training_mode_warns_and_zeroes(self, rng, caplog):
        s = ad.tensor(np.full((4, 4), 0.5), dtype=np.float64, requires_grad=True)
        g = rng.uniform(0.1, 1.0, (4, 4))
        with caplog.at_level(logging.WARNING, logger="videosal.losses"):
            rep = total_loss(s, g, on_degenerate="zero")
        assert rep.cc_term == 0.0
        assert rep.cc_degenerate
        assert any("degenerate" in r.message for r in caplog.records)
        with pytest.raises(DegenerateInputError):
            total_loss(s, g)
