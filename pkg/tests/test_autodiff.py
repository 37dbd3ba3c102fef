"""Graph mechanics and gradient correctness of the autodiff primitives."""

import numpy as np
import pytest

from videosal import autodiff as ad
from videosal.errors import GraphError, ShapeError
from videosal.fdcheck import check_gradients


def randt(rng, shape, requires_grad=True):
    return ad.tensor(rng.standard_normal(shape), dtype=np.float64, requires_grad=requires_grad)


class TestGraphMechanics:
    def test_sum_gradient_is_ones(self, rng):
        x = randt(rng, (3, 4))
        loss = x.sum()
        loss.backward()
        np.testing.assert_array_equal(x.grad, np.ones((3, 4)))

    def test_square_gradient_is_2x(self, rng):
        x = randt(rng, (5,))
        loss = (x * x).sum()
        loss.backward()
        np.testing.assert_allclose(x.grad, 2 * x.data, rtol=1e-12)

    def test_backward_on_non_scalar_raises(self, rng):
        x = randt(rng, (3,))
        y = x * 2.0
        with pytest.raises(ShapeError):
            y.backward()

    def test_second_backward_without_retain_raises(self, rng):
        x = randt(rng, (3,))
        loss = (x * x).sum()
        loss.backward()
        with pytest.raises(GraphError):
            loss.backward()

    def test_retain_graph_allows_second_backward(self, rng):
        x = randt(rng, (3,))
        loss = (x * x).sum()
        loss.backward(retain_graph=True)
        first = x.grad.copy()
        loss.backward()
        np.testing.assert_allclose(x.grad, 2 * first)

    def test_no_grad_skips_recording(self, rng):
        x = randt(rng, (3,))
        with ad.no_grad():
            y = (x * x).sum()
        assert not y.requires_grad
        with pytest.raises(GraphError):
            y.backward()

    def test_grad_accumulates_across_uses(self, rng):
        x = randt(rng, (4,))
        loss = (x + x).sum()
        loss.backward()
        np.testing.assert_array_equal(x.grad, 2 * np.ones(4))

    def test_constants_get_no_grad(self, rng):
        x = randt(rng, (4,))
        c = ad.tensor(np.ones(4), dtype=np.float64)
        loss = (x * c).sum()
        loss.backward()
        assert c.grad is None

    def test_dtype_mismatch_rejected(self):
        a = ad.tensor(np.ones(3, dtype=np.float32))
        b = ad.tensor(np.ones(3, dtype=np.float64))
        with pytest.raises(TypeError):
            ad.add(a, b)

    def test_determinism_bitwise(self, rng):
        data = rng.standard_normal((6, 6))
        outs = []
        for _ in range(2):
            x = ad.tensor(data.copy(), requires_grad=True)
            y = ((x * x).sum() * 0.5 + x.mean())
            y.backward()
            outs.append((y.data.copy(), x.grad.copy()))
        np.testing.assert_array_equal(outs[0][0], outs[1][0])
        np.testing.assert_array_equal(outs[0][1], outs[1][1])


class TestBroadcastAndStructure:
    def test_broadcast_add_gradient(self, rng):
        x = randt(rng, (3, 4))
        b = randt(rng, (4,))
        (x + b).sum().backward()
        np.testing.assert_array_equal(b.grad, np.full(4, 3.0))

    def test_scalar_tensor_broadcast(self, rng):
        x = randt(rng, (2, 3))
        s = randt(rng, ())
        (x * s).sum().backward()
        np.testing.assert_allclose(s.grad, x.data.sum(), rtol=1e-12)

    def test_reshape_transpose_roundtrip_grad(self, rng):
        x = randt(rng, (2, 3, 4))
        y = x.reshape(6, 4).transpose(1, 0)
        (y * y).sum().backward()
        np.testing.assert_allclose(x.grad, 2 * x.data, rtol=1e-12)

    def test_matmul_against_numpy(self, rng):
        a = randt(rng, (3, 4))
        b = randt(rng, (4, 5))
        out = a @ b
        np.testing.assert_allclose(out.data, a.data @ b.data, rtol=1e-12)

    def test_matmul_batched_shapes(self, rng):
        a = randt(rng, (2, 3, 4, 5))
        b = randt(rng, (2, 3, 5, 6))
        assert (a @ b).shape == (2, 3, 4, 6)

    def test_matmul_inner_dim_mismatch(self, rng):
        with pytest.raises(ShapeError):
            randt(rng, (3, 4)) @ randt(rng, (3, 4))


FD_SEEDS = list(range(10))


@pytest.mark.parametrize("seed", FD_SEEDS)
def test_primitive_gradients_finite_difference(seed):
    """Every elementwise/reduction/matmul primitive vs central differences."""
    rng = np.random.default_rng(seed)
    a = randt(rng, (3, 4))
    b = randt(rng, (3, 4))
    c = randt(rng, (4, 2))
    pos = ad.tensor(rng.uniform(0.5, 2.0, (3, 4)), dtype=np.float64, requires_grad=True)

    cases = {
        "add": lambda: (a + b).sum(),
        "sub": lambda: (a - b).mean(),
        "mul": lambda: (a * b).sum(),
        "div": lambda: (a / pos).sum(),
        "neg": lambda: (-a).sum(),
        "pow": lambda: (pos**1.7).sum(),
        "log": lambda: ad.log(pos).sum(),
        "sqrt": lambda: ad.sqrt(pos).sum(),
        "exp": lambda: ad.exp(a * 0.3).sum(),
        "sum_axis": lambda: (a.sum(axis=1) * b.mean(axis=0).sum()).sum(),
        "matmul": lambda: (a @ c).sum(),
        "mean_keepdims": lambda: ((a - a.mean(axis=1, keepdims=True)) ** 2.0).sum(),
    }
    for name, fn in cases.items():
        err = check_gradients(fn, [a, b, c, pos])
        assert err <= 1e-4, f"{name}: max relative error {err}"
