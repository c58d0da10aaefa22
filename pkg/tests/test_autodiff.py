import numpy as np
import pytest

from brdfest import autodiff as ad
from brdfest.autodiff import Tensor, grad_check, parameter
from brdfest.errors import ConfigurationError, NonFiniteGradientError
from brdfest.optim import RMSProp, SGDMomentum


def test_precision_switch():
    assert ad.get_default_dtype() == np.float64
    with ad.precision(np.float32):
        assert Tensor(np.zeros(3)).data.dtype == np.float32
    assert Tensor(np.zeros(3)).data.dtype == np.float64


class TestLinear:
    def test_identity_weights(self):
        x = Tensor(np.random.default_rng(0).normal(size=(4, 5)))
        y = ad.linear(x, Tensor(np.eye(5)), Tensor(np.zeros(5)))
        assert np.array_equal(y.data, x.data)

    def test_bias_gradient_is_ones(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.normal(size=(6, 5)))
        w = parameter(rng.normal(size=(5, 7)))
        b = parameter(np.zeros(7))
        ad.linear(x, w, b).sum().backward()
        assert np.array_equal(b.grad, np.full(7, 6.0))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        x = parameter(rng.normal(size=(5, 5)))
        w = parameter(rng.normal(size=(5, 7)))
        b = parameter(rng.normal(size=7))

        def f(x, w, b):
            return (ad.linear(x, w, b) ** 2.0).sum()

        assert grad_check(f, [x, w, b], h=1e-5) < 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            ad.linear(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))), Tensor(np.zeros(5)))

    def test_exact_rows_matches_plain(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(9, 14)))
        w = Tensor(rng.normal(size=(14, 6)))
        b = Tensor(rng.normal(size=6))
        plain = ad.linear(x, w, b).data
        exact = ad.linear(x, w, b, exact_rows=True).data
        assert np.allclose(plain, exact, rtol=1e-12)


class TestConv:
    def test_delta_filter_is_identity(self):
        rng = np.random.default_rng(4)
        x = Tensor(rng.normal(size=(2, 6, 6, 1)))
        filt = np.zeros((3, 3, 1, 1))
        filt[1, 1, 0, 0] = 1.0
        y = ad.conv3x3(x, Tensor(filt), Tensor(np.zeros(1)))
        assert np.allclose(y.data, x.data, atol=1e-15)

    def test_ones_kernel_on_constant_interior(self):
        c = 0.7
        x = Tensor(np.full((1, 5, 5, 1), c))
        y = ad.conv3x3(x, Tensor(np.ones((3, 3, 1, 1))), Tensor(np.zeros(1)))
        assert y.data[0, 2, 2, 0] == pytest.approx(9 * c, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        x = parameter(rng.normal(size=(2, 4, 4, 3)))
        filt = parameter(rng.normal(size=(3, 3, 3, 2)) * 0.5)
        bias = parameter(rng.normal(size=2))

        def f(x, filt, bias):
            return (ad.conv3x3(x, filt, bias) ** 2.0).sum()

        assert grad_check(f, [x, filt, bias], h=1e-5) < 1e-6

    def test_filter_shape_checked(self):
        with pytest.raises(ConfigurationError):
            ad.conv3x3(Tensor(np.zeros((1, 4, 4, 2))), Tensor(np.zeros((3, 3, 3, 2))), Tensor(np.zeros(2)))


class TestPoolingAndActivations:
    def test_maxpool_basic(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1))
        assert ad.maxpool2x2(x).data.reshape(()) == 4.0

    def test_maxpool_requires_even_dims(self):
        with pytest.raises(ConfigurationError):
            ad.maxpool2x2(Tensor(np.zeros((1, 3, 4, 1))))

    def test_maxpool_gradient_first_index_ties(self):
        x = parameter(np.full((1, 2, 2, 1), 5.0))
        ad.maxpool2x2(x).sum().backward()
        expected = np.zeros((1, 2, 2, 1))
        expected[0, 0, 0, 0] = 1.0  # scan order: (0,0) wins ties
        assert np.array_equal(x.grad, expected)

    def test_relu(self):
        x = Tensor(np.array([-2.0, -0.5, 0.0, 0.5]))
        assert np.array_equal(ad.relu(x).data, [0.0, 0.0, 0.0, 0.5])

    def test_relu_gradient_away_from_kink(self):
        rng = np.random.default_rng(6)
        x = parameter(np.sign(rng.normal(size=20)) * rng.uniform(0.5, 2.0, 20))

        def f(x):
            return (ad.relu(x) * ad.relu(x)).sum()

        assert grad_check(f, [x], h=1e-5) < 1e-3

    def test_tanh_gradient(self):
        rng = np.random.default_rng(7)
        x = parameter(rng.normal(size=12))

        def f(x):
            return ad.tanh(x).sum()

        assert grad_check(f, [x], h=1e-6) < 1e-8


class TestSetOps:
    def test_setmax_basic(self):
        x = Tensor(np.array([[1.0, 5.0], [3.0, 2.0]]))
        assert np.array_equal(ad.setmax(x, axis=0).data, [3.0, 5.0])

    def test_setmax_single_element_identity(self):
        x = Tensor(np.array([[4.0, -1.0, 2.0]]))
        assert np.array_equal(ad.setmax(x, axis=0).data, x.data[0])

    def test_setmax_permutation_bit_exact(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(10, 7))
        base = ad.setmax(Tensor(x), axis=0).data
        for _ in range(5):
            perm = rng.permutation(10)
            assert np.array_equal(ad.setmax(Tensor(x[perm]), axis=0).data, base)

    def test_setmax_gradient_routes_to_first_max(self):
        x = parameter(np.array([[1.0, 2.0], [1.0, 5.0]]))
        ad.setmax(x, axis=0).sum().backward()
        assert np.array_equal(x.grad, [[1.0, 0.0], [0.0, 1.0]])

    def test_moment_pool_values(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert np.allclose(ad.moment_pool(x, axis=0).data, [2.0, 3.0, 1.0, 1.0], atol=1e-15)

    def test_moment_pool_single_element(self):
        x = Tensor(np.array([[7.0, -2.0]]))
        assert np.array_equal(ad.moment_pool(x, axis=0).data, [7.0, -2.0, 0.0, 0.0])

    def test_moment_pool_identical_rows_zero_variance(self):
        row = np.array([0.3, -1.7, 2.2])
        x = Tensor(np.tile(row, (4, 1)))  # power-of-two count: mean is exact
        pooled = ad.moment_pool(x, axis=0).data
        assert np.array_equal(pooled[3:], np.zeros(3))

    def test_moment_pool_permutation_invariant(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(20, 6))
        base = ad.moment_pool(Tensor(x), axis=0).data
        for _ in range(5):
            perm = rng.permutation(20)
            assert np.max(np.abs(ad.moment_pool(Tensor(x[perm]), axis=0).data - base)) < 1e-12

    def test_moment_pool_gradient(self):
        rng = np.random.default_rng(10)
        x = parameter(rng.normal(size=(5, 3)))

        def f(x):
            return (ad.moment_pool(x, axis=0) ** 2.0).sum()

        assert grad_check(f, [x], h=1e-5) < 1e-6

    def test_batched_set_ops_middle_axis(self):
        rng = np.random.default_rng(11)
        x = parameter(rng.normal(size=(2, 6, 4)))

        def f(x):
            return (ad.moment_pool(x, axis=1) ** 2.0).sum() + (ad.setmax(x, axis=1) ** 2.0).sum()

        assert grad_check(f, [x], h=1e-5) < 1e-6


class TestScalarOps:
    def test_elementwise_graph(self):
        rng = np.random.default_rng(12)
        a = parameter(rng.uniform(0.5, 2.0, size=(3, 4)))
        b = parameter(rng.uniform(0.5, 2.0, size=(4,)))

        def f(a, b):
            y = ad.texp(a * b) / (a + b) - ad.tsqrt(a, eps=1e-12) + ad.tcbrt(b) ** 2.0
            return y.sum()

        assert grad_check(f, [a, b], h=1e-6) < 1e-6

    def test_linear_function_gradient_is_near_exact(self):
        x = parameter(np.arange(5, dtype=np.float64))

        def f(x):
            return (x * 3.0 + 1.0).sum()

        # zero curvature: a large h avoids cancellation entirely
        assert grad_check(f, [x], h=1e-2) < 1e-10

    def test_getitem_and_concat(self):
        rng = np.random.default_rng(13)
        x = parameter(rng.normal(size=(4, 5)))

        def f(x):
            left = x[:, 0:2]
            right = x[:, 2:5]
            return (ad.concat([right, left], axis=1) ** 2.0).sum()

        assert grad_check(f, [x], h=1e-5) < 1e-6

    def test_backward_deterministic(self):
        rng = np.random.default_rng(14)
        x = parameter(rng.normal(size=(6, 6)))
        w = parameter(rng.normal(size=(6, 6)))

        def run():
            y = (ad.tanh(x @ w) ** 2.0).mean()
            y.backward()
            return x.grad.copy(), w.grad.copy()

        g1, g2 = run(), run()
        assert np.array_equal(g1[0], g2[0]) and np.array_equal(g1[1], g2[1])


class TestOptimizers:
    def test_zero_gradient_leaves_params(self):
        p = parameter(np.array([1.0, 2.0]))
        p.grad = np.zeros(2)
        before = p.data.copy()
        RMSProp({"p": p}).step()
        assert np.array_equal(p.data, before)
        p.grad = np.zeros(2)
        SGDMomentum({"p": p}).step()
        assert np.array_equal(p.data, before)

    def test_sgd_first_step(self):
        p = parameter(np.array([1.0]))
        p.grad = np.array([1.0])
        SGDMomentum({"p": p}, lr=0.01, momentum=0.9).step()
        assert p.data[0] == pytest.approx(0.99, abs=1e-15)

    def test_rmsprop_first_step_frozen(self):
        # lr / (sqrt(0.1) + 1e-8), from direct evaluation of the update rule
        p = parameter(np.array([1.0]))
        p.grad = np.array([1.0])
        RMSProp({"p": p}, lr=1e-4).step()
        assert 1.0 - p.data[0] == pytest.approx(0.00031622775601683825, rel=1e-10)

    def test_sgd_momentum_accumulates(self):
        p = parameter(np.array([0.0]))
        opt = SGDMomentum({"p": p}, lr=0.1, momentum=0.5)
        p.grad = np.array([1.0])
        opt.step()  # v = -0.1, p = -0.1
        p.grad = np.array([1.0])
        opt.step()  # v = -0.15, p = -0.25
        assert p.data[0] == pytest.approx(-0.25, abs=1e-15)

    def test_non_finite_gradient_aborts(self):
        p = parameter(np.array([1.0]))
        p.grad = np.array([np.nan])
        with pytest.raises(NonFiniteGradientError):
            RMSProp({"p": p}).step()

    def test_steps_deterministic(self):
        rng = np.random.default_rng(15)

        def run():
            p = parameter(rng_state := np.arange(8, dtype=np.float64))
            opt = RMSProp({"p": p}, lr=0.01)
            for i in range(5):
                p.grad = np.sin(np.arange(8) + i)
                opt.step()
            return p.data.copy()

        assert np.array_equal(run(), run())
