import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dinendt import autodiff as ad
from dinendt.autodiff import ShapeError, Tensor


def leaf(x):
    return Tensor(np.asarray(x, dtype=float), requires_grad=True)


def test_sigmoid_and_relu_values():
    assert ad.sigmoid(0.0).item() == 0.5
    assert ad.relu(-2.0).item() == 0.0
    assert ad.relu(3.0).item() == 3.0


def test_sigmoid_derivative_at_zero():
    x = leaf(0.0)
    ad.sigmoid(x).backward()
    assert x.grad == pytest.approx(0.25, abs=1e-15)


def test_matmul_values_and_shape_error():
    eye = np.eye(2)
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(ad.matmul(eye, m).data, m)
    assert ad.matmul([[1.0, 2.0]], [[3.0], [4.0]]).data.tolist() == [[11.0]]
    with pytest.raises(ShapeError):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_gradient_with_ones():
    a = leaf(np.random.default_rng(0).standard_normal((3, 4)))
    b = np.ones((4, 2))
    ad.tsum(ad.matmul(a, b)).backward()
    np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b.T)
    err = ad.gradient_check(lambda t: ad.tsum(ad.matmul(t, b)), a.data)
    assert err < 1e-4


def test_log_mean_exp_examples():
    assert ad.log_mean_exp([0.0, 0.0, 0.0]).item() == 0.0
    assert ad.log_mean_exp([1000.0, 1000.0]).item() == pytest.approx(1000.0, abs=1e-12)
    # log((1 + e^2) / 2) = 1.4337808...
    assert ad.log_mean_exp([0.0, 2.0]).item() == pytest.approx(1.4337808, abs=1e-7)
    with pytest.raises(ValueError):
        ad.log_mean_exp(np.zeros(0))


def test_log_mean_exp_axis():
    x = np.random.default_rng(1).standard_normal((3, 5))
    out = ad.log_mean_exp(x, axis=1).data
    np.testing.assert_allclose(out, np.log(np.exp(x).mean(axis=1)), rtol=1e-13)


def test_backward_examples():
    x = leaf(3.0)
    (x * x).backward()
    assert x.grad == 6.0
    x = leaf(0.0)
    ad.log_mean_exp(ad.stack([x, Tensor(0.0)])).backward()
    assert x.grad == pytest.approx(0.5, abs=1e-15)


def test_backward_needs_scalar():
    x = leaf(np.ones(3))
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


def test_gradient_accumulates_over_reuse():
    x = leaf(2.0)
    (x * x + x).backward()
    assert x.grad == 5.0


def test_broadcast_gradients_reduce_to_operand_shape():
    a = leaf(np.ones((3, 1)))
    b = leaf(np.arange(4.0))
    ad.tsum(a * b).backward()
    np.testing.assert_array_equal(a.grad, np.full((3, 1), 6.0))
    np.testing.assert_array_equal(b.grad, np.full(4, 3.0))


def test_incompatible_broadcast_raises():
    with pytest.raises(ShapeError):
        ad.add(np.ones(3), np.ones(4))


def test_no_grad_records_nothing():
    x = leaf(1.0)
    with ad.no_grad():
        y = x * 2.0
    assert not y.requires_grad


def test_gradient_check_trivial_examples():
    assert ad.gradient_check(lambda t: t * t, np.array(2.0)) < 1e-6
    assert ad.gradient_check(lambda t: ad.sigmoid(t), np.array(0.0)) < 1e-6


@pytest.mark.parametrize("name", ["exp", "log", "tanh", "sigmoid", "sqrt"])
def test_unary_ops_match_finite_differences(name):
    x = np.array([0.3, 0.7, 1.4, 2.2])
    fn = getattr(ad, name)
    assert ad.gradient_check(lambda t: ad.tsum(fn(t) * np.array([1.0, -0.5, 0.3, 0.9])), x) < 1e-4


@pytest.mark.parametrize("name", ["add", "sub", "mul", "div"])
def test_binary_ops_match_finite_differences(name):
    rng = np.random.default_rng(2)
    a = rng.uniform(0.5, 1.5, (3, 2))
    b = rng.uniform(0.5, 1.5, (2,))
    fn = getattr(ad, name)
    c = rng.standard_normal((3, 2))
    assert ad.gradient_check(lambda s, t: ad.tsum(fn(s, t) * c), [a, b]) < 1e-4


def test_power_relu_and_shape_ops_match_finite_differences():
    rng = np.random.default_rng(3)
    x = rng.uniform(0.2, 1.0, (2, 3))
    c = rng.standard_normal((3, 2))

    def f(t):
        y = ad.transpose(ad.power(t, 1.5), (1, 0)) * c
        y = ad.concat([y, ad.relu(y)], axis=0)
        y = ad.reshape(y, (12,))[::2]
        return ad.mean(y) + ad.tsum(ad.stack([t[0], t[1]], axis=1))
    assert ad.gradient_check(f, x) < 1e-4


def test_fancy_index_gradients_accumulate():
    x = leaf(np.arange(3.0))
    ad.tsum(ad.getitem(x, np.array([0, 0, 2]))).backward()
    np.testing.assert_array_equal(x.grad, [2.0, 0.0, 1.0])


def test_random_three_layer_net_gradients():
    rng = np.random.default_rng(4)
    sizes = [3, 5, 4, 1]
    ws = [rng.standard_normal((m, n)) for m, n in zip(sizes[:-1], sizes[1:])]
    x = rng.standard_normal((6, 3))

    def f(w0, w1, w2):
        h = ad.tanh(ad.matmul(x, w0))
        h = ad.sigmoid(ad.matmul(h, w1))
        return ad.tsum(ad.matmul(h, w2))
    assert ad.gradient_check(f, ws) < 1e-4


def test_elementwise_dispatch():
    assert ad.elementwise("add", 1.0, 2.0).item() == 3.0
    with pytest.raises(ValueError):
        ad.elementwise("nope", 1.0)


def test_replay_is_bit_identical():
    rng = np.random.default_rng(5)
    w = rng.standard_normal((4, 4))
    x = rng.standard_normal((3, 4))

    def run():
        t = leaf(w)
        out = ad.log_mean_exp(ad.tanh(ad.matmul(x, t)))
        out.backward()
        return out.data.copy(), t.grad.copy()
    a, b = run(), run()
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 20), elements=finite), finite)
def test_log_mean_exp_shift_identity(x, c):
    lhs = ad.log_mean_exp(x + c).item()
    rhs = ad.log_mean_exp(x).item() + c
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))
