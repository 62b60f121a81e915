"""Engine-level tests: op values, backward rules, gradcheck, RNG streams."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from utep import ndgrad as nd
from utep.errors import NonFiniteError, ShapeError
from utep.ndgrad import RngStream


def test_product_plus_identity_example():
    a = nd.param(np.array([[2.0]]))
    b = nd.param(np.array([[3.0]]))
    y = nd.add(nd.mul(a, b), a)
    nd.backward(y)
    assert y.item() == 8.0
    assert a.grad[0, 0] == 4.0
    assert b.grad[0, 0] == 2.0


def test_softmax_uniform_logits():
    x = nd.const(np.zeros((1, 3)))
    y = nd.softmax(x)
    np.testing.assert_allclose(y.value, np.full((1, 3), 1.0 / 3.0))


def test_softmax_rows_sum_to_one():
    rng = RngStream(7, "sm")
    x = nd.const(rng.uniform(-5.0, 5.0, (40, 6)))
    y = nd.softmax(x)
    np.testing.assert_allclose(y.value.sum(axis=1), np.ones(40), atol=1e-9)


def test_scalar_coercion_and_1d_rejection():
    assert nd.const(3.0).shape == (1, 1)
    with pytest.raises(ShapeError):
        nd.const(np.ones(4))


def test_matmul_shape_error_names_both_shapes():
    a = nd.const(np.ones((2, 3)))
    b = nd.const(np.ones((2, 3)))
    with pytest.raises(ShapeError, match=r"2, 3"):
        nd.matmul(a, b)


def test_add_row_bias_broadcast_backward():
    a = nd.param(np.ones((4, 3)))
    b = nd.param(np.zeros((1, 3)))
    y = nd.sum(nd.add(a, b))
    nd.backward(y)
    np.testing.assert_array_equal(b.grad, np.full((1, 3), 4.0))


def test_shared_subexpression_accumulates():
    # y = f(x) + f(x) must match grad of 2*f(x), not overwrite
    rng = RngStream(3, "shared")
    x0 = rng.uniform(-2.0, 2.0, (3, 3))

    xa = nd.param(x0)
    f = nd.square(xa)
    y = nd.sum(nd.add(f, f))
    nd.backward(y)
    ga = xa.grad.copy()

    xb = nd.param(x0)
    y2 = nd.sum(nd.scale(nd.square(xb), 2.0))
    nd.backward(y2)
    np.testing.assert_array_equal(ga, xb.grad)


def test_zero_grad_resets():
    a = nd.param(np.ones((2, 2)))
    nd.backward(nd.sum(a))
    assert a.grad is not None
    nd.zero_grad([a])
    assert a.grad is None


def test_backward_requires_scalar_without_seed():
    a = nd.param(np.ones((2, 2)))
    with pytest.raises(ShapeError):
        nd.backward(nd.square(a))


def test_non_finite_forward_raises():
    a = nd.const(np.array([[800.0]]))
    with pytest.raises(NonFiniteError):
        nd.exp(a)


def test_log_floor_clamps_and_zeroes_gradient():
    a = nd.param(np.array([[0.0, 0.5]]))
    y = nd.sum(nd.log(a, floor=1e-12))
    assert np.isfinite(y.item())
    nd.backward(y)
    assert a.grad[0, 0] == 0.0  # clamped entry gets no gradient
    assert a.grad[0, 1] == pytest.approx(2.0)


def test_dropout_inverted_scaling_expectation():
    rng = RngStream(11, "drop")
    x = nd.const(np.ones((2000, 1)))
    mask = rng.keep_mask((2000, 1), 0.5)
    y = nd.dropout(x, mask, 0.5)
    kept = y.value[y.value > 0]
    assert np.all(kept == 2.0)  # kept units divided by keep prob
    assert abs(y.value.mean() - 1.0) < 0.1


def test_dropout_mask_frozen_is_deterministic():
    rng = RngStream(5, "drop2")
    x = nd.const(rng.uniform(-1.0, 1.0, (6, 4)))
    mask = rng.keep_mask((6, 4), 0.5)
    y1 = nd.dropout(x, mask, 0.5)
    y2 = nd.dropout(x, mask, 0.5)
    np.testing.assert_array_equal(y1.value, y2.value)


def test_gradient_reverse_identity_forward_negated_backward():
    x0 = np.array([[1.0, -2.0]])
    x = nd.param(x0)
    y = nd.sum(nd.gradient_reverse(x, 0.7))
    np.testing.assert_array_equal(y.value, np.array([[-1.0]]))
    nd.backward(y)
    np.testing.assert_allclose(x.grad, np.full((1, 2), -0.7))


def test_gradient_reverse_lambda_zero_blocks_gradient():
    x = nd.param(np.array([[3.0]]))
    y = nd.sum(nd.gradient_reverse(x, 0.0))
    nd.backward(y)
    np.testing.assert_array_equal(x.grad, np.zeros((1, 1)))


def test_concat_splits_gradient_by_rows():
    a = nd.param(np.ones((2, 3)))
    b = nd.param(np.ones((4, 3)))
    y = nd.sum(nd.scale(nd.concat([a, b]), 2.0))
    nd.backward(y)
    assert a.grad.shape == (2, 3) and b.grad.shape == (4, 3)
    assert np.all(a.grad == 2.0) and np.all(b.grad == 2.0)


def test_mean_axis_variants():
    x = np.arange(6.0).reshape(2, 3)
    a = nd.const(x)
    np.testing.assert_allclose(nd.mean(a).value, [[x.mean()]])
    np.testing.assert_allclose(nd.mean(a, axis=0).value, x.mean(axis=0)[None, :])
    np.testing.assert_allclose(nd.mean(a, axis=1).value, x.mean(axis=1)[:, None])


OPS = ["matmul", "add", "add_bias", "mul", "relu", "sigmoid", "softmax",
       "log", "exp", "square", "mean0", "mean1", "sum", "concat", "scale",
       "dropout"]


@pytest.mark.parametrize("op", OPS)
def test_op_gradients_match_finite_differences(op):
    rng = RngStream(29, f"fd/{op}")

    def mat(r, c, lo=-2.0, hi=2.0):
        return nd.param(rng.uniform(lo, hi, (r, c)))

    if op == "matmul":
        a, b = mat(3, 4), mat(4, 2)
        fn = lambda: nd.sum(nd.matmul(a, b))
        params = [a, b]
    elif op == "add":
        a, b = mat(3, 4), mat(3, 4)
        fn = lambda: nd.sum(nd.square(nd.add(a, b)))
        params = [a, b]
    elif op == "add_bias":
        a, b = mat(3, 4), mat(1, 4)
        fn = lambda: nd.sum(nd.square(nd.add(a, b)))
        params = [a, b]
    elif op == "mul":
        a, b = mat(3, 4), mat(3, 4)
        fn = lambda: nd.sum(nd.mul(a, b))
        params = [a, b]
    elif op == "relu":
        base = rng.uniform(-2.0, 2.0, (3, 4))
        base[np.abs(base) < 0.05] = 0.5  # keep clear of the kink
        a = nd.param(base)
        fn = lambda: nd.sum(nd.relu(a))
        params = [a]
    elif op == "sigmoid":
        a = mat(3, 4)
        fn = lambda: nd.sum(nd.square(nd.sigmoid(a)))
        params = [a]
    elif op == "softmax":
        a = mat(3, 4)
        fn = lambda: nd.sum(nd.square(nd.softmax(a)))
        params = [a]
    elif op == "log":
        a = mat(3, 4, lo=0.2, hi=2.0)
        fn = lambda: nd.sum(nd.log(a, floor=1e-12))
        params = [a]
    elif op == "exp":
        a = mat(3, 4, lo=-1.0, hi=1.0)
        fn = lambda: nd.sum(nd.exp(a))
        params = [a]
    elif op == "square":
        a = mat(3, 4)
        fn = lambda: nd.sum(nd.square(a))
        params = [a]
    elif op == "mean0":
        a = mat(3, 4)
        fn = lambda: nd.sum(nd.square(nd.mean(a, axis=0)))
        params = [a]
    elif op == "mean1":
        a = mat(3, 4)
        fn = lambda: nd.sum(nd.square(nd.mean(a, axis=1)))
        params = [a]
    elif op == "sum":
        a = mat(3, 4)
        fn = lambda: nd.square(nd.sum(a))
        params = [a]
    elif op == "concat":
        a, b = mat(2, 4), mat(3, 4)
        fn = lambda: nd.sum(nd.square(nd.concat([a, b])))
        params = [a, b]
    elif op == "scale":
        a = mat(3, 4)
        fn = lambda: nd.sum(nd.scale(a, -1.3))
        params = [a]
    else:  # dropout, frozen mask
        a = mat(3, 4)
        mask = RngStream(31, "fdmask").keep_mask((3, 4), 0.5)
        fn = lambda: nd.sum(nd.square(nd.dropout(a, mask, 0.5)))
        params = [a]
    assert nd.gradcheck(fn, params) < 1e-5


def test_gradcheck_constant_function_zero_error():
    a = nd.param(np.ones((2, 2)))
    fn = lambda: nd.scale(nd.sum(nd.mul(a, nd.const(np.zeros((2, 2))))), 1.0)
    assert nd.gradcheck(fn, [a]) == 0.0


def test_gradcheck_linear_mse_tight():
    rng = RngStream(13, "mse")
    w = nd.param(rng.uniform(-1.0, 1.0, (3, 2)))
    x = nd.const(rng.uniform(-1.0, 1.0, (5, 3)))
    t = nd.const(rng.uniform(-1.0, 1.0, (5, 2)))
    fn = lambda: nd.mean(nd.square(nd.add(nd.matmul(x, w),
                                          nd.scale(t, -1.0))))
    assert nd.gradcheck(fn, [w]) < 1e-6


def test_gradcheck_rejects_non_scalar():
    a = nd.param(np.ones((2, 2)))
    with pytest.raises(ShapeError):
        nd.gradcheck(lambda: nd.square(a), [a])


def test_rngstream_reproducible_and_named():
    a = RngStream(123, "x").normal((4,))
    b = RngStream(123, "x").normal((4,))
    c = RngStream(123, "y").normal((4,))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_rngstream_spawn_independent_of_parent_consumption():
    r1 = RngStream(9)
    r1.normal((10,))
    child1 = r1.spawn("sub").uniform(0.0, 1.0, (5,))
    r2 = RngStream(9)
    child2 = r2.spawn("sub").uniform(0.0, 1.0, (5,))
    np.testing.assert_array_equal(child1, child2)


def test_keep_mask_rate_and_dtype():
    mask = RngStream(17, "km").keep_mask((10000, 1), 0.3)
    assert mask.dtype == np.float64
    assert set(np.unique(mask)) <= {0.0, 1.0}
    assert abs(mask.mean() - 0.7) < 0.02


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_rngstream_same_seed_bit_identical(seed):
    a = RngStream(seed, "p").uniform(0.0, 1.0, (3,))
    b = RngStream(seed, "p").uniform(0.0, 1.0, (3,))
    assert a.tobytes() == b.tobytes()
