"""Autodiff core: forward oracles, backward semantics, tape bookkeeping."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import seqrep.nn.tensor as T
from seqrep.nn import (
    NonFiniteError,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    backward,
    grad_check,
    replay,
)


def arrays(draw, shape):
    vals = draw(st.lists(
        st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False),
        min_size=int(np.prod(shape)), max_size=int(np.prod(shape))))
    return np.array(vals, dtype=np.float64).reshape(shape)


def test_tensor_wraps_float64_contiguous():
    t = Tensor(np.arange(4, dtype=np.int32).reshape(2, 2)[:, ::-1])
    assert t.data.dtype == np.float64
    assert t.data.flags["C_CONTIGUOUS"]


def test_scalar_stays_zero_dim():
    t = Tensor(np.float64(2.5))
    assert t.data.shape == ()
    with Tape():
        s = T.reduce_sum(Tensor(np.ones((2, 3)), requires_grad=True))
    assert s.data.shape == ()
    assert float(s.data) == 6.0


FORWARD_CASES = [
    ("add", lambda a, b: T.add(a, b), lambda a, b: a + b),
    ("subtract", lambda a, b: T.subtract(a, b), lambda a, b: a - b),
    ("multiply", lambda a, b: T.multiply(a, b), lambda a, b: a * b),
    ("maximum", lambda a, b: T.maximum(a, b), np.maximum),
]


@pytest.mark.parametrize("name,op,ref", FORWARD_CASES)
def test_binary_forward_matches_numpy(name, op, ref, rng):
    a = Tensor(rng.normal(size=(3, 4)))
    b = Tensor(rng.normal(size=(3, 4)))
    np.testing.assert_array_equal(op(a, b).data, ref(a.data, b.data))


def test_broadcasting_matches_numpy(rng):
    a = Tensor(rng.normal(size=(3, 1, 4)))
    b = Tensor(rng.normal(size=(5, 1)))
    np.testing.assert_array_equal(T.add(a, b).data, a.data + b.data)
    np.testing.assert_array_equal(T.multiply(a, b).data, a.data * b.data)


def test_unary_forward_matches_numpy(rng):
    x = rng.normal(size=(4, 3))
    pos = np.abs(x) + 0.5
    np.testing.assert_array_equal(T.exp(Tensor(x)).data, np.exp(x))
    np.testing.assert_array_equal(T.log(Tensor(pos)).data, np.log(pos))
    np.testing.assert_array_equal(T.tanh(Tensor(x)).data, np.tanh(x))
    np.testing.assert_array_equal(T.relu(Tensor(x)).data, np.maximum(x, 0.0))
    np.testing.assert_array_equal(T.sqrt(Tensor(pos)).data, np.sqrt(pos))
    np.testing.assert_allclose(
        T.sigmoid(Tensor(x)).data, 1.0 / (1.0 + np.exp(-x)), rtol=1e-15)


def test_sigmoid_is_stable_at_extremes():
    x = Tensor(np.array([-800.0, 800.0]))
    out = T.sigmoid(x).data
    assert np.all(np.isfinite(out))
    assert out[0] == pytest.approx(0.0, abs=1e-300)
    assert out[1] == pytest.approx(1.0)


def test_matmul_and_transpose(rng):
    a = Tensor(rng.normal(size=(2, 3, 4)))
    b = Tensor(rng.normal(size=(2, 4, 5)))
    np.testing.assert_allclose(T.matmul(a, b).data, a.data @ b.data, rtol=1e-15)
    np.testing.assert_array_equal(
        T.transpose(a, (2, 0, 1)).data, a.data.transpose(2, 0, 1))


def test_reductions_match_numpy(rng):
    x = rng.normal(size=(3, 5))
    for axis in (None, 0, 1):
        np.testing.assert_allclose(
            T.reduce_sum(Tensor(x), axis=axis).data, np.sum(x, axis=axis))
        np.testing.assert_allclose(
            T.reduce_mean(Tensor(x), axis=axis).data, np.mean(x, axis=axis))
        np.testing.assert_allclose(
            T.reduce_max(Tensor(x), axis=axis).data, np.max(x, axis=axis))


def test_softmax_rows_sum_to_one(rng):
    x = Tensor(rng.normal(size=(4, 7)) * 10)
    out = T.softmax_op(x).data
    np.testing.assert_allclose(out.sum(axis=-1), np.ones(4), rtol=1e-12)
    ls = T.log_softmax(x).data
    np.testing.assert_allclose(np.exp(ls), out, rtol=1e-12)


def test_gather_concat_slice_reshape(rng):
    table = Tensor(rng.normal(size=(6, 3)))
    idx = np.array([[0, 5], [2, 2]])
    np.testing.assert_array_equal(T.gather(table, idx).data, table.data[idx])
    a, b = Tensor(rng.normal(size=(2, 3))), Tensor(rng.normal(size=(1, 3)))
    np.testing.assert_array_equal(
        T.concat([a, b], axis=0).data, np.concatenate([a.data, b.data]))
    x = Tensor(rng.normal(size=(4, 5)))
    np.testing.assert_array_equal(
        T.take_slice(x, (slice(1, 3), slice(None, None, 2))).data,
        x.data[1:3, ::2])
    np.testing.assert_array_equal(
        T.reshape(x, (2, 10)).data, x.data.reshape(2, 10))


def test_layer_norm_zero_mean_unit_var(rng):
    x = Tensor(rng.normal(size=(3, 8)) * 4 + 2)
    out = T.layer_norm(x).data
    np.testing.assert_allclose(out.mean(axis=-1), np.zeros(3), atol=1e-12)
    np.testing.assert_allclose(out.var(axis=-1), np.ones(3), rtol=1e-3)


def test_backward_simple_chain():
    with Tape() as tape:
        x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        loss = T.reduce_sum(T.multiply(x, x))
    grads = backward(tape, loss)
    np.testing.assert_allclose(grads[x.node_id_on(tape)], 2 * x.data)


def test_backward_unreachable_leaf_gets_zeros():
    with Tape() as tape:
        x = Tensor(np.ones(3), requires_grad=True)
        y = Tensor(np.ones(3), requires_grad=True)
        xid = x.node_id_on(tape)
        yid = y.node_id_on(tape)
        loss = T.reduce_sum(x)
    grads = backward(tape, loss)
    np.testing.assert_array_equal(grads[yid], np.zeros(3))
    np.testing.assert_array_equal(grads[xid], np.ones(3))


def test_backward_accumulates_over_reuse():
    with Tape() as tape:
        x = Tensor(np.array([2.0]), requires_grad=True)
        loss = T.reduce_sum(T.add(T.multiply(x, x), x))
    g = backward(tape, loss)[x.node_id_on(tape)]
    np.testing.assert_allclose(g, np.array([5.0]))


def test_backward_requires_loss_on_tape():
    with Tape():
        x = Tensor(np.ones(2), requires_grad=True)
        loss = T.reduce_sum(x)
    with Tape() as other:
        with pytest.raises(TapeError):
            backward(other, loss)


def test_backward_is_bit_deterministic(rng):
    def run():
        r = np.random.default_rng(7)
        with Tape() as tape:
            a = Tensor(r.normal(size=(8, 8)), requires_grad=True)
            b = Tensor(r.normal(size=(8, 8)), requires_grad=True)
            h = T.tanh(T.matmul(a, b))
            loss = T.reduce_sum(T.multiply(h, h))
        grads = backward(tape, loss)
        return grads[a.node_id_on(tape)].copy(), grads[b.node_id_on(tape)].copy()

    ga1, gb1 = run()
    ga2, gb2 = run()
    assert np.array_equal(ga1, ga2) and np.array_equal(gb1, gb2)


def test_nonfinite_forward_raises():
    with pytest.raises(NonFiniteError):
        T.log(Tensor(np.array([0.0])))
    with pytest.raises(NonFiniteError):
        T.divide(Tensor(np.ones(2)), Tensor(np.zeros(2)))


def test_no_tape_means_no_tracking():
    x = Tensor(np.ones(3), requires_grad=True)
    y = T.relu(x)
    assert y._tape is None and y._node_id is None


def test_maybe_node_id_distinguishes_tapes():
    with Tape() as t1:
        x = Tensor(np.ones(2), requires_grad=True)
        xid = x.node_id_on(t1)
    assert x.maybe_node_id(t1) == xid
    with Tape() as t2:
        assert x.maybe_node_id(t2) is None


def test_nested_tapes_restore_outer():
    with Tape() as outer:
        x = Tensor(np.ones(2), requires_grad=True)
        with Tape() as inner:
            y = T.relu(Tensor(np.ones(2), requires_grad=True))
            assert y._tape is inner
        z = T.relu(x)
        assert z._tape is outer


def test_replay_reproduces_forward(rng):
    with Tape() as tape:
        a = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
        out = T.reduce_sum(T.tanh(T.matmul(a, a)))
    values = replay(tape)
    np.testing.assert_array_equal(values[out.node_id_on(tape)], out.data)


def test_concat_empty_list_rejected():
    with pytest.raises(ShapeError):
        T.concat([])


def test_grad_check_passes_composite():
    def fn(a, b):
        return T.reduce_sum(T.multiply(T.sigmoid(T.matmul(a, b)), a))

    r = np.random.default_rng(3)
    err = grad_check(fn, [r.normal(size=(3, 3)), r.normal(size=(3, 3))])
    assert err < 1e-6


def test_grad_check_rejects_nonscalar():
    with pytest.raises(ValueError):
        grad_check(lambda a: T.relu(a), [np.ones((2, 2))])


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_add_multiply_grads_match_fd(data):
    shape = data.draw(st.sampled_from([(2, 3), (1, 4), (3, 1)]))
    a = data.draw(st.builds(lambda: None).map(lambda _: None))
    r = np.random.default_rng(data.draw(st.integers(0, 2**31 - 1)))
    x = r.normal(size=shape)
    y = r.normal(size=shape)

    def fn(tx, ty):
        return T.reduce_sum(T.multiply(T.add(tx, ty), tx))

    assert grad_check(fn, [x, y]) < 1e-7
