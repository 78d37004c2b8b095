"""The reverse-mode tape: op-level gradients and graph behavior."""

import numpy as np
import pytest

from finrank import autograd as ag
from finrank.autograd import Tensor


def param(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


def numeric_grad(f, x, step=1e-6):
    g = np.zeros_like(x.data)
    flat, gflat = x.data.ravel(), g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f().item()
        flat[i] = orig - step
        down = f().item()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * step)
    return g


OPS = {
    "add": lambda x: ag.tsum(x + 2.0 * x),
    "mul": lambda x: ag.tsum(x * x),
    "power": lambda x: ag.tsum(ag.power(x, 3.0)),
    "exp": lambda x: ag.tsum(ag.exp(x)),
    "log": lambda x: ag.tsum(ag.log(x * x + 1.0)),
    "tanh": lambda x: ag.tsum(ag.tanh(x)),
    "sigmoid": lambda x: ag.tsum(ag.sigmoid(x)),
    "relu": lambda x: ag.tsum(ag.relu(x)),
    "softmax": lambda x: ag.tsum(ag.softmax(x, axis=-1) * np.arange(4.0)),
    "log_softmax": lambda x: ag.tsum(ag.log_softmax(x, axis=-1) * np.arange(4.0)),
    "mean": lambda x: ag.tsum(ag.tmean(x, axis=0) * np.arange(4.0)),
    "max": lambda x: ag.tsum(ag.tmax(x, axis=1) * np.array([1.0, 2.0, 3.0])),
    "reshape": lambda x: ag.tsum(ag.reshape(x, (4, 3)) * np.arange(12.0).reshape(4, 3)),
    "transpose": lambda x: ag.tsum(ag.transpose(x, (1, 0)) * np.arange(12.0).reshape(4, 3)),
    "clamp": lambda x: ag.tsum(ag.clamp(x, -0.5, 0.5) * np.arange(12.0).reshape(3, 4)),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_elementwise_op_gradients(name):
    rng = np.random.default_rng(hash(name) % 2**31)
    x = param(rng.uniform(0.1, 1.5, size=(3, 4)))
    f = OPS[name]
    loss = f(x)
    loss.backward()
    analytic = x.grad.copy()
    x.grad = None
    num = numeric_grad(lambda: f(x), x)
    np.testing.assert_allclose(analytic, num, rtol=1e-4, atol=1e-7)


def test_matmul_gradients_with_batch_broadcast():
    rng = np.random.default_rng(5)
    a = param(rng.normal(size=(2, 3, 4)))
    b = param(rng.normal(size=(4, 5)))

    def f():
        return ag.tsum(ag.matmul(a, b) * rng_weights)

    rng_weights = np.arange(2 * 3 * 5, dtype=float).reshape(2, 3, 5)
    loss = f()
    loss.backward()
    ga, gb = a.grad.copy(), b.grad.copy()
    a.grad = b.grad = None
    np.testing.assert_allclose(ga, numeric_grad(f, a), rtol=1e-5, atol=1e-7)
    np.testing.assert_allclose(gb, numeric_grad(f, b), rtol=1e-5, atol=1e-7)


def test_broadcast_add_sums_gradient():
    bias = param(np.zeros(3))
    x = Tensor(np.ones((4, 3)))
    loss = ag.tsum(x + bias)
    loss.backward()
    np.testing.assert_array_equal(bias.grad, np.full(3, 4.0))


def test_concat_and_stack_gradients():
    a, b = param(np.ones((2, 2))), param(np.full((2, 3), 2.0))
    out = ag.concat([a, b], axis=1)
    ag.tsum(out * np.arange(10.0).reshape(2, 5)).backward()
    np.testing.assert_array_equal(a.grad, [[0, 1], [5, 6]])
    np.testing.assert_array_equal(b.grad, [[2, 3, 4], [7, 8, 9]])

    c, d = param(np.ones(3)), param(np.ones(3))
    stacked = ag.stack([c, d], axis=0)
    ag.tsum(stacked * np.array([[1.0, 2, 3], [4, 5, 6]])).backward()
    np.testing.assert_array_equal(c.grad, [1, 2, 3])
    np.testing.assert_array_equal(d.grad, [4, 5, 6])


def test_embedding_scatter_adds_repeated_rows():
    table = param(np.arange(12.0).reshape(4, 3))
    ids = np.array([[0, 2, 0], [2, 2, 1]])
    out = ag.embedding(table, ids)
    ag.tsum(out).backward()
    np.testing.assert_array_equal(table.grad, [[2, 2, 2], [1, 1, 1], [3, 3, 3], [0, 0, 0]])


def test_embedding_range_check():
    table = param(np.zeros((4, 3)))
    with pytest.raises(IndexError):
        ag.embedding(table, np.array([[0, 4]]))


def test_getitem_slice_gradient():
    x = param(np.arange(12.0).reshape(3, 4))
    ag.tsum(x[:, 1:3] * 2.0).backward()
    want = np.zeros((3, 4))
    want[:, 1:3] = 2.0
    np.testing.assert_array_equal(x.grad, want)


def test_diamond_graph_accumulates_once_per_path():
    x = param(np.array(3.0))
    y = x * x   # two paths into x
    z = y + x
    z.backward()
    assert x.grad == pytest.approx(2 * 3.0 + 1.0)


def test_deep_chain_does_not_recurse():
    x = param(np.array(1.0))
    y = x
    for _ in range(5000):
        y = y + 1.0
    y.backward()
    assert x.grad == pytest.approx(1.0)


def test_constant_branches_are_pruned():
    x = Tensor(np.ones((2, 2)))  # no grad requested
    y = x * 3.0
    assert y._grad_fn is None and not y.requires_grad


def test_backward_requires_scalar():
    x = param(np.ones(3))
    with pytest.raises(ValueError):
        (x * 2.0).backward()


def test_softmax_rows_sum_to_one_and_shift_invariant():
    rng = np.random.default_rng(11)
    z = rng.normal(size=(8, 5)) * 10
    s = ag.softmax(Tensor(z), axis=-1).data
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)
    s_shift = ag.softmax(Tensor(z + 5.0), axis=-1).data
    np.testing.assert_allclose(s, s_shift, atol=1e-12)


def test_softmax_examples():
    np.testing.assert_allclose(ag.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    np.testing.assert_allclose(ag.softmax(Tensor([1.0, 1.0, 1.0])).data,
                               np.full(3, 1 / 3), atol=1e-15)


def test_sigmoid_examples():
    assert ag.sigmoid(Tensor(0.0)).item() == pytest.approx(0.5)
    assert ag.sigmoid(Tensor(50.0)).item() == pytest.approx(1.0, abs=1e-12)
    z = 1.7
    assert ag.sigmoid(Tensor(-z)).item() == pytest.approx(1 - ag.sigmoid(Tensor(z)).item())
    # stays finite at extreme inputs
    assert np.isfinite(ag.sigmoid(Tensor(np.array([-1e4, 1e4]))).data).all()


def test_dropout_eval_identity_and_keep_ratio():
    x = Tensor(np.ones((100, 100)), requires_grad=True)
    assert ag.dropout(x, 0.3, None) is x
    rng = np.random.default_rng(0)
    out = ag.dropout(x, 0.3, rng)
    kept = np.count_nonzero(out.data) / out.data.size
    # 10^4 Bernoulli draws: keep ratio within 3 sigma of 0.7
    sigma = np.sqrt(0.3 * 0.7 / out.data.size)
    assert abs(kept - 0.7) < 3 * sigma
    nz = out.data[out.data != 0]
    np.testing.assert_allclose(nz, 1 / 0.7, rtol=1e-12)
