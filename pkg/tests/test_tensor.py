import threading

import numpy as np
import pytest

from choixgrade.autograd import Tape, Tensor, backward, no_record, ops
from choixgrade.errors import ChoixgradeError, DoubleBackward, NonScalarLoss


def test_sum_gives_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    with Tape() as t:
        loss = ops.sum(x)
    backward(loss, t)
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_half_square_gives_x():
    x = Tensor([1.5, -2.0, 3.0], requires_grad=True)
    with Tape() as t:
        loss = ops.scale(ops.sum(ops.mul(x, x)), 0.5)
    backward(loss, t)
    assert np.array_equal(x.grad, x.data)


def test_non_scalar_and_double_backward():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as t:
        y = ops.mul(x, x)
    with pytest.raises(NonScalarLoss):
        backward(y, t)
    with Tape() as t:
        loss = ops.sum(ops.mul(x, x))
    backward(loss, t)
    with pytest.raises(DoubleBackward):
        backward(loss, t)


def test_no_history_is_an_error():
    with pytest.raises(ChoixgradeError):
        backward(Tensor(1.0, requires_grad=True))


def test_shared_subexpression_accumulates():
    x = Tensor([2.0], requires_grad=True)
    with Tape() as t:
        y = ops.mul(x, x)
        loss = ops.sum(ops.add(y, y))  # 2x^2 -> 4x
    backward(loss, t)
    assert x.grad.tolist() == [8.0]


def test_grads_add_across_tapes():
    x = Tensor([1.0, 2.0], requires_grad=True)
    for _ in range(2):
        with Tape() as t:
            loss = ops.sum(x)
        backward(loss, t)
    assert x.grad.tolist() == [2.0, 2.0]


def test_no_record_and_no_tape():
    x = Tensor([1.0], requires_grad=True)
    with Tape() as t:
        with no_record():
            ops.mul(x, x)
    assert len(t) == 0
    y = ops.mul(x, x)
    assert not y.requires_grad


def test_linearity_of_backward(rng):
    a, b = 0.7, -1.3
    x = Tensor(rng.standard_normal((3, 4)), requires_grad=True, dtype=np.float64)
    w = Tensor(rng.standard_normal((4, 2)), dtype=np.float64)

    def l1(x):
        return ops.sum(ops.exp(ops.matmul(x, w)))

    def l2(x):
        return ops.sum(ops.mul(x, x))

    def grad(f):
        x.grad = None
        with Tape() as t:
            loss = f(x)
        backward(loss, t)
        return x.grad.copy()

    combo = grad(lambda x: ops.add(ops.scale(l1(x), a), ops.scale(l2(x), b)))
    np.testing.assert_allclose(combo, a * grad(l1) + b * grad(l2), rtol=1e-12)


def test_tapes_are_thread_confined():
    results = {}

    def work(k):
        x = Tensor(np.full(3, float(k)), requires_grad=True)
        with Tape() as t:
            loss = ops.sum(ops.mul(x, x))
        backward(loss, t)
        results[k] = x.grad

    threads = [threading.Thread(target=work, args=(k,)) for k in range(1, 5)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert all(np.array_equal(results[k], np.full(3, 2.0 * k)) for k in range(1, 5))
