import numpy as np
import pytest

from jpgnet.autograd import Tape, Tensor, no_grad
from jpgnet.errors import JPGNetError, NumericError, ShapeError
from jpgnet.gradcheck import grad_check


def test_sum_gradient_is_ones():
    x = Tensor(np.random.default_rng(0).normal(size=(3, 4)), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((3, 4)))


def test_square_gradient():
    x = Tensor(np.array(3.0), requires_grad=True)
    (x * x).sum().backward()
    assert x.grad == 6.0


def test_two_branches_sum_contributions():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(2, 3))
    x = Tensor(a.copy(), requires_grad=True)
    ((x * 2.0).sum() + (x * x).sum()).backward()
    # each branch on its own
    x1 = Tensor(a.copy(), requires_grad=True)
    (x1 * 2.0).sum().backward()
    x2 = Tensor(a.copy(), requires_grad=True)
    (x2 * x2).sum().backward()
    np.testing.assert_allclose(x.grad, x1.grad + x2.grad, rtol=0, atol=1e-15)


def test_grad_accumulates_across_backward_calls():
    x = Tensor(np.ones(3), requires_grad=True)
    x.sum().backward()
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, 2 * np.ones(3))


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


def test_detached_loss_rejected():
    x = Tensor(np.ones(3))
    with pytest.raises(JPGNetError):
        x.sum().backward()


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad


def test_non_finite_forward_is_an_error():
    x = Tensor(np.array([0.0]))
    with pytest.raises(NumericError):
        Tensor(np.array([1.0])) / x


def test_rank_above_four_rejected():
    with pytest.raises(ShapeError):
        Tensor(np.zeros((1, 1, 1, 1, 1)))


def test_tape_is_topological_and_visits_once():
    x = Tensor(np.ones(2), requires_grad=True)
    y = x * 2.0
    z = y + y * x
    loss = z.sum()
    tape = Tape.from_output(loss)
    pos = {id(n): i for i, n in enumerate(tape.nodes)}
    assert len(pos) == len(tape.nodes)
    for node in tape.nodes:
        for p in node._parents:
            if p.requires_grad:
                assert pos[id(p)] < pos[id(node)]


@pytest.mark.parametrize("seed", range(5))
def test_elementwise_gradcheck(seed):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.uniform(0.5, 2.0, size=(2, 3)))
    b = Tensor(rng.uniform(0.5, 2.0, size=(1, 3)))
    wts = rng.normal(size=(2, 3))

    def f():
        return ((a * b - b / a + (a**1.5)).abs() * wts).mean()

    rep = grad_check(f, {"a": a, "b": b})
    assert rep.passed, rep.max_rel_error
