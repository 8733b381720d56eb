import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imml_lab.autodiff import (
    Tape, Tensor, concat, cosine, cosine_matrix, exp, grad_check, hadamard, l2_normalize, log, logsumexp,
    matmul, mse, reduce_sum, softmax, softmax_xent, take, tanh,
)
from imml_lab.errors import DegenerateNorm, NonFiniteValue, NonPositiveInput, ShapeMismatch

H = 1e-5
TOLERANCE = 1e-4


def random_point(seed: int, *shape: int) -> Tensor:
    return Tensor(np.random.default_rng(seed).normal(size=shape))


def scale_down(t: Tensor) -> Tensor:
    return t / 4.0


def test_forward_values():
    x = Tensor([[1.0, -2.0], [3.0, 0.5]])
    assert np.allclose(hadamard(x, Tensor(np.ones((2, 2)))).data, x.data)
    assert np.allclose((x @ Tensor(np.eye(2))).data, x.data)
    assert np.allclose((x + Tensor([1.0, 1.0])).data, x.data + 1.0)
    assert np.allclose(cosine(x, x).data, [1.0, 1.0])
    assert np.allclose(np.linalg.norm(l2_normalize(x).data, axis=1), 1.0)
    assert softmax_xent(Tensor([[0.0, 0.0, 0.0]]), [[1 / 3, 1 / 3, 1 / 3]]).item() == pytest.approx(math.log(3))
    assert np.allclose(softmax(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])
    assert logsumexp(Tensor([[0.0, 0.0]])).item() == pytest.approx(math.log(2))


def test_forward_is_reproducible():
    a = random_point(0, 4, 3)
    first = cosine_matrix(a, a).data
    second = cosine_matrix(Tensor(a.data.copy()), Tensor(a.data.copy())).data
    assert np.array_equal(first, second)


def test_shape_errors():
    with pytest.raises(ShapeMismatch):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeMismatch):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((3, 2)))
    with pytest.raises(ShapeMismatch):
        cosine(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))
    with pytest.raises(ShapeMismatch):
        Tensor(np.ones(3)).item()
    with pytest.raises(ShapeMismatch):
        Tensor(np.ones(3), requires_grad=True).backward()


def test_domain_errors():
    with pytest.raises(NonPositiveInput):
        log(Tensor([1.0, 0.0]))
    with pytest.raises(DegenerateNorm):
        l2_normalize(Tensor([[0.0, 0.0]]), strict=True)
    assert np.allclose(l2_normalize(Tensor([[0.0, 0.0]])).data, 0.0)
    with pytest.raises(ValueError):
        logsumexp(Tensor([[1.0, 2.0]]), mask=np.array([[False, False]]))


def test_backward_accumulates_on_shared_leaves():
    x = Tensor([2.0, -1.0], requires_grad=True)
    y = reduce_sum(x * x + x)
    y.backward()
    assert np.allclose(x.grad, 2 * x.data + 1)

    tape = Tape(y)
    assert tape.nodes[-1] is y
    assert sum(node is x for node in tape.nodes) == 1


def test_grad_check_quadratic():
    assert grad_check(lambda x: reduce_sum(x * x), Tensor([3.0]), H) < 1e-8


def test_grad_check_rejects_bad_steps():
    with pytest.raises(ValueError):
        grad_check(lambda x: reduce_sum(x), Tensor([1.0]), 1e-2)
    with pytest.raises(NonFiniteValue):
        grad_check(lambda x: reduce_sum(exp(x)), Tensor([1000.0]), H)
    with pytest.raises(ShapeMismatch):
        grad_check(lambda x: x, Tensor([1.0, 2.0]), H)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_elementwise_ops_pass_grad_check(seed):
    x, w = random_point(seed, 3, 4), random_point(seed + 1, 4, 2)
    assert grad_check(lambda a, b: reduce_sum(tanh(matmul(a, b))), [x, w], H) < TOLERANCE
    assert grad_check(lambda a: reduce_sum(exp(scale_down(a))), x, H) < TOLERANCE
    assert grad_check(lambda a: reduce_sum(log(hadamard(a, a) + 1.0)), x, H) < TOLERANCE
    assert grad_check(lambda a: reduce_sum(hadamard(softmax(a), a)), x, H) < TOLERANCE


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_normalizing_ops_pass_grad_check(seed):
    a, b = random_point(seed, 3, 4), random_point(seed + 1, 3, 4)
    targets = np.random.default_rng(seed).dirichlet(np.ones(4), size=3)
    assert grad_check(lambda u, v: reduce_sum(cosine(u, v)), [a, b], H) < TOLERANCE
    assert grad_check(lambda u, v: reduce_sum(cosine_matrix(u, v)), [a, b], H) < TOLERANCE
    assert grad_check(lambda u: reduce_sum(softmax_xent(u, targets)), a, H) < TOLERANCE
    assert grad_check(lambda u: reduce_sum(mse(u, targets)), a, H) < TOLERANCE
    assert grad_check(lambda u: reduce_sum(logsumexp(u, mask=np.eye(3, 4) == 0)), a, H) < TOLERANCE
    assert grad_check(lambda u, v: reduce_sum(take(concat([u, v], axis=1), [0, 2, 2])), [a, b], H) < TOLERANCE
