import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motalign import autodiff as ad
from motalign.autodiff import Tape, Tensor, backward
from motalign.errors import ConfigError, DegenerateInputError, DimensionError, NumericalError
from motalign.gradcheck import check_gradients
from motalign.losses import (
    INIT_LOG_SCALE,
    ContrastiveHead,
    LossWeights,
    alignment_loss,
    contrastive_loss,
    distill_loss,
    total_loss,
)


def unit_rows(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def head_with_scale(s, dense=False):
    return ContrastiveHead(2, dense=dense, log_scale=math.log(s))


def test_head_defaults():
    head = ContrastiveHead(8)
    assert head.scale == pytest.approx(1 / 0.07)
    assert INIT_LOG_SCALE == pytest.approx(math.log(1 / 0.07))


def test_head_clamp():
    head = ContrastiveHead(8, log_scale=math.log(500.0))
    head.clamp()
    assert head.scale == pytest.approx(100.0)


@pytest.mark.parametrize("n", [2, 4, 32])
def test_contrastive_identical_rows_is_log_n(n, rng):
    row = unit_rows(rng, 1, 6)
    z = np.repeat(row, n, axis=0)
    value = float(contrastive_loss(z, z, ContrastiveHead(6)).data)
    assert abs(value - math.log(n)) < 1e-9


def test_contrastive_orthonormal_pairs():
    z = np.eye(2)
    assert float(contrastive_loss(z, z, head_with_scale(1.0)).data) == pytest.approx(math.log(1 + math.exp(-1)), abs=1e-15)
    assert float(contrastive_loss(z, z, head_with_scale(100.0)).data) < 1e-9


def test_contrastive_single_pair_warns_and_is_zero():
    with pytest.warns(UserWarning):
        value = float(contrastive_loss(np.eye(1), np.eye(1), ContrastiveHead(1)).data)
    assert value == 0.0


def test_contrastive_batch_mismatch():
    with pytest.raises(DimensionError):
        contrastive_loss(np.eye(3), np.eye(3)[:2], ContrastiveHead(3))


def test_dense_head_starts_as_scalar(rng):
    a, b = unit_rows(rng, 4, 5), unit_rows(rng, 4, 5)
    plain = float(contrastive_loss(a, b, ContrastiveHead(5)).data)
    dense = float(contrastive_loss(a, b, ContrastiveHead(5, dense=True)).data)
    assert dense == pytest.approx(plain, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(2, 6), st.floats(0.5, 100.0), st.integers(0, 10**6))
def test_contrastive_symmetric(n, d, scale, seed):
    rng = np.random.default_rng(seed)
    a, b = unit_rows(rng, n, d), unit_rows(rng, n, d)
    head = ContrastiveHead(d, log_scale=math.log(scale))
    lab = float(contrastive_loss(a, b, head).data)
    lba = float(contrastive_loss(b, a, head).data)
    assert abs(lab - lba) < 1e-12
    assert lab >= 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(2, 6), st.integers(0, 10**6))
def test_contrastive_descent_favours_partners(n, d, seed):
    # the motion-to-text half pulls every row toward its own text; the full
    # symmetric loss does so in aggregate over the batch
    rng = np.random.default_rng(seed)
    zt = unit_rows(rng, n, d)
    start = unit_rows(rng, n, d)
    head = head_with_scale(50.0)

    def neg_grad(loss_fn):
        zm = Tensor(start, requires_grad=True)
        with Tape() as tape:
            loss = loss_fn(zm)
        backward(loss, tape)
        return -zm.grad

    half = neg_grad(lambda zm: ad.cross_entropy_rows(head.logits(zm, Tensor(zt)), np.arange(n)))
    assert np.all(np.einsum("ij,ij->i", half, zt) >= -1e-12)
    full = neg_grad(lambda zm: contrastive_loss(zm, zt, head))
    assert np.einsum("ij,ij->", full, zt) >= -1e-12


def test_distill_examples():
    z = np.arange(8.0).reshape(1, 8)
    assert float(distill_loss(z, z).data) == 0.0
    diff = np.zeros((1, 8))
    diff[0, :2] = (3.0, 4.0)
    assert float(distill_loss(z + diff, z).data) == 25.0
    assert float(distill_loss(np.eye(2, 8), np.zeros((2, 8))).data) == 1.0


def test_distill_teacher_gets_no_gradient(rng):
    s = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    t = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    with Tape() as tape:
        loss = distill_loss(s, t)
    backward(loss, tape)
    assert t.grad is None
    np.testing.assert_allclose(s.grad, 2 * (s.data - t.data) / 3, atol=1e-15)


def test_alignment_endpoints(rng):
    z = unit_rows(rng, 5, 4)
    assert float(alignment_loss(z, z).data) == pytest.approx(0.0, abs=1e-15)
    assert float(alignment_loss(z, -z).data) == pytest.approx(2.0, abs=1e-15)
    a, b = np.eye(4)[:2], np.eye(4)[2:]
    assert float(alignment_loss(a, b).data) == 1.0


def test_alignment_unnormalised_inputs(rng):
    z = unit_rows(rng, 3, 4)
    assert float(alignment_loss(z * 7.0, z * np.array([[1.0], [2.0], [0.5]])).data) == pytest.approx(0.0, abs=1e-15)


def test_alignment_zero_row():
    with pytest.raises(DegenerateInputError, match="row 1"):
        alignment_loss(np.array([[1.0, 0.0], [0.0, 0.0]]), np.eye(2))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(2, 5), st.integers(0, 10**6))
def test_alignment_bounds(n, d, seed):
    rng = np.random.default_rng(seed)
    value = float(alignment_loss(rng.normal(size=(n, d)), rng.normal(size=(n, d))).data)
    assert -1e-12 <= value <= 2.0 + 1e-12


def test_total_examples():
    br = total_loss(0.3, 0.5, 0.2, LossWeights(0.4))
    assert br.total == pytest.approx(0.7, abs=1e-15)
    assert total_loss(0.3, 0.5, 0.2, LossWeights(0.0)).total == 0.3 + 0.2
    assert total_loss(0.3, 0.0, 0.2, LossWeights(1.0)).total == total_loss(0.3, 0.0, 0.2, LossWeights(0.2)).total


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 2), st.floats(0, 5))
def test_total_is_weighted_sum(c, d, a, lam):
    br = total_loss(c, d, a, LossWeights(lam))
    assert abs(br.total - (c + lam * d + a)) <= 1e-12 * max(1.0, c + lam * d + a)


def test_total_rejects_non_finite():
    with pytest.raises(NumericalError):
        total_loss(float("nan"), 0.0, 0.0, LossWeights())


def test_weights_validate():
    with pytest.raises(ConfigError):
        LossWeights(-0.1)


def _random_problem(seed=0, n=4, d=8, dense=False):
    rng = np.random.default_rng(seed)
    zm = Tensor(rng.uniform(-1, 1, (n, d)), requires_grad=True)
    us = Tensor(rng.uniform(-1, 1, (n, d)), requires_grad=True)
    ut = Tensor(rng.uniform(-1, 1, (n, d)))
    head = ContrastiveHead(d, dense=dense)
    head.log_scale.requires_grad = True
    if dense:
        head.params["head.W"].requires_grad = True
    return zm, us, ut, head


@pytest.mark.parametrize("dense", [False, True])
def test_contrastive_gradients(dense):
    zm, us, _, head = _random_problem(dense=dense)
    tensors = [zm, us] + list(head.params.values())
    fn = lambda: contrastive_loss(ad.l2_normalize_rows(zm), ad.l2_normalize_rows(us), head)
    assert check_gradients(fn, tensors) < 1e-4


def test_distill_and_alignment_gradients():
    zm, us, ut, _ = _random_problem(1)
    assert check_gradients(lambda: distill_loss(us, ut), [us]) < 1e-4
    assert check_gradients(lambda: alignment_loss(zm, us), [zm, us]) < 1e-4


def test_composite_gradient():
    zm, us, ut, head = _random_problem(2)

    def fn():
        a, b = ad.l2_normalize_rows(zm), ad.l2_normalize_rows(us)
        return total_loss(contrastive_loss(a, b, head), distill_loss(us, ut), alignment_loss(a, b), LossWeights(0.4)).tensor

    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert check_gradients(fn, [zm, us, head.log_scale]) < 1e-4
