import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imml_lab.autodiff import Tensor, grad_check, matmul, reduce_sum, softmax_xent
from imml_lab.config import FusionSpec, LossConfig
from imml_lab.errors import BatchTooSmall, DimensionMismatch, NonPositiveInput, NonSimplexInput
from imml_lab.losses import (
    beta_loss, fuse_unpaired, imml_loss, mdke_loss, mixed_label, mod_index, per_modality_mdke, sample_lambdas,
    task_loss, unpaired_pairs,
)

CONCAT = FusionSpec()
WEIGHTED = FusionSpec(kind="weighted_sum")


def fixed(lam: float, kind: str = "concat") -> FusionSpec:
    return FusionSpec(kind=kind, lambda_source="fixed", fixed_lambda=lam)


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def reference_mdke(xi, tau: float) -> float:
    """Straight-line sum over modalities, anchors and denominator entries."""
    xi = [unit(x) for x in xi]
    n_mod, batch = len(xi), len(xi[0])
    total = 0.0
    for m in range(n_mod):
        partner = (m + 1) % n_mod
        for i in range(batch):
            positive = math.exp(xi[m][i] @ xi[partner][i] / tau)
            denominator = 0.0
            for other in (m, partner):
                for j in range(batch):
                    if other == m and j == i:
                        continue
                    denominator += math.exp(xi[m][i] @ xi[other][j] / tau)
            total += -math.log(positive / denominator)
    return total


def test_mod_index():
    assert mod_index(3, 5) == 3
    assert mod_index(7, 5) == 2
    assert mod_index(10, 5) == 5
    assert mod_index(1, 1) == 1
    with pytest.raises(NonPositiveInput):
        mod_index(0, 5)
    with pytest.raises(NonPositiveInput):
        mod_index(3, 0)


@given(st.integers(1, 1000), st.integers(1, 50))
def test_mod_index_stays_in_range(x, n):
    assert 1 <= mod_index(x, n) <= n
    assert (mod_index(x, n) - x) % n == 0


def test_mdke_single_sample_is_zero():
    xi = [Tensor([[1.0, 2.0]]), Tensor([[-0.5, 3.0]])]
    assert mdke_loss(xi, 0.5).item() == pytest.approx(0.0, abs=1e-12)


def test_mdke_identical_embeddings():
    xi = [Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3)))]
    assert mdke_loss(xi, LossConfig()).item() == pytest.approx(4 * math.log(3))
    terms = per_modality_mdke(xi, 0.5)
    assert [t.item() for t in terms] == pytest.approx([2 * math.log(3)] * 2)


@pytest.mark.parametrize("n_mod,batch", [(2, 2), (2, 5), (3, 4)])
def test_mdke_matches_reference(n_mod, batch):
    rng = np.random.default_rng(batch)
    xi = [rng.normal(size=(batch, 4)) for _ in range(n_mod)]
    value = mdke_loss([Tensor(x) for x in xi], 0.3).item()
    assert value == pytest.approx(reference_mdke(xi, 0.3), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_mdke_nonnegative_and_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    xi = [rng.normal(size=(4, 3)) for _ in range(2)]
    rotation, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    value = mdke_loss([Tensor(x) for x in xi], 0.5).item()
    rotated = mdke_loss([Tensor(x @ rotation) for x in xi], 0.5).item()
    assert value >= 0.0
    assert rotated == pytest.approx(value, rel=1e-9)


def test_mdke_shape_checks():
    with pytest.raises(DimensionMismatch):
        mdke_loss([Tensor(np.ones((2, 3)))], 0.5)
    with pytest.raises(DimensionMismatch):
        mdke_loss([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))], 0.5)


def test_fuse_unpaired():
    h_p = Tensor([[1.0, 2.0]])
    a1, a2 = Tensor([[4.0, 8.0]]), Tensor([[-4.0, 0.0]])
    assert np.allclose(fuse_unpaired(h_p, [a1], 1.0, CONCAT).data, [[1.0, 2.0, 0.0, 0.0]])
    assert np.allclose(fuse_unpaired(h_p, [a1], 0.0, WEIGHTED).data, a1.data)
    assert np.allclose(fuse_unpaired(h_p, [a1, a2], 0.5, WEIGHTED).data, [[0.5, 3.0]])
    per_row = fuse_unpaired(Tensor(np.ones((2, 1))), [Tensor(np.zeros((2, 1)))], np.array([0.25, 0.75]), CONCAT)
    assert np.allclose(per_row.data, [[0.25, 0.0], [0.75, 0.0]])


def test_fuse_unpaired_errors():
    with pytest.raises(DimensionMismatch):
        fuse_unpaired(Tensor(np.ones((1, 2))), [Tensor(np.ones((1, 3)))], 0.5, WEIGHTED)
    with pytest.raises(ValueError):
        fuse_unpaired(Tensor(np.ones((1, 2))), [Tensor(np.ones((1, 2)))], 1.5, CONCAT)


def test_mixed_label():
    eye = np.eye(3)
    assert np.array_equal(mixed_label(eye[0], [eye[1]], 1.0), eye[0])
    assert np.allclose(mixed_label(eye[0], [eye[1]], 0.5), [0.5, 0.5, 0.0])
    assert np.allclose(mixed_label(eye[0], [eye[1], eye[2]], 0.3), [0.3, 0.35, 0.35])
    with pytest.raises(NonSimplexInput):
        mixed_label(np.array([0.5, 0.6, 0.0]), [eye[1]], 0.5)


@given(st.floats(0.0, 1.0), st.integers(0, 2), st.lists(st.integers(0, 2), min_size=1, max_size=2))
def test_mixed_label_stays_on_simplex(lam, p, others):
    eye = np.eye(3)
    label = mixed_label(eye[p], [eye[a] for a in others], lam)
    assert np.all(label >= 0.0)
    assert label.sum() == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("modalities", [2, 3])
def test_mixed_label_simplex_over_many_draws(modalities):
    rng = np.random.default_rng(modalities)
    draws, classes = 10_000, 4
    eye = np.eye(classes)
    lam = rng.uniform(0.0, 1.0, size=draws)
    lam[:2] = [0.0, 1.0]
    labels = [eye[rng.integers(0, classes, size=draws)] for _ in range(modalities)]
    mixed = mixed_label(labels[0], labels[1:], lam)
    assert mixed.shape == (draws, classes)
    assert np.all(mixed >= 0.0)
    np.testing.assert_allclose(mixed.sum(axis=1), 1.0, rtol=0, atol=1e-9)
    np.testing.assert_allclose(mixed[1], labels[0][1], rtol=0, atol=1e-12)


def test_unpaired_pairs():
    anchors, partners = unpaired_pairs(3, 2)
    assert anchors.tolist() == [0, 0, 1, 1, 2, 2]
    assert partners.tolist() == [1, 2, 2, 0, 0, 1]
    with pytest.raises(BatchTooSmall):
        unpaired_pairs(2, 2)


def test_beta_sampler_mean():
    lambdas = sample_lambdas(100_000, LossConfig(beta_a=0.1, beta_b=0.1), CONCAT, np.random.default_rng(0))
    assert abs(lambdas.mean() - 0.5) < 0.01
    assert np.all((lambdas >= 0.0) & (lambdas <= 1.0))
    assert np.all(sample_lambdas(4, LossConfig(), fixed(0.3), np.random.default_rng(0)) == 0.3)


def test_beta_loss_with_full_predominance():
    rng = np.random.default_rng(1)
    h_p, h_a = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    labels = np.eye(3)[[0, 1, 2, 1]]
    weights = np.vstack([rng.normal(size=(3, 3)), np.zeros((3, 3))])
    cfg = LossConfig(n_unpaired=1)
    value = beta_loss(
        [Tensor(h_p), Tensor(h_a)], labels, lambda z: matmul(z, Tensor(weights)), cfg, fixed(1.0),
        np.random.default_rng(0),
    ).item()
    expected = reduce_sum(softmax_xent(Tensor(h_p @ weights[:3]), labels)).item()
    assert value == pytest.approx(expected, rel=1e-12)


def test_beta_loss_enumerates_pairs():
    h_p = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    h_a = np.array([[0.5, 0.5], [2.0, 0.0], [0.0, -1.0]])
    labels = np.eye(2)[[0, 1, 0]]
    cfg = LossConfig(n_unpaired=2)
    value = beta_loss(
        [Tensor(h_p), Tensor(h_a)], labels, lambda z: z, cfg, fixed(0.5, "weighted_sum"), np.random.default_rng(0),
    ).item()

    expected = 0.0
    for i in range(3):
        for n in (1, 2):
            j = (i + n) % 3
            logits = 0.5 * h_p[i] + 0.5 * h_a[j]
            target = 0.5 * labels[i] + 0.5 * labels[j]
            log_probs = logits - np.log(np.exp(logits).sum())
            expected -= float(target @ log_probs)
    assert value == pytest.approx(expected, rel=1e-12)


def test_beta_loss_is_seeded():
    rng = np.random.default_rng(2)
    features = [Tensor(rng.normal(size=(5, 3))), Tensor(rng.normal(size=(5, 3)))]
    labels = np.eye(3)[[0, 1, 2, 0, 1]]
    predict = lambda z: matmul(z, Tensor(np.ones((6, 3))))
    run = lambda seed: beta_loss(features, labels, predict, LossConfig(), CONCAT, np.random.default_rng(seed)).item()
    assert run(5) == run(5)


def test_beta_loss_errors():
    features = [Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3)))]
    with pytest.raises(BatchTooSmall):
        beta_loss(features, np.eye(3)[[0, 1]], lambda z: z, LossConfig(n_unpaired=2), CONCAT, np.random.default_rng(0))
    with pytest.raises(DimensionMismatch):
        beta_loss(features, np.eye(3)[[0, 1, 2]], lambda z: z, LossConfig(n_unpaired=1), CONCAT, np.random.default_rng(0))


def test_task_loss_kinds():
    logits = Tensor([[0.0, 0.0]])
    assert task_loss(logits, [[0.5, 0.5]]).item() == pytest.approx(math.log(2))
    assert task_loss(logits, [[1.0, 0.0]], "mse").item() == pytest.approx(0.5)
    with pytest.raises(ValueError):
        task_loss(logits, [[1.0, 0.0]], "hinge")


def test_imml_loss():
    cfg = LossConfig(gamma1=0.0, gamma2=0.0)
    assert imml_loss(Tensor(3.0), Tensor(4.0), Tensor(1.5), cfg).item() == 1.5
    cfg = LossConfig(gamma1=1e-6, gamma2=1e4)
    assert imml_loss(Tensor(3.0), Tensor(4.0), Tensor(1.5), cfg).item() == pytest.approx(3e-6 + 4e4 + 1.5)
    assert imml_loss(Tensor(0.0), Tensor(0.0), Tensor(0.0), LossConfig()).item() == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_losses_pass_grad_check(seed):
    rng = np.random.default_rng(seed)
    cfg = LossConfig(n_unpaired=2)
    spec = fixed(float(rng.uniform(0.2, 0.8)))
    xi = [Tensor(rng.normal(size=(3, 3))), Tensor(rng.normal(size=(3, 3)))]
    h = [Tensor(rng.normal(size=(4, 3))), Tensor(rng.normal(size=(4, 3)))]
    w = Tensor(rng.normal(size=(6, 2)))
    labels = np.eye(2)[rng.integers(0, 2, size=4)]

    def beta(hp, ha, weights):
        return beta_loss([hp, ha], labels, lambda z: matmul(z, weights), cfg, spec, np.random.default_rng(0))

    assert grad_check(lambda a, b: mdke_loss([a, b], cfg), xi, 1e-5) < 1e-4
    assert grad_check(beta, h + [w], 1e-5) < 1e-4
