import math

import numpy as np
import pytest

from anonybench import (
    Anonymizer, DomainException, ShapeException, Tape, Tensor, anonymizer_loss, binary_cross_entropy, cross_entropy,
    l1_recon_loss, nt_xent, penalty_loss, rms_diff
)
from anonybench.losses import compose, log_softmax


def brute_force_nt_xent(z1: np.ndarray, z2: np.ndarray, tau: float) -> float:
    z = np.concatenate([z1, z2], axis=0)
    n = z1.shape[0]
    total = 0.0
    for i in range(2 * n):
        positive = i + n if i < n else i - n

        def h(a: int, b: int) -> float:
            u, v = z[a], z[b]
            return math.exp(float(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v)) / tau)

        denominator = sum(h(i, j) for j in range(2 * n) if j != i)
        total += -math.log(h(i, positive) / denominator)
    return total / (2 * n)


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss = cross_entropy(Tensor(np.zeros((3, 4))), np.array([0, 1, 3]))
        assert loss.item() == pytest.approx(math.log(4.0))

    def test_oracle(self):
        logits = np.array([[2.0, -1.0, 0.5], [0.0, 3.0, 1.0]])
        labels = np.array([2, 1])
        expected = np.mean([
            -(row[y] - math.log(np.exp(row).sum())) for row, y in zip(logits, labels)
        ])
        assert cross_entropy(Tensor(logits), labels).item() == pytest.approx(expected, abs=1e-12)

    def test_gradient_is_softmax_minus_one_hot(self):
        logits = Tensor(np.array([[1.0, 2.0, 3.0]]), requires_grad=True)
        with Tape():
            loss = cross_entropy(logits, np.array([0]))
        loss.backward()
        p = np.exp([1.0, 2.0, 3.0]) / np.exp([1.0, 2.0, 3.0]).sum()
        assert np.allclose(logits.grad, p - np.array([1.0, 0.0, 0.0]))

    def test_large_logits_stay_finite(self):
        assert np.isfinite(log_softmax(Tensor([[1000.0, -1000.0]])).data).all()

    @pytest.mark.parametrize('logits, labels, exc', [
        (np.zeros((2, 3)), np.array([0, 3]), DomainException),
        (np.zeros((2, 3)), np.array([0.0, 1.0]), DomainException),
        (np.zeros((2, 3)), np.array([0, 1, 2]), ShapeException),
        (np.zeros(3), np.array([0]), ShapeException),
    ])
    def test_errors(self, logits, labels, exc):
        with pytest.raises(exc):
            cross_entropy(Tensor(logits), labels)


class TestBinaryCrossEntropy:
    def test_zero_logits(self):
        loss = binary_cross_entropy(Tensor(np.zeros((2, 3))), np.array([[1, 0, 1], [0, 0, 1]]))
        assert loss.item() == pytest.approx(math.log(2.0))

    def test_oracle(self):
        x = np.array([[3.0, -2.0], [0.5, 8.0]])
        y = np.array([[1.0, 0.0], [0.0, 0.0]])
        p = 1.0 / (1.0 + np.exp(-x))
        expected = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
        assert binary_cross_entropy(Tensor(x), y).item() == pytest.approx(expected, rel=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeException):
            binary_cross_entropy(Tensor(np.zeros((2, 3))), np.zeros((2, 2)))


class TestNtXent:
    @pytest.mark.parametrize('seed', range(50))
    @pytest.mark.parametrize('n, d, tau', [(1, 3, 0.1), (2, 4, 0.5), (3, 6, 0.2), (4, 3, 0.1)])
    def test_brute_force(self, seed: int, n: int, d: int, tau: float):
        rng = np.random.default_rng(seed)
        z1, z2 = rng.standard_normal((n, d)), rng.standard_normal((n, d))
        assert nt_xent(Tensor(z1), Tensor(z2), tau).item() == pytest.approx(
            brute_force_nt_xent(z1, z2, tau), abs=1e-8
        )

    @pytest.mark.parametrize('z1, z2, expected', [
        ([[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]], math.log(1.0 + 2.0 * math.exp(-10.0))),
        ([[1.0, 2.0], [1.0, 2.0]], [[1.0, 2.0], [1.0, 2.0]], math.log(3.0)),
        ([[0.5, 0.5, 1.0]] * 3, [[0.5, 0.5, 1.0]] * 3, math.log(5.0)),
        ([[2.0, -1.0]] * 4, [[2.0, -1.0]] * 4, math.log(7.0)),
    ])
    def test_worked_examples(self, z1, z2, expected):
        assert nt_xent(Tensor(z1), Tensor(z2), 0.1).item() == pytest.approx(expected, rel=1e-9)

    @pytest.mark.parametrize('seed', range(10))
    def test_pair_order_does_not_matter(self, seed: int):
        rng = np.random.default_rng(seed)
        z1, z2 = rng.standard_normal((4, 5)), rng.standard_normal((4, 5))
        order = rng.permutation(4)
        before = nt_xent(Tensor(z1), Tensor(z2), 0.1).item()
        after = nt_xent(Tensor(z1[order]), Tensor(z2[order]), 0.1).item()
        assert after == pytest.approx(before, abs=1e-12)

    def test_falls_as_positive_similarity_rises(self):
        # rotating the second view in the e1/e3 plane changes only cos(z1[0], z2[0])
        z1 = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        losses = []
        for angle in (1.5, 1.2, 0.9, 0.6, 0.3, 0.0):
            z2 = np.array([[math.cos(angle), 0.0, math.sin(angle)], [0.0, 1.0, 0.0]])
            losses.append(nt_xent(Tensor(z1), Tensor(z2), 0.1).item())
        assert all(later < earlier for earlier, later in zip(losses, losses[1:]))

    def test_single_pair_is_zero(self):
        assert nt_xent(Tensor([[1.0, 2.0]]), Tensor([[-3.0, 0.5]]), 0.1).item() == pytest.approx(0.0, abs=1e-12)

    def test_aligned_views_score_lower(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((4, 6))
        aligned = nt_xent(Tensor(z), Tensor(z), 0.1).item()
        shuffled = nt_xent(Tensor(z), Tensor(z[::-1].copy()), 0.1).item()
        assert aligned < shuffled

    @pytest.mark.parametrize('z1, z2, tau, exc', [
        (np.ones((2, 3)), np.ones((3, 3)), 0.1, ShapeException),
        (np.ones(3), np.ones(3), 0.1, ShapeException),
        (np.ones((2, 3)), np.ones((2, 3)), 0.0, DomainException),
        (np.zeros((2, 3)), np.ones((2, 3)), 0.1, DomainException),
    ])
    def test_errors(self, z1, z2, tau, exc):
        with pytest.raises(exc):
            nt_xent(Tensor(z1), Tensor(z2), tau)


class TestPenalty:
    def test_rms(self):
        x = Tensor(np.zeros((2, 1, 2, 2)))
        y = Tensor(np.full((2, 1, 2, 2), 0.5))
        assert rms_diff(x, y).item() == pytest.approx(0.5)

    def test_active_hinge(self):
        x = Tensor(np.zeros((1, 1, 2, 2)))
        y = Tensor(np.full((1, 1, 2, 2), 0.5), requires_grad=True)
        with Tape():
            loss = penalty_loss(x, y, 0.3)
        loss.backward()
        assert loss.item() == pytest.approx(0.2)
        # d rms / d y = (y - x) / (n * rms)
        assert np.allclose(y.grad, 0.5 / (4 * 0.5))

    @pytest.mark.parametrize('limiter', [0.6, 1.0])
    def test_inactive_hinge_has_zero_gradient(self, limiter: float):
        x = Tensor(np.zeros((1, 1, 2, 2)))
        y = Tensor(np.full((1, 1, 2, 2), 0.5), requires_grad=True)
        with Tape():
            loss = penalty_loss(x, y, limiter)
        loss.backward()
        assert loss.item() == 0.0
        assert np.all(y.grad == 0.0)

    def test_zero_limiter_is_plain_rms(self):
        x = Tensor(np.zeros((1, 2)))
        y = Tensor(np.array([[3.0, 4.0]]))
        assert penalty_loss(x, y, 0.0).item() == rms_diff(x, y).item() == pytest.approx(math.sqrt(12.5))

    def test_full_limiter_passes_nothing_to_anonymizer(self):
        anonymizer = Anonymizer(3, 4, 4, seed=3)
        x = Tensor(np.random.default_rng(3).uniform(size=(2, 3, 8, 8)))
        with Tape() as tape:
            loss = penalty_loss(x, anonymizer(x), 1.0)
            tape.backward(loss)
        assert loss.item() == 0.0
        assert all(t.grad is None or not t.grad.any() for t in anonymizer.params)

    def test_negative_limiter(self):
        with pytest.raises(DomainException):
            penalty_loss(Tensor(np.zeros(2)), Tensor(np.zeros(2)), -0.1)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeException):
            rms_diff(Tensor(np.zeros(2)), Tensor(np.zeros(3)))


class TestAnonymizerLoss:
    @pytest.mark.parametrize('l_t, l_b, l_p, lam, mu, expected', [
        (1.0, 3.0, 0.5, 2.0, 2.0, 0.0),
        (1.0, 1.5, 0.5, 2.0, 2.0, 0.5),
        (0.2, 0.7, 0.0, 0.0, float('inf'), -0.5),
        (2.0, 0.0, 1.0, 1.0, 5.0, 3.0),
    ])
    def test_value(self, l_t, l_b, l_p, lam, mu, expected):
        value = anonymizer_loss(Tensor(l_t), Tensor(l_b), Tensor(l_p), lam, mu)
        assert value.item() == pytest.approx(expected)

    @pytest.mark.parametrize('l_b, mu, grad', [(1.0, 2.0, -1.0), (3.0, 2.0, 0.0)])
    def test_budget_enters_with_negative_sign(self, l_b, mu, grad):
        l_t = Tensor(1.0, requires_grad=True)
        budget = Tensor(l_b, requires_grad=True)
        penalty = Tensor(0.5, requires_grad=True)
        with Tape():
            terms = compose(l_t, budget, penalty, 0.3, mu)
        terms.l_a.backward()
        assert l_t.grad == 1.0
        assert budget.grad == grad
        assert penalty.grad == pytest.approx(0.3)
        assert terms.values()['l_b'] == l_b

    @pytest.mark.parametrize('lam, mu', [(-1.0, 1.0), (1.0, 0.0)])
    def test_errors(self, lam, mu):
        with pytest.raises(DomainException):
            anonymizer_loss(Tensor(1.0), Tensor(1.0), Tensor(1.0), lam, mu)


class TestL1Recon:
    def test_batch_mean_of_sums(self):
        loss = l1_recon_loss(Tensor(np.ones((2, 1, 2, 2))), Tensor(np.zeros((2, 1, 2, 2))))
        assert loss.item() == 4.0

    def test_single_image(self):
        loss = l1_recon_loss(Tensor(np.ones((1, 2, 2))), Tensor(np.full((1, 2, 2), 0.75)))
        assert loss.item() == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeException):
            l1_recon_loss(Tensor(np.ones((1, 2, 2))), Tensor(np.ones((1, 2, 3))))
