"""Guiding network: encoding contracts, MI loss, contrastive loss, queue."""

import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from styleclust import GuidingNetwork, StyleQueue
from styleclust.errors import ConfigError
from styleclust.guiding import (
    momentum_update,
    mutual_information_loss,
    pseudo_label,
    style_contrastive_loss,
)


class TestEncode:
    def test_shape_contract(self):
        net = GuidingNetwork(k_hat=10, ch=2, style_dim=128)
        posterior, style = net.encode(torch.rand(2, 3, 128, 128) * 2 - 1)
        assert posterior.shape == (2, 10)
        assert style.shape == (2, 128)
        assert torch.all(posterior >= 0)
        assert torch.allclose(posterior.sum(1), torch.ones(2), atol=1e-5)

    def test_constant_zero_input_is_finite(self, tiny_guiding):
        posterior, style = tiny_guiding.encode(torch.zeros(3, 3, 32, 32))
        assert torch.isfinite(posterior).all()
        assert torch.isfinite(style).all()

    def test_duplicated_rows_identical_in_eval(self, tiny_guiding):
        tiny_guiding.eval()
        x = torch.rand(1, 3, 32, 32).repeat(3, 1, 1, 1)
        posterior, style = tiny_guiding.encode(x)
        assert torch.equal(posterior[0], posterior[1])
        assert torch.equal(style[0], style[2])

    def test_eval_mode_is_pure(self, tiny_guiding):
        tiny_guiding.eval()
        x = torch.rand(2, 3, 32, 32)
        first = tiny_guiding.encode(x)
        second = tiny_guiding.encode(x)
        assert torch.equal(first[0], second[0])
        assert torch.equal(first[1], second[1])

    def test_bad_spatial_size_raises(self, tiny_guiding):
        with pytest.raises(ConfigError, match="multiple of 32"):
            tiny_guiding.encode(torch.zeros(1, 3, 30, 30))

    def test_bad_channels_raises(self, tiny_guiding):
        with pytest.raises(ConfigError, match="expected input"):
            tiny_guiding.encode(torch.zeros(1, 1, 32, 32))


class TestPseudoLabel:
    def test_argmax(self):
        assert pseudo_label(torch.tensor([0.1, 0.7, 0.2])).item() == 1

    def test_tie_breaks_to_lowest_index(self):
        assert pseudo_label(torch.full((4,), 0.25)).item() == 0

    def test_invariant_under_monotone_logit_transform(self):
        logits = torch.randn(5, 6)
        base = pseudo_label(F.softmax(logits, dim=1))
        for transform in (lambda z: 3.0 * z + 1.0, torch.exp, torch.tanh):
            changed = pseudo_label(F.softmax(transform(logits), dim=1))
            assert torch.equal(base, changed)


class TestMutualInformation:
    def test_correlated_one_hot_reaches_log_k(self):
        p = torch.eye(2)
        loss, joint = mutual_information_loss(p, p)
        assert -loss.item() == pytest.approx(math.log(2), abs=1e-6)
        assert torch.allclose(joint, torch.diag(torch.tensor([0.5, 0.5])))

    def test_uniform_posteriors_have_zero_information(self):
        p = torch.full((4, 3), 1.0 / 3.0)
        loss, _ = mutual_information_loss(p, p)
        assert -loss.item() == pytest.approx(0.0, abs=1e-7)

    def test_matches_brute_force_double_sum(self):
        # independent evaluation of the joint/marginal double sum
        rng = np.random.default_rng(42)
        p = rng.dirichlet(np.ones(3), size=5)
        q = rng.dirichlet(np.ones(3), size=5)
        joint = np.zeros((3, 3))
        for b in range(5):
            for i in range(3):
                for j in range(3):
                    joint[i, j] += p[b, i] * q[b, j] / 5
        joint = (joint + joint.T) / 2
        joint /= joint.sum()
        expected = 0.0
        for i in range(3):
            for j in range(3):
                expected += joint[i, j] * math.log(
                    joint[i, j] / (joint[i].sum() * joint[:, j].sum())
                )
        loss, _ = mutual_information_loss(
            torch.from_numpy(p).float(), torch.from_numpy(q).float()
        )
        assert -loss.item() == pytest.approx(expected, rel=1e-5)

    def test_bounds_on_random_batches(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            k = int(rng.integers(2, 6))
            b = int(rng.integers(1, 9))
            p = torch.from_numpy(rng.dirichlet(np.ones(k), size=b)).float()
            q = torch.from_numpy(rng.dirichlet(np.ones(k), size=b)).float()
            loss, joint = mutual_information_loss(p, q)
            info = -loss.item()
            assert -1e-6 <= info <= math.log(k) + 1e-6
            assert joint.sum().item() == pytest.approx(1.0, abs=1e-5)
            assert torch.allclose(joint, joint.t(), atol=1e-7)

    def test_empty_batch_raises(self):
        empty = torch.zeros(0, 3)
        with pytest.raises(ValueError, match="empty"):
            mutual_information_loss(empty, empty)

    def test_misaligned_batches_raise(self):
        with pytest.raises(ValueError, match="aligned"):
            mutual_information_loss(torch.ones(2, 3) / 3, torch.ones(3, 3) / 3)


class TestStyleContrastive:
    def test_uniform_logits_give_log_n_plus_one(self):
        # query has identical similarity to the positive and both negatives
        query = torch.tensor([[1.0, 0.0]])
        positive = torch.tensor([[0.3, 0.5]])
        negatives = torch.tensor([[0.3, -0.2], [0.3, 0.9]])
        loss = style_contrastive_loss(query, positive, negatives, 1.0)
        assert loss.item() == pytest.approx(math.log(3), rel=1e-6)

    def test_aligned_positive_orthogonal_negatives(self):
        query = torch.tensor([[1.0, 0.0]])
        positive = torch.tensor([[1.0, 0.0]])
        negatives = torch.tensor([[0.0, 1.0], [0.0, -1.0]])
        loss = style_contrastive_loss(query, positive, negatives, 1.0)
        assert loss.item() == pytest.approx(0.551444713932051, rel=1e-6)

    def test_loss_decreases_as_positive_similarity_grows(self):
        negatives = torch.randn(4, 3)
        query = F.normalize(torch.tensor([[1.0, 1.0, 0.0]]), dim=1)
        previous = float("inf")
        for alignment in (0.1, 0.4, 0.7, 1.0):
            positive = F.normalize(
                alignment * query + (1 - alignment) * torch.tensor([[0.0, 0.0, 1.0]]),
                dim=1,
            )
            loss = style_contrastive_loss(query, positive, negatives, 0.5).item()
            assert loss < previous
            previous = loss

    def test_empty_queue_uses_positive_only(self):
        query = F.normalize(torch.randn(3, 8), dim=1)
        positive = F.normalize(torch.randn(3, 8), dim=1)
        assert style_contrastive_loss(query, positive, None, 0.1).item() == 0.0
        empty = torch.zeros(0, 8)
        assert style_contrastive_loss(query, positive, empty, 0.1).item() == 0.0

    def test_gradient_only_through_query(self):
        query = F.normalize(torch.randn(2, 4), dim=1).requires_grad_(True)
        positive = F.normalize(torch.randn(2, 4), dim=1).requires_grad_(True)
        negatives = F.normalize(torch.randn(5, 4), dim=1).requires_grad_(True)
        style_contrastive_loss(query, positive, negatives, 0.2).backward()
        assert query.grad is not None and query.grad.abs().sum() > 0
        assert positive.grad is None
        assert negatives.grad is None

    def test_bad_temperature_raises(self):
        q = torch.randn(1, 4)
        with pytest.raises(ValueError, match="temperature"):
            style_contrastive_loss(q, q, None, 0.0)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError, match="shapes differ"):
            style_contrastive_loss(torch.randn(2, 4), torch.randn(3, 4), None, 1.0)


def _code(*values):
    return torch.tensor([list(values)], dtype=torch.float32)


class TestStyleQueue:
    def make_queue(self, capacity, style_dim=2):
        net = GuidingNetwork(k_hat=2, ch=2, style_dim=style_dim)
        return StyleQueue(net, capacity=capacity, momentum=0.5, temperature=0.1)

    def test_fifo_eviction(self):
        queue = self.make_queue(4)
        a, b, c, d, e, f = (_code(float(i), 0.0) for i in range(6))
        queue.push(torch.cat([a, b, c, d]))
        queue.push(torch.cat([e, f]))
        assert torch.equal(queue.contents(), torch.cat([c, d, e, f]))

    def test_oversized_push_keeps_last_n_in_order(self):
        queue = self.make_queue(3)
        codes = torch.arange(10, dtype=torch.float32).view(5, 2)
        queue.push(codes)
        assert torch.equal(queue.contents(), codes[-3:])

    def test_empty_push_is_noop(self):
        queue = self.make_queue(3)
        queue.push(_code(1.0, 0.0))
        before = queue.contents().clone()
        queue.push(torch.zeros(0, 2))
        assert torch.equal(queue.contents(), before)

    def test_exhaustive_sequence_against_model(self):
        # every push size against a plain-list FIFO model
        queue = self.make_queue(5)
        model: list[float] = []
        counter = 0.0
        rng = np.random.default_rng(1)
        for _ in range(40):
            size = int(rng.integers(0, 4))
            batch = torch.tensor(
                [[counter + i, 0.0] for i in range(size)], dtype=torch.float32
            )
            counter += size
            queue.push(batch)
            model.extend(v[0] for v in batch.tolist())
            model = model[-5:]
            got = [] if queue.contents() is None else queue.contents()[:, 0].tolist()
            assert got == model

    def test_warmup_growth(self):
        queue = self.make_queue(8)
        assert len(queue) == 0 and queue.contents() is None
        queue.push(torch.randn(3, 2))
        assert len(queue) == 3
        queue.push(torch.randn(3, 2))
        assert len(queue) == 6
        queue.push(torch.randn(3, 2))
        assert len(queue) == 8

    def test_key_params_never_require_grad(self):
        queue = self.make_queue(4)
        assert all(not p.requires_grad for p in queue.key_net.parameters())


class TestMomentumUpdate:
    def _nets(self):
        torch.manual_seed(0)
        query = GuidingNetwork(k_hat=2, ch=2, style_dim=4)
        queue = StyleQueue(query, capacity=4, momentum=0.5, temperature=0.1)
        return query, queue

    def test_momentum_zero_copies_query(self):
        query, queue = self._nets()
        queue.momentum = 0.0
        with torch.no_grad():
            for p in query.parameters():
                p.add_(1.0)
        momentum_update(queue, query)
        for q, k in zip(query.parameters(), queue.key_net.parameters()):
            assert torch.equal(q, k)

    def test_momentum_one_keeps_key(self):
        query, queue = self._nets()
        queue.momentum = 1.0
        before = [p.clone() for p in queue.key_net.parameters()]
        with torch.no_grad():
            for p in query.parameters():
                p.add_(1.0)
        momentum_update(queue, query)
        for old, new in zip(before, queue.key_net.parameters()):
            assert torch.equal(old, new)

    def test_two_step_closed_form(self):
        query, queue = self._nets()
        queue.momentum = 0.999
        with torch.no_grad():
            for p in queue.key_net.parameters():
                p.zero_()
            for p in query.parameters():
                p.fill_(1.0)
        momentum_update(queue, query)
        momentum_update(queue, query)
        expected = 1.0 - 0.999**2  # 0.001999
        for p in queue.key_net.parameters():
            assert torch.allclose(
                p, torch.full_like(p, expected), atol=1e-9, rtol=0
            )

    def test_shape_mismatch_raises(self):
        query, queue = self._nets()
        other = GuidingNetwork(k_hat=3, ch=2, style_dim=4)
        with pytest.raises(ValueError, match="mismatch"):
            momentum_update(queue, other)
