"""Optimizer checks: hand-computed update, milestone schedule, failure modes."""

import numpy as np
import pytest

from crossdistill.optim import Adam, DivergenceError, effective_lr
from crossdistill.tensor import Tensor


class TestSchedule:
    def test_decay_applies_at_each_milestone(self):
        lr = 1e-3
        assert effective_lr(lr, 59) == lr
        assert effective_lr(lr, 60) == pytest.approx(lr * 0.1)
        assert effective_lr(lr, 69) == pytest.approx(lr * 0.1)
        assert effective_lr(lr, 70) == pytest.approx(lr * 0.01)
        assert effective_lr(lr, 80) == pytest.approx(lr * 0.001)
        assert effective_lr(lr, 500) == pytest.approx(lr * 0.001)

    def test_unsorted_milestones_rejected(self):
        with pytest.raises(ValueError):
            Adam([Tensor(np.zeros(1), requires_grad=True)], milestones=(70, 60))


class TestAdamStep:
    def test_single_step_matches_hand_formula(self):
        # one scalar parameter, constant gradient 1, lr 1e-3, first step:
        # m = 0.1, v = 0.001, m_hat = 1, v_hat = 1, delta = lr / (1 + eps)
        p = Tensor(np.array([2.0]), requires_grad=True)
        opt = Adam([p], lr=1e-3)
        p.grad = np.array([1.0])
        opt.step(epoch=0)
        expected = 2.0 - 1e-3 * 1.0 / (np.sqrt(1.0) + 1e-8)
        np.testing.assert_allclose(p.data, [expected], rtol=0, atol=1e-18)

    def test_zero_gradient_leaves_params_unchanged(self):
        p = Tensor(np.array([1.5, -2.0]), requires_grad=True)
        opt = Adam([p])
        p.grad = np.zeros(2)
        opt.step(epoch=0)
        np.testing.assert_array_equal(p.data, [1.5, -2.0])

    def test_missing_gradient_is_skipped(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam([p])
        opt.step(epoch=0)
        np.testing.assert_array_equal(p.data, [1.0])

    def test_milestone_shrinks_update(self):
        deltas = []
        for epoch in (59, 60):
            p = Tensor(np.array([0.0]), requires_grad=True)
            opt = Adam([p], lr=1e-3, milestones=(60, 70, 80), lr_decay=0.1)
            p.grad = np.array([1.0])
            opt.step(epoch=epoch)
            deltas.append(abs(float(p.data[0])))
        np.testing.assert_allclose(deltas[1], deltas[0] * 0.1, rtol=1e-12)

    def test_nan_gradient_fails_with_diagnostics(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam([p])
        p.grad = np.array([np.nan])
        with pytest.raises(DivergenceError, match="parameter 0"):
            opt.step(epoch=0)

    def test_zero_grad_resets(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam([p])
        p.grad = np.array([3.0])
        opt.zero_grad()
        assert p.grad is None
