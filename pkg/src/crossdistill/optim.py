"""Adam with bias correction and a multi-step learning-rate decay schedule."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class DivergenceError(RuntimeError):
    """Raised when training produces non-finite losses or gradients."""


def effective_lr(
    base_lr: float, epoch: int, milestones: tuple[int, ...] = (60, 70, 80), decay: float = 0.1
) -> float:
    """Learning rate after applying ``decay`` once per milestone <= epoch."""
    hits = sum(1 for m in milestones if m <= epoch)
    return base_lr * decay**hits


def zero_grad(params: list[Tensor]) -> None:
    for p in params:
        p.grad = None


class Adam:
    """Standard Adam; the step size follows the multi-step schedule by epoch."""

    def __init__(
        self,
        params: list[Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        milestones: tuple[int, ...] = (60, 70, 80),
        lr_decay: float = 0.1,
    ):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        if list(milestones) != sorted(milestones):
            raise ValueError("milestones must be sorted ascending")
        self.params = list(params)
        self.lr = float(lr)
        self.betas = (float(betas[0]), float(betas[1]))
        self.eps = float(eps)
        self.milestones = tuple(int(m) for m in milestones)
        self.lr_decay = float(lr_decay)
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        zero_grad(self.params)

    def step(self, epoch: int = 0) -> None:
        """Apply one update from the accumulated gradients.

        Parameters with no gradient (never touched by the loss) are skipped.
        Non-finite gradients abort with diagnostics rather than corrupting
        the parameters.
        """
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.betas
        lr_t = effective_lr(self.lr, epoch, self.milestones, self.lr_decay)
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            if not np.all(np.isfinite(g)):
                bad = int(np.count_nonzero(~np.isfinite(g)))
                raise DivergenceError(
                    f"non-finite gradient in parameter {i} (shape {p.data.shape}, "
                    f"{bad} bad entries) at optimizer step {t}, epoch {epoch}"
                )
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            m_hat = self.m[i] / (1.0 - b1**t)
            v_hat = self.v[i] / (1.0 - b2**t)
            p.data -= lr_t * m_hat / (np.sqrt(v_hat) + self.eps)
