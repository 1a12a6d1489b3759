"""Training objectives for contrastive pretraining, cross-modality distillation,
and downstream fine-tuning, plus the two feature-alignment baselines.

Conventions shared by every function here:

* Similarities are plain inner products; callers normally pass unit-norm
  embedding rows, which bounds every similarity by 1.
* The batch similarity distribution is column-stochastic: entry (i, j) is
  the probability of row i given anchor column j, i.e. a softmax over the
  first index.  Distillation and the total-variation diagnostics inherit
  this orientation.
* ``reduction="sum"`` reproduces the plain double-sum values used in the
  worked examples and tests; ``reduction="mean"`` divides by the number of
  anchor terms, which keeps gradient scale independent of batch size during
  optimization.
* Self-similarity terms stay inside every softmax denominator; there is no
  diagonal masking.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, log_softmax, matmul, mul, softmax, tmean, tsum, transpose

VALID_REDUCTIONS = ("sum", "mean")


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    return tau


def _check_reduction(reduction: str) -> str:
    if reduction not in VALID_REDUCTIONS:
        raise ValueError(f"reduction must be one of {VALID_REDUCTIONS}, got {reduction!r}")
    return reduction


def _check_pair(a: Tensor, b: Tensor, min_rows: int = 1) -> int:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("embedding batches must be 2-d (rows, dim)")
    if a.data.shape != b.data.shape:
        raise ValueError(f"embedding batches must share a shape, got {a.data.shape} vs {b.data.shape}")
    m = a.data.shape[0]
    if m < min_rows:
        raise ValueError(f"need at least {min_rows} rows, got {m}")
    return m


def gibbs_matrix(z1: Tensor, z2: Tensor, tau: float) -> Tensor:
    """Column-stochastic similarity distribution between two embedding batches.

    Entry (i, j) = exp(<z1_i, z2_j>/tau) / sum_t exp(<z1_t, z2_j>/tau);
    every column sums to one.
    """
    tau = _check_tau(tau)
    _check_pair(z1, z2)
    scores = mul(matmul(z1, transpose(z2)), 1.0 / tau)
    return softmax(scores, axis=0)


def info_nce(u: Tensor, v: Tensor, tau: float, reduction: str = "sum") -> Tensor:
    """Contrastive loss with (u_i, v_i) as positives and in-batch negatives.

    -sum_i log [ exp(<u_i, v_i>/tau) / sum_t exp(<u_t, v_i>/tau) ]
    """
    tau = _check_tau(tau)
    _check_reduction(reduction)
    m = _check_pair(u, v, min_rows=2)
    scores = mul(matmul(u, transpose(v)), 1.0 / tau)
    log_p = log_softmax(scores, axis=0)
    diag = Tensor(np.eye(m))
    total = mul(tsum(mul(log_p, diag)), -1.0)
    return mul(total, 1.0 / m) if reduction == "mean" else total


def cmd_loss(z_teacher: Tensor, z_student: Tensor, tau: float, reduction: str = "sum") -> Tensor:
    """Distillation loss: cross-entropy from the teacher's batch similarity
    distribution to the student's.

    -sum_{i,j} P_T[i, j] * log P_S[i, j], where P_T and P_S are the
    column-stochastic similarity distributions of each batch with itself.
    The teacher side is treated as a constant: gradients flow only through
    ``z_student``.  ``reduction="mean"`` averages over the m anchor columns.
    """
    tau = _check_tau(tau)
    _check_reduction(reduction)
    m = _check_pair(z_teacher, z_student)
    p_teacher = Tensor(_np_gibbs(z_teacher.data, z_teacher.data, tau))
    scores = mul(matmul(z_student, transpose(z_student)), 1.0 / tau)
    log_p_student = log_softmax(scores, axis=0)
    total = mul(tsum(mul(p_teacher, log_p_student)), -1.0)
    return mul(total, 1.0 / m) if reduction == "mean" else total


def cmc_loss(
    z_a: Tensor,
    z_b: Tensor,
    tau: float,
    reduction: str = "sum",
    freeze_first: bool = False,
) -> Tensor:
    """Symmetric paired contrastive loss across two embedding batches.

    -sum_i [ log softmax_t(<z^a_t, z^b_i>/tau)_i + log softmax_t(<z^b_t, z^a_i>/tau)_i ]

    Its value is symmetric in the two arguments.  With ``freeze_first`` the
    first batch is detached so gradients reach only the second (the frozen
    teacher setting); otherwise gradients flow through both.
    """
    a = z_a.detach() if freeze_first else z_a
    one = info_nce(a, z_b, tau, reduction)
    two = info_nce(z_b, a, tau, reduction)
    return one + two


def interpolated_loss(
    alpha: float,
    z_a: Tensor,
    z_b: Tensor,
    tau: float,
    reduction: str = "sum",
    freeze_first: bool = False,
) -> Tensor:
    """Exact convex combination alpha * paired-contrastive + (1 - alpha) * distillation.

    The endpoints reproduce the constituent losses bit-for-bit.
    """
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    cmc = cmc_loss(z_a, z_b, tau, reduction, freeze_first=freeze_first)
    cmd = cmd_loss(z_a, z_b, tau, reduction)
    return mul(cmc, alpha) + mul(cmd, 1.0 - alpha)


def ce_loss(logits: Tensor, labels: np.ndarray, reduction: str = "mean") -> Tensor:
    """Mean negative log-softmax of the true class."""
    _check_reduction(reduction)
    labels = np.asarray(labels)
    if logits.data.ndim != 2:
        raise ValueError("logits must be 2-d (batch, classes)")
    n, k = logits.data.shape
    if labels.shape != (n,):
        raise ValueError(f"labels must have shape ({n},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    log_p = log_softmax(logits, axis=1)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    total = mul(tsum(mul(log_p, Tensor(onehot))), -1.0)
    return mul(total, 1.0 / n) if reduction == "mean" else total


def l2_align_loss(z_a: Tensor, z_b: Tensor) -> Tensor:
    """Mean squared Euclidean distance between paired rows (feature-matching baseline)."""
    _check_pair(z_a, z_b)
    d = z_a - z_b
    return tmean(tsum(mul(d, d), axis=1))


def stats_align_loss(z_a: Tensor, z_b: Tensor) -> Tensor:
    """Squared distance between batch feature statistics (statistics-matching baseline).

    ||mean(z_a) - mean(z_b)||^2 + ||var(z_a) - var(z_b)||^2, with sample
    variance (ddof=1) over the batch axis, hence the batch >= 2 requirement.
    The row counts of the two batches may differ.
    """
    for z in (z_a, z_b):
        if z.data.ndim != 2:
            raise ValueError("embedding batches must be 2-d (rows, dim)")
        if z.data.shape[0] < 2:
            raise ValueError(f"batch size must be >= 2 for a variance, got {z.data.shape[0]}")
    if z_a.data.shape[1] != z_b.data.shape[1]:
        raise ValueError(
            f"embedding dims must match, got {z_a.data.shape[1]} vs {z_b.data.shape[1]}"
        )

    def _moments(z: Tensor) -> tuple[Tensor, Tensor]:
        m = z.data.shape[0]
        mean = tmean(z, axis=0, keepdims=True)
        centered = z - mean
        var = mul(tsum(mul(centered, centered), axis=0), 1.0 / (m - 1))
        return mean, var

    mean_a, var_a = _moments(z_a)
    mean_b, var_b = _moments(z_b)
    dm = mean_a - mean_b
    dv = var_a - var_b
    return tsum(mul(dm, dm)) + tsum(mul(dv, dv))


def _np_gibbs(z1: np.ndarray, z2: np.ndarray, tau: float) -> np.ndarray:
    """Column-stochastic similarity distribution on plain arrays (no graph)."""
    scores = (z1 @ z2.T) / tau
    scores -= scores.max(axis=0, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=0, keepdims=True)
