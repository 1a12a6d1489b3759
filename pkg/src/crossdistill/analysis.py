"""Diagnostics relating the modality gap to transfer quality.

``estimate_tv`` measures the distance between two encoders' batch
similarity distributions.  The exact population quantity is not computable,
so this is a restricted, batch-support estimate: sample mini-batches of
paired inputs, form each side's column-stochastic similarity matrix, take
half the L1 difference per column, and average over columns and batches.
The result always lies in [0, 1].

``estimate_kappa`` turns the informativeness ratio into an empirical
diagnostic: the worst-case classification loss of a reference probe on the
evaluated encoder's features, divided by the average two-sample
distillation loss against a reference encoder.  Both references are
stand-ins (a self-supervised target encoder and a linear probe trained on
it), and the max runs over a finite sample, so the estimate is a lower
bound of the underlying constant.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping, NamedTuple

import numpy as np

from .data import DatasetBundle
from .losses import _np_gibbs
from .models import EncoderParams, HeadParams, encode, forward_head
from .tensor import Tensor


def tv_between_gibbs(p_a: np.ndarray, p_b: np.ndarray) -> float:
    """Mean over columns of half the L1 distance between two stochastic matrices."""
    if p_a.shape != p_b.shape:
        raise ValueError(f"matrices must share a shape, got {p_a.shape} vs {p_b.shape}")
    return float(0.5 * np.abs(p_a - p_b).sum(axis=0).mean())


def tv_between_sides(
    enc_a: EncoderParams,
    xs_a: np.ndarray,
    enc_b: EncoderParams,
    xs_b: np.ndarray,
    tau: float,
    batch_size: int = 64,
    n_batches: int = 50,
    seed: int = 0,
) -> float:
    """Batch-averaged similarity-distribution distance between two (encoder, data) sides.

    Both sides index the same sampled rows, so the comparison is over the
    same underlying pairs.  Symmetric in the two sides; satisfies the
    triangle inequality across sides sharing the batch sampling.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if batch_size < 2:
        raise ValueError(f"batch_size must be >= 2, got {batch_size}")
    n = xs_a.shape[0]
    if xs_b.shape[0] != n:
        raise ValueError("both sides must supply the same number of rows")
    batch_size = min(batch_size, n)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7D15]))
    total = 0.0
    for _ in range(n_batches):
        idx = rng.choice(n, size=batch_size, replace=False)
        za = encode(enc_a, xs_a[idx])
        zb = encode(enc_b, xs_b[idx])
        total += tv_between_gibbs(_np_gibbs(za, za, tau), _np_gibbs(zb, zb, tau))
    return total / n_batches


def estimate_tv(
    enc_a: EncoderParams,
    enc_b: EncoderParams,
    paired: DatasetBundle,
    tau: float,
    batch_size: int = 64,
    n_batches: int = 50,
    seed: int = 0,
) -> float:
    """Similarity-distribution distance between the two modality encoders,
    evaluated on the paired split (``enc_a`` reads the source rows, ``enc_b``
    the target rows of the same pairs)."""
    return tv_between_sides(
        enc_a, paired.paired_xa, enc_b, paired.paired_xb, tau, batch_size, n_batches, seed
    )


class KappaEstimate(NamedTuple):
    value: float
    floored: bool  # True when some denominator hit the 1e-9 floor


def _log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def pairwise_cmd(z_phi: np.ndarray, z_ref: np.ndarray, tau: float) -> float:
    """Distillation cross-entropy on a two-element batch (sum over all four cells)."""
    p_ref = _np_gibbs(z_ref, z_ref, tau)
    scores = (z_phi @ z_phi.T) / tau
    scores -= scores.max(axis=0, keepdims=True)
    log_p = scores - np.log(np.exp(scores).sum(axis=0, keepdims=True))
    return float(-(p_ref * log_p).sum())


def estimate_kappa(
    phi: EncoderParams,
    phi_star: EncoderParams,
    psi_star: HeadParams,
    x: np.ndarray,
    y: np.ndarray,
    tau: float,
    seed: int = 0,
    max_points: int = 512,
    n_ref: int = 64,
    floor: float = 1e-9,
) -> KappaEstimate:
    """Empirical informativeness ratio of ``phi`` against reference models.

    kappa = max over sampled x of
        CE(psi_star(phi(x)), y) / mean over sampled x' of CMD(phi, phi_star, (x, x'))

    where the two-sample CMD uses the batch {x, x'}.  Denominators are
    floored at ``floor``; ``floored`` reports whether the floor fired.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    n = x.shape[0]
    if n == 0:
        raise ValueError("need at least one labeled sample")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xCAFA]))
    points = rng.choice(n, size=min(max_points, n), replace=False)
    refs = rng.choice(n, size=min(n_ref, n), replace=False)

    z_phi = encode(phi, x[points])
    z_star = encode(phi_star, x[points])
    zr_phi = encode(phi, x[refs])
    zr_star = encode(phi_star, x[refs])

    logits = forward_head(psi_star, Tensor(z_phi)).data
    log_p = _log_softmax_rows(logits)
    ce = -log_p[np.arange(points.size), y[points]]

    best = 0.0
    floored = False
    for i in range(points.size):
        den = 0.0
        for j in range(refs.size):
            den += pairwise_cmd(
                np.stack([z_phi[i], zr_phi[j]]),
                np.stack([z_star[i], zr_star[j]]),
                tau,
            )
        den /= refs.size
        if den < floor:
            den = floor
            floored = True
        best = max(best, ce[i] / den)
    return KappaEstimate(value=best, floored=floored)


def compute_deltas(results: Mapping[str, float]) -> tuple[float, float]:
    """Improvement of distillation over its reference points.

    ``results`` maps method keys to accuracies and must contain
    ``cmd_le``, ``ssl_le``, ``cmd_ft`` and ``sup_ft``.  Returns
    (linear-eval delta, fine-tune delta).
    """
    required = ("cmd_le", "ssl_le", "cmd_ft", "sup_ft")
    missing = [k for k in required if k not in results]
    if missing:
        raise KeyError(f"missing method accuracies: {missing}")
    le_delta = results["cmd_le"] - results["ssl_le"]
    ft_delta = results["cmd_ft"] - results["sup_ft"]
    return le_delta, ft_delta


@dataclass
class DiagnosticsReport:
    """One experiment's diagnostic numbers, serializable as a CSV/JSON row."""

    d_tv_hat: float
    kappa_hat: float
    kappa_floored: bool
    le_delta: float | None
    ft_delta: float | None
    batch_size: int
    n_batches: int
    tau: float
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


# Reference scale for the estimator on real modality pairs (reported, not
# reproduced here): image-sketch ~0.04, image-depth ~0.06, video-audio ~0.10.
REFERENCE_TV_SCALE = {"image-sketch": 0.04, "image-depth": 0.06, "video-audio": 0.10}
