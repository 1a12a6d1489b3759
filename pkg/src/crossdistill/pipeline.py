"""The three-stage transfer procedure and the baseline methods.

Stage 1 pretrains a source-modality encoder contrastively on augmented
views.  Stage 2 distills it into a target-modality encoder over paired
batches, with the teacher held fixed.  Stage 3 fits a classifier on the
few labeled target samples, either as a linear probe on frozen features
("le") or by fine-tuning encoder and head jointly ("ft").

Every stage derives its own RNG streams from (seed, stage tag), so a run
is a pure function of (bundle, configs, seed).
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import DatasetBundle, augment
from .losses import (
    ce_loss,
    cmc_loss,
    cmd_loss,
    info_nce,
    interpolated_loss,
    l2_align_loss,
    stats_align_loss,
)
from .models import (
    EncoderParams,
    HeadParams,
    clone_encoder,
    encode,
    forward_encoder,
    forward_head,
    init_encoder,
    init_head,
)
from .optim import Adam, DivergenceError
from .tensor import Tensor

DISTILL_LOSSES = ("cmd", "cmc", "interp", "l2", "stats")
BASELINES = ("sup_ft", "ssl_le", "ssl_ft", "pressl_le", "pressl_ft", "cmst", "stats")

_STAGE_PRETRAIN = 0x51
_STAGE_DISTILL = 0x52
_STAGE_FINETUNE = 0x53


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    epochs: int = 100
    batch_size: int = 64
    milestones: tuple[int, ...] = (60, 70, 80)
    lr_decay: float = 0.1
    tau: float = 0.5
    alpha: float = 1.0
    loss_kind: str = "cmd"
    eval_mode: str = "le"
    widths: tuple[int, ...] = (64, 64, 16)
    activation: str = "relu"
    augment_pairs: bool = False
    noise_std: float = 0.1
    mask_prob: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 0 or self.batch_size <= 0:
            raise ValueError("lr and batch_size must be positive, epochs nonnegative")
        if list(self.milestones) != sorted(self.milestones):
            raise ValueError("milestones must be sorted ascending")
        if self.eval_mode not in ("le", "ft"):
            raise ValueError(f"eval_mode must be 'le' or 'ft', got {self.eval_mode!r}")


@dataclass(frozen=True)
class StageConfigs:
    """Per-stage hyperparameters for a full run."""

    pretrain: TrainConfig = field(default_factory=TrainConfig)
    distill: TrainConfig = field(default_factory=TrainConfig)
    finetune: TrainConfig = field(default_factory=TrainConfig)

    def with_seed(self, seed: int) -> "StageConfigs":
        return StageConfigs(
            pretrain=replace(self.pretrain, seed=seed),
            distill=replace(self.distill, seed=seed),
            finetune=replace(self.finetune, seed=seed),
        )


@dataclass
class RunReport:
    """Outcome of one method run: config echo, achieved losses, accuracy, timing."""

    method: str
    eval_mode: str
    seed: int
    accuracy: float
    eps_ab: float | None          # final distillation-stage loss (mean reduction)
    eps_b: float | None           # final supervised-stage loss
    wall_s: float
    distill_curve: list[float] = field(default_factory=list)
    finetune_curve: list[float] = field(default_factory=list)
    config: dict = field(default_factory=dict)


def _stage_rngs(cfg: TrainConfig, stage: int) -> tuple[np.random.Generator, np.random.Generator]:
    ss = np.random.SeedSequence([cfg.seed, stage])
    init_ss, loop_ss = ss.spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(loop_ss)


def _check_loss_value(value: float, stage: str) -> float:
    if not np.isfinite(value):
        raise DivergenceError(f"{stage} loss became non-finite ({value})")
    return value


def train_contrastive(
    x: np.ndarray, cfg: TrainConfig, init: EncoderParams | None = None
) -> tuple[EncoderParams, list[float]]:
    """Contrastive training on one modality: positives are two stochastic
    views of the same row, negatives come from the rest of the batch."""
    x = np.asarray(x, dtype=np.float64)
    init_rng, loop_rng = _stage_rngs(cfg, _STAGE_PRETRAIN)
    params = clone_encoder(init) if init is not None else init_encoder(
        x.shape[1], cfg.widths, cfg.activation, init_rng
    )
    opt = Adam(params.parameters(), cfg.lr, cfg.betas, milestones=cfg.milestones, lr_decay=cfg.lr_decay)
    curve: list[float] = []
    n = x.shape[0]
    for epoch in range(cfg.epochs):
        order = loop_rng.permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if idx.size < 2:
                continue
            xb = x[idx]
            u = forward_encoder(params, Tensor(augment(xb, loop_rng, cfg.noise_std, cfg.mask_prob)))
            v = forward_encoder(params, Tensor(augment(xb, loop_rng, cfg.noise_std, cfg.mask_prob)))
            loss = info_nce(u, v, cfg.tau, "mean") + info_nce(v, u, cfg.tau, "mean")
            total += _check_loss_value(float(loss.data), "contrastive")
            batches += 1
            opt.zero_grad()
            loss.backward()
            opt.step(epoch)
        curve.append(total / batches)
    return params, curve


def pretrain_source(source_x: np.ndarray, cfg: TrainConfig) -> tuple[EncoderParams, list[float]]:
    """Stage 1: self-supervised encoder for the data-rich source modality."""
    return train_contrastive(source_x, cfg)


def _distill_batch_loss(kind: str, alpha: float, za: Tensor, zb: Tensor, tau: float) -> Tensor:
    if kind == "cmd":
        return cmd_loss(za, zb, tau, "mean")
    if kind == "cmc":
        return cmc_loss(za, zb, tau, "mean")
    if kind == "interp":
        return interpolated_loss(alpha, za, zb, tau, "mean")
    if kind == "l2":
        return l2_align_loss(za, zb)
    if kind == "stats":
        return stats_align_loss(za, zb)
    raise ValueError(f"unsupported distillation loss {kind!r}; expected one of {DISTILL_LOSSES}")


def distill(
    teacher: EncoderParams, bundle: DatasetBundle, cfg: TrainConfig
) -> tuple[EncoderParams, list[float]]:
    """Stage 2: fit a target-modality student to the frozen teacher over pairs.

    Teacher embeddings enter every loss as constants, so the teacher's
    parameters receive no updates and are bit-identical afterwards.
    """
    if cfg.loss_kind not in DISTILL_LOSSES:
        raise ValueError(f"unsupported distillation loss {cfg.loss_kind!r}; expected one of {DISTILL_LOSSES}")
    xa, xb = bundle.paired_xa, bundle.paired_xb
    init_rng, loop_rng = _stage_rngs(cfg, _STAGE_DISTILL)
    student = init_encoder(xb.shape[1], cfg.widths, cfg.activation, init_rng)
    opt = Adam(student.parameters(), cfg.lr, cfg.betas, milestones=cfg.milestones, lr_decay=cfg.lr_decay)
    curve: list[float] = []
    n = xa.shape[0]
    for epoch in range(cfg.epochs):
        order = loop_rng.permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if idx.size < 2:
                continue
            view_a, view_b = xa[idx], xb[idx]
            if cfg.augment_pairs:
                view_a = augment(view_a, loop_rng, cfg.noise_std, cfg.mask_prob)
                view_b = augment(view_b, loop_rng, cfg.noise_std, cfg.mask_prob)
            za = Tensor(encode(teacher, view_a))  # constant: no gradient to the teacher
            zb = forward_encoder(student, Tensor(view_b))
            loss = _distill_batch_loss(cfg.loss_kind, cfg.alpha, za, zb, cfg.tau)
            total += _check_loss_value(float(loss.data), "distillation")
            batches += 1
            opt.zero_grad()
            loss.backward()
            opt.step(epoch)
        curve.append(total / batches)
    return student, curve


def top1_accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Percent of rows whose arg-max logit matches the label (ties break to
    the lowest class index)."""
    pred = logits.argmax(axis=1)
    return float(100.0 * (pred == labels).mean())


def evaluate_target(
    encoder: EncoderParams, bundle: DatasetBundle, cfg: TrainConfig
) -> tuple[EncoderParams, HeadParams, float, list[float]]:
    """Stage 3: supervised fit on the labeled target split, scored on the test split.

    "le" trains only a linear head on frozen features and returns the input
    encoder object untouched; "ft" trains a copy of the encoder jointly with
    the head and returns the tuned copy.  Returns
    (encoder_out, head, test accuracy, per-epoch loss curve).
    """
    x, y = bundle.labeled_x, bundle.labeled_y
    k = bundle.n_classes
    counts = np.bincount(y, minlength=k)
    if counts.min() < 1:
        raise ValueError(f"every class needs at least one labeled sample; counts={counts.tolist()}")
    init_rng, loop_rng = _stage_rngs(cfg, _STAGE_FINETUNE)
    n = x.shape[0]
    curve: list[float] = []

    if cfg.eval_mode == "le":
        feats = encode(encoder, x)
        head = init_head(encoder.embed_dim, k, init_rng)
        opt = Adam(head.parameters(), cfg.lr, cfg.betas, milestones=cfg.milestones, lr_decay=cfg.lr_decay)
        for epoch in range(cfg.epochs):
            order = loop_rng.permutation(n)
            total, batches = 0.0, 0
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                loss = ce_loss(forward_head(head, Tensor(feats[idx])), y[idx])
                total += _check_loss_value(float(loss.data), "linear-eval")
                batches += 1
                opt.zero_grad()
                loss.backward()
                opt.step(epoch)
            curve.append(total / batches)
        test_logits = forward_head(head, Tensor(encode(encoder, bundle.test_x))).data
        return encoder, head, top1_accuracy(test_logits, bundle.test_y), curve

    tuned = clone_encoder(encoder)
    head = init_head(tuned.embed_dim, k, init_rng)
    opt = Adam(
        tuned.parameters() + head.parameters(),
        cfg.lr,
        cfg.betas,
        milestones=cfg.milestones,
        lr_decay=cfg.lr_decay,
    )
    for epoch in range(cfg.epochs):
        order = loop_rng.permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            z = forward_encoder(tuned, Tensor(x[idx]))
            loss = ce_loss(forward_head(head, z), y[idx])
            total += _check_loss_value(float(loss.data), "fine-tune")
            batches += 1
            opt.zero_grad()
            loss.backward()
            opt.step(epoch)
        curve.append(total / batches)
    test_logits = forward_head(head, Tensor(encode(tuned, bundle.test_x))).data
    return tuned, head, top1_accuracy(test_logits, bundle.test_y), curve


def run_distilled(
    loss_kind: str,
    bundle: DatasetBundle,
    cfgs: StageConfigs,
    teacher: EncoderParams,
    eval_mode: str | None = None,
    alpha: float | None = None,
) -> RunReport:
    """Distill with the given loss, then evaluate on the target task."""
    t0 = time.perf_counter()
    dcfg = replace(
        cfgs.distill,
        loss_kind=loss_kind,
        alpha=cfgs.distill.alpha if alpha is None else alpha,
    )
    fcfg = cfgs.finetune if eval_mode is None else replace(cfgs.finetune, eval_mode=eval_mode)
    student, dcurve = distill(teacher, bundle, dcfg)
    _, _, acc, fcurve = evaluate_target(student, bundle, fcfg)
    return RunReport(
        method=loss_kind,
        eval_mode=fcfg.eval_mode,
        seed=dcfg.seed,
        accuracy=acc,
        eps_ab=dcurve[-1] if dcurve else None,
        eps_b=fcurve[-1] if fcurve else None,
        wall_s=time.perf_counter() - t0,
        distill_curve=dcurve,
        finetune_curve=fcurve,
        config={"distill": asdict(dcfg), "finetune": asdict(fcfg)},
    )


def run_baseline(
    kind: str,
    bundle: DatasetBundle,
    cfgs: StageConfigs,
    teacher: EncoderParams | None = None,
) -> RunReport:
    """Reference methods sharing the stage-3 evaluation protocol.

    sup_ft           supervised encoder+head training on the labeled split
    ssl_le/ssl_ft    contrastive training on the target rows of the paired
                     split (pairing ignored), then le / ft
    pressl_le/_ft    same, but warm-started from the source encoder
                     (requires matching input dims)
    cmst             distill with the feature-distance loss, then evaluate
    stats            distill with the statistics-matching loss, then evaluate

    Target-side contrastive baselines reuse the distillation stage budget
    (epochs, lr, batch, tau) so every stage-2 alternative sees equal compute.
    """
    t0 = time.perf_counter()
    if kind not in BASELINES:
        raise ValueError(f"unknown baseline {kind!r}; expected one of {BASELINES}")

    if kind == "sup_ft":
        fcfg = replace(cfgs.finetune, eval_mode="ft")
        init_rng, _ = _stage_rngs(fcfg, _STAGE_PRETRAIN)
        enc = init_encoder(bundle.labeled_x.shape[1], fcfg.widths, fcfg.activation, init_rng)
        _, _, acc, fcurve = evaluate_target(enc, bundle, fcfg)
        return RunReport(
            method="sup",
            eval_mode="ft",
            seed=fcfg.seed,
            accuracy=acc,
            eps_ab=None,
            eps_b=fcurve[-1] if fcurve else None,
            wall_s=time.perf_counter() - t0,
            finetune_curve=fcurve,
            config={"finetune": asdict(fcfg)},
        )

    if kind in ("cmst", "stats"):
        if teacher is None:
            raise ValueError(f"baseline {kind!r} needs a pretrained source encoder")
        loss = "l2" if kind == "cmst" else "stats"
        report = run_distilled(loss, bundle, cfgs, teacher)
        report.method = kind
        report.wall_s = time.perf_counter() - t0
        return report

    # ssl / pressl variants: the contrastive recipe (temperature, view
    # augmentation) follows the pretraining stage, the compute budget
    # follows the distillation stage, so every stage-2 method is comparable
    eval_mode = "le" if kind.endswith("_le") else "ft"
    ssl_cfg = replace(
        cfgs.distill,
        loss_kind="infonce",
        tau=cfgs.pretrain.tau,
        noise_std=cfgs.pretrain.noise_std,
        mask_prob=cfgs.pretrain.mask_prob,
    )
    init = None
    if kind.startswith("pressl"):
        if teacher is None:
            raise ValueError("pressl needs the source encoder as initialization")
        if teacher.input_dim != bundle.paired_xb.shape[1]:
            raise ValueError(
                "pressl unavailable: source and target input dims differ "
                f"({teacher.input_dim} vs {bundle.paired_xb.shape[1]})"
            )
        init = teacher
    enc, dcurve = train_contrastive(bundle.paired_xb, ssl_cfg, init=init)
    fcfg = replace(cfgs.finetune, eval_mode=eval_mode)
    _, _, acc, fcurve = evaluate_target(enc, bundle, fcfg)
    return RunReport(
        method="pressl" if kind.startswith("pressl") else "ssl",
        eval_mode=eval_mode,
        seed=ssl_cfg.seed,
        accuracy=acc,
        eps_ab=dcurve[-1] if dcurve else None,
        eps_b=fcurve[-1] if fcurve else None,
        wall_s=time.perf_counter() - t0,
        distill_curve=dcurve,
        finetune_curve=fcurve,
        config={"ssl": asdict(ssl_cfg), "finetune": asdict(fcfg)},
    )
