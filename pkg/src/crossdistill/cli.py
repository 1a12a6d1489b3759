"""Batch command-line front end.

Subcommands cover dataset generation, the three training stages, the
diagnostics, the four benchmark sweeps, and CSV aggregation.  Exit codes
are a stable contract: 0 success, 1 runtime divergence (including sweeps
with failed cells), 2 configuration or input errors.

The output directory comes from the config file's ``out_dir`` key and can
be overridden by the ``CROSSDISTILL_OUT`` environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from .analysis import estimate_kappa, estimate_tv
from .checkpoint import load_encoder, load_head, save_encoder, save_head
from .config import ConfigError, ExperimentConfig, load_config
from .container import ContainerError
from .data import generate, load_bundle, save_bundle
from .optim import DivergenceError
from .pipeline import evaluate_target, distill, pretrain_source, top1_accuracy
from .models import encode, forward_head
from .reporting import ReportError, write_report
from .sweeps import append_row_csv, make_row, run_sweep
from .tensor import Tensor

EXIT_OK = 0
EXIT_DIVERGED = 1
EXIT_CONFIG = 2


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = os.environ.get("CROSSDISTILL_OUT", cfg.out_dir)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _runs_csv(cfg: ExperimentConfig, args) -> Path:
    return Path(args.csv) if args.csv else _out_dir(cfg) / "runs.csv"


def _cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    bundle = generate(cfg.data)
    save_bundle(bundle, args.out)
    d = cfg.data
    print(
        f"wrote {args.out}: source={d.n_source} paired={d.n_paired} labeled={d.n_labeled} "
        f"test={d.n_test} gap={d.gap} seed={d.seed}"
    )
    return EXIT_OK


def _cmd_pretrain(args) -> int:
    cfg = load_config(args.config)
    bundle = load_bundle(args.data)
    t0 = time.perf_counter()
    enc, curve = pretrain_source(bundle.source_x, replace(cfg.pretrain, seed=args.seed if args.seed is not None else cfg.data.seed))
    wall = time.perf_counter() - t0
    save_encoder(args.out, enc)
    append_row_csv(_runs_csv(cfg, args), make_row("stage", "pretrain", "infonce", "-", cfg.data.seed,
                                                  eps_ab=curve[-1] if curve else None))
    print(f"pretrained source encoder in {wall:.1f}s; final loss {curve[-1]:.4f}" if curve
          else "pretrained source encoder (0 epochs: initialization returned)")
    return EXIT_OK


def _cmd_distill(args) -> int:
    cfg = load_config(args.config)
    bundle = load_bundle(args.data)
    teacher = load_encoder(args.teacher)
    dcfg = replace(
        cfg.distill,
        loss_kind=args.loss or cfg.distill.loss_kind,
        alpha=cfg.distill.alpha if args.alpha is None else args.alpha,
        seed=args.seed if args.seed is not None else cfg.data.seed,
    )
    t0 = time.perf_counter()
    student, curve = distill(teacher, bundle, dcfg)
    wall = time.perf_counter() - t0
    save_encoder(args.out, student)
    append_row_csv(_runs_csv(cfg, args), make_row("stage", f"distill:{dcfg.loss_kind}", dcfg.loss_kind, "-",
                                                  dcfg.seed, eps_ab=curve[-1] if curve else None))
    print(f"distilled ({dcfg.loss_kind}) in {wall:.1f}s; final loss {curve[-1]:.4f}" if curve
          else "distilled (0 epochs)")
    return EXIT_OK


def _cmd_finetune(args) -> int:
    cfg = load_config(args.config)
    bundle = load_bundle(args.data)
    encoder = load_encoder(args.encoder)
    fcfg = replace(cfg.finetune, eval_mode=args.mode or cfg.finetune.eval_mode,
                   seed=args.seed if args.seed is not None else cfg.data.seed)
    t0 = time.perf_counter()
    enc_out, head, acc, curve = evaluate_target(encoder, bundle, fcfg)
    wall = time.perf_counter() - t0
    save_head(args.out_head, head)
    if fcfg.eval_mode == "ft":
        if not args.out_encoder:
            raise ConfigError("fine-tuning mode needs --out-encoder for the tuned encoder")
        save_encoder(args.out_encoder, enc_out)
    append_row_csv(_runs_csv(cfg, args), make_row("stage", "finetune", "encoder", fcfg.eval_mode,
                                                  fcfg.seed, accuracy=acc,
                                                  eps_b=curve[-1] if curve else None))
    print(f"{fcfg.eval_mode} accuracy {acc:.2f}% in {wall:.1f}s")
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = load_config(args.config)
    bundle = load_bundle(args.data)
    encoder = load_encoder(args.encoder)
    head = load_head(args.head)
    logits = forward_head(head, Tensor(encode(encoder, bundle.test_x))).data
    acc = top1_accuracy(logits, bundle.test_y)
    append_row_csv(_runs_csv(cfg, args), make_row("stage", "eval", "encoder", "-", cfg.data.seed, accuracy=acc))
    print(f"test accuracy {acc:.2f}%")
    return EXIT_OK


def _cmd_tv(args) -> int:
    cfg = load_config(args.config)
    bundle = load_bundle(args.data)
    enc_a = load_encoder(args.enc_a)
    enc_b = load_encoder(args.enc_b)
    value = estimate_tv(enc_a, enc_b, bundle, cfg.distill.tau,
                        cfg.tv_batch_size, cfg.tv_n_batches, seed=cfg.data.seed)
    append_row_csv(_runs_csv(cfg, args), make_row("stage", "tv", "tv", "-", cfg.data.seed, d_tv_hat=value))
    print(f"{value:.6f}")
    return EXIT_OK


def _cmd_kappa(args) -> int:
    cfg = load_config(args.config)
    bundle = load_bundle(args.data)
    phi = load_encoder(args.encoder)
    phi_star = load_encoder(args.ref_encoder)
    psi_star = load_head(args.ref_head)
    est = estimate_kappa(phi, phi_star, psi_star, bundle.labeled_x, bundle.labeled_y,
                         cfg.distill.tau, seed=cfg.data.seed,
                         max_points=cfg.kappa_max_points, n_ref=cfg.kappa_n_ref)
    append_row_csv(_runs_csv(cfg, args), make_row("stage", "kappa", "kappa", "-", cfg.data.seed,
                                                  accuracy=None, d_tv_hat=None, eps_ab=est.value))
    flag = " (denominator floored; treat as undefined)" if est.floored else ""
    print(f"{est.value:.6f}{flag}")
    return EXIT_OK


def _cmd_sweep(name: str, args) -> int:
    cfg = load_config(args.config)
    result = run_sweep(
        name,
        cfg,
        seeds=args.seeds,
        out_dir=args.out or _out_dir(cfg),
        teacher_cache_dir=args.teacher_cache,
        plot=not args.no_plot,
        workers=args.workers,
    )
    print(f"sweep-{name}: {len(result.rows)} rows -> {result.csv_path} ({result.n_failed} failed)")
    return EXIT_DIVERGED if result.n_failed else EXIT_OK


def _cmd_report(args) -> int:
    summary = write_report(args.inp, args.out)
    print(f"report written to {args.out} ({summary['n_rows']} input rows)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossdistill",
        description="cross-modality contrastive distillation workbench (synthetic, CPU-scale)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", required=True, help="experiment config file")

    def add_stage_common(p):
        add_config(p)
        p.add_argument("--data", required=True, help="dataset container file")
        p.add_argument("--csv", default=None, help="CSV to append the stage row to")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")

    p = sub.add_parser("gen-data", help="generate a dataset container")
    add_config(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("pretrain", help="contrastive pretraining on the source modality")
    add_stage_common(p)
    p.add_argument("--out", required=True, help="teacher checkpoint to write")
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("distill", help="cross-modality distillation into a student encoder")
    add_stage_common(p)
    p.add_argument("--teacher", required=True)
    p.add_argument("--out", required=True, help="student checkpoint to write")
    p.add_argument("--loss", choices=["cmd", "cmc", "interp", "l2", "stats"], default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.set_defaults(func=_cmd_distill)

    p = sub.add_parser("finetune", help="supervised target fit: linear eval or fine-tune")
    add_stage_common(p)
    p.add_argument("--encoder", required=True)
    p.add_argument("--mode", choices=["le", "ft"], default=None)
    p.add_argument("--out-head", required=True)
    p.add_argument("--out-encoder", default=None, help="tuned encoder (required for --mode ft)")
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("eval", help="score an encoder+head pair on the test split")
    add_stage_common(p)
    p.add_argument("--encoder", required=True)
    p.add_argument("--head", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("tv", help="similarity-distribution distance between two encoders")
    add_stage_common(p)
    p.add_argument("--enc-a", required=True)
    p.add_argument("--enc-b", required=True)
    p.set_defaults(func=_cmd_tv)

    p = sub.add_parser("kappa", help="informativeness ratio of an encoder vs reference models")
    add_stage_common(p)
    p.add_argument("--encoder", required=True)
    p.add_argument("--ref-encoder", required=True)
    p.add_argument("--ref-head", required=True)
    p.set_defaults(func=_cmd_kappa)

    for name in ("gap", "paired", "fewshot", "alpha"):
        p = sub.add_parser(f"sweep-{name}", help=f"grid sweep over the {name} protocol")
        add_config(p)
        p.add_argument("--seeds", type=int, default=None, help="number of seeds (default from config)")
        p.add_argument("--out", default=None, help="output directory (default from config)")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--teacher-cache", default=None, help="directory for reusable teacher checkpoints")
        p.add_argument("--no-plot", action="store_true")
        p.set_defaults(func=lambda args, _n=name: _cmd_sweep(_n, args))

    p = sub.add_parser("report", help="aggregate a sweep CSV into tables and plots")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except DivergenceError as err:
        print(f"error: training diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, ContainerError, ReportError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
