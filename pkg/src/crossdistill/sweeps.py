"""Grid sweeps mirroring the benchmark protocols, emitting one tidy CSV each.

Row schema (shared with the stage commands and the report aggregator):

    sweep_var, value, method, eval_mode, seed, accuracy, d_tv_hat,
    eps_ab, eps_b, wall_s

Rows are ordered by (grid position, seed, method), never by completion
time, so worker-pool execution cannot change output bytes.  The ``wall_s``
column is left empty in files: measured wall times go to stdout, keeping
every emitted artifact byte-reproducible.  Failed cells (training
divergence) carry ``nan`` accuracies; the sweep continues and reports the
failure count.
"""

from __future__ import annotations

import csv
import hashlib
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .analysis import estimate_tv
from .checkpoint import encoder_bytes, load_encoder, save_encoder
from .config import ExperimentConfig
from .container import config_hash
from .data import DatasetBundle, generate, subsample_labels, subsample_paired
from .models import EncoderParams
from .optim import DivergenceError
from .pipeline import (
    StageConfigs,
    distill,
    evaluate_target,
    run_baseline,
    train_contrastive,
)
from .plotting import write_line_plot

ROW_FIELDS = (
    "sweep_var", "value", "method", "eval_mode", "seed",
    "accuracy", "d_tv_hat", "eps_ab", "eps_b", "wall_s",
)

SWEEP_NAMES = ("gap", "paired", "fewshot", "alpha")


@dataclass
class SweepResult:
    rows: list[dict]
    csv_path: Path | None
    n_failed: int


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows_csv(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ROW_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row.get(k)) for k in ROW_FIELDS})


def append_row_csv(path: str | Path, row: dict) -> None:
    """Append one row, creating the file with a header when absent."""
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ROW_FIELDS)
        if new:
            writer.writeheader()
        writer.writerow({k: _cell(row.get(k)) for k in ROW_FIELDS})


def make_row(
    sweep_var: str,
    value,
    method: str,
    eval_mode: str,
    seed: int,
    accuracy: float | None = None,
    d_tv_hat: float | None = None,
    eps_ab: float | None = None,
    eps_b: float | None = None,
) -> dict:
    return {
        "sweep_var": sweep_var,
        "value": value,
        "method": method,
        "eval_mode": eval_mode,
        "seed": seed,
        "accuracy": accuracy,
        "d_tv_hat": d_tv_hat,
        "eps_ab": eps_ab,
        "eps_b": eps_b,
        "wall_s": None,
    }


class TeacherCache:
    """Deduplicates source-encoder training within and across sweep runs.

    The key hashes the exact source array bytes plus the pretraining
    hyperparameters, so a cache hit returns precisely what retraining
    would have produced.  ``cache_dir`` (optional) persists teachers as
    checkpoints for reuse across processes and invocations.
    """

    def __init__(self, cache_dir: str | Path | None = None):
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._memory: dict[str, EncoderParams] = {}

    def key(self, bundle: DatasetBundle, cfg) -> str:
        src = hashlib.sha256(np.ascontiguousarray(bundle.source_x).tobytes()).hexdigest()
        meta = config_hash({"lr": cfg.lr, "betas": list(cfg.betas), "epochs": cfg.epochs,
                            "batch_size": cfg.batch_size, "milestones": list(cfg.milestones),
                            "lr_decay": cfg.lr_decay, "tau": cfg.tau, "widths": list(cfg.widths),
                            "activation": cfg.activation, "noise_std": cfg.noise_std,
                            "mask_prob": cfg.mask_prob, "seed": cfg.seed})
        return hashlib.sha256((src + meta).encode()).hexdigest()[:24]

    def get(self, bundle: DatasetBundle, cfg) -> EncoderParams:
        key = self.key(bundle, cfg)
        if key in self._memory:
            return self._memory[key]
        if self.cache_dir:
            path = self.cache_dir / f"teacher_{key}.ckpt"
            if path.exists():
                enc = load_encoder(path)
                self._memory[key] = enc
                return enc
        t0 = time.perf_counter()
        enc, _ = train_contrastive(bundle.source_x, cfg)
        print(f"[teacher] trained source encoder (seed={cfg.seed}) in {time.perf_counter() - t0:.1f}s", flush=True)
        self._memory[key] = enc
        if self.cache_dir:
            save_encoder(self.cache_dir / f"teacher_{key}.ckpt", enc)
        return enc


def _seed_list(cfg: ExperimentConfig, seeds: int) -> list[int]:
    return [cfg.data.seed + i for i in range(seeds)]


def _nan_rows(sweep_var, value, seed, specs) -> list[dict]:
    return [
        make_row(sweep_var, value, method, mode, seed, accuracy=float("nan"))
        for method, mode in specs
    ]


# -- per-seed workers (module level so a process pool can pickle them) -------


def _gap_seed_rows(cfg: ExperimentConfig, seed: int, cache_dir) -> list[dict]:
    cache = TeacherCache(cache_dir)
    stages = cfg.stages().with_seed(seed)
    rows: list[dict] = []
    source_digest = None
    for gamma in cfg.sweep.gammas:
        bundle = generate(replace(cfg.data, gap=gamma, seed=seed))
        digest = hashlib.sha256(bundle.source_x.tobytes()).hexdigest()
        if source_digest is None:
            source_digest = digest
        elif digest != source_digest:
            raise AssertionError("source split unexpectedly depends on the gap value")
        teacher = cache.get(bundle, stages.pretrain)
        t0 = time.perf_counter()
        try:
            ssl_cfg = replace(
                stages.distill,
                loss_kind="infonce",
                tau=stages.pretrain.tau,
                noise_std=stages.pretrain.noise_std,
                mask_prob=stages.pretrain.mask_prob,
            )
            ssl_enc, ssl_curve = train_contrastive(bundle.paired_xb, ssl_cfg)
            _, _, acc_ssl, ssl_fcurve = evaluate_target(ssl_enc, bundle, replace(stages.finetune, eval_mode="le"))
            d_tv = estimate_tv(
                teacher, ssl_enc, bundle, stages.distill.tau,
                cfg.tv_batch_size, cfg.tv_n_batches, seed=seed,
            )
            student, dcurve = distill(teacher, bundle, replace(stages.distill, loss_kind="cmd"))
            _, _, acc_cmd, fcurve = evaluate_target(student, bundle, replace(stages.finetune, eval_mode="le"))
        except DivergenceError as err:
            print(f"[sweep-gap] gamma={gamma} seed={seed} diverged: {err}", flush=True)
            rows.extend(_nan_rows("gamma", gamma, seed, [("cmd", "le"), ("ssl", "le")]))
            continue
        rows.append(make_row("gamma", gamma, "cmd", "le", seed, acc_cmd, d_tv, dcurve[-1], fcurve[-1]))
        rows.append(make_row("gamma", gamma, "ssl", "le", seed, acc_ssl, d_tv, ssl_curve[-1], ssl_fcurve[-1]))
        print(
            f"[sweep-gap] gamma={gamma} seed={seed} cmd+le={acc_cmd:.2f} ssl+le={acc_ssl:.2f} "
            f"d_tv={d_tv:.4f} ({time.perf_counter() - t0:.1f}s)",
            flush=True,
        )
    return rows


def _paired_seed_rows(cfg: ExperimentConfig, seed: int, cache_dir) -> list[dict]:
    cache = TeacherCache(cache_dir)
    stages = cfg.stages().with_seed(seed)
    method = cfg.sweep.paired_method
    bundle = generate(replace(cfg.data, seed=seed))
    teacher = cache.get(bundle, stages.pretrain)
    rows: list[dict] = []
    for ratio in cfg.sweep.ratios:
        t0 = time.perf_counter()
        try:
            sub = subsample_paired(bundle, ratio, seed)
            student, dcurve = distill(teacher, sub, replace(stages.distill, loss_kind=method))
            _, _, acc, fcurve = evaluate_target(student, sub, stages.finetune)
        except DivergenceError as err:
            print(f"[sweep-paired] ratio={ratio} seed={seed} diverged: {err}", flush=True)
            rows.extend(_nan_rows("paired_ratio", ratio, seed, [(method, stages.finetune.eval_mode)]))
            continue
        rows.append(make_row("paired_ratio", ratio, method, stages.finetune.eval_mode, seed,
                             acc, None, dcurve[-1], fcurve[-1]))
        print(f"[sweep-paired] ratio={ratio} seed={seed} acc={acc:.2f} ({time.perf_counter() - t0:.1f}s)", flush=True)
    return rows


def _fewshot_seed_rows(cfg: ExperimentConfig, seed: int, cache_dir) -> list[dict]:
    cache = TeacherCache(cache_dir)
    stages = cfg.stages().with_seed(seed)
    method = cfg.sweep.fewshot_method
    bundle = generate(replace(cfg.data, seed=seed))
    teacher = cache.get(bundle, stages.pretrain)
    rows: list[dict] = []
    try:
        student, dcurve = distill(teacher, bundle, replace(stages.distill, loss_kind=method))
    except DivergenceError as err:
        print(f"[sweep-fewshot] seed={seed} distillation diverged: {err}", flush=True)
        specs = [(method, "le"), (method, "ft"), ("sup", "ft")]
        return [r for n in cfg.sweep.shots for r in _nan_rows("n_per_class", n, seed, specs)]
    for n in cfg.sweep.shots:
        t0 = time.perf_counter()
        try:
            sub = subsample_labels(bundle, n, seed)
            _, _, acc_le, le_curve = evaluate_target(student, sub, replace(stages.finetune, eval_mode="le"))
            _, _, acc_ft, ft_curve = evaluate_target(student, sub, replace(stages.finetune, eval_mode="ft"))
            sup = run_baseline("sup_ft", sub, stages)
        except DivergenceError as err:
            print(f"[sweep-fewshot] n={n} seed={seed} diverged: {err}", flush=True)
            rows.extend(_nan_rows("n_per_class", n, seed, [(method, "le"), (method, "ft"), ("sup", "ft")]))
            continue
        rows.append(make_row("n_per_class", n, method, "le", seed, acc_le, None, dcurve[-1], le_curve[-1]))
        rows.append(make_row("n_per_class", n, method, "ft", seed, acc_ft, None, dcurve[-1], ft_curve[-1]))
        rows.append(make_row("n_per_class", n, "sup", "ft", seed, sup.accuracy, None, None, sup.eps_b))
        print(
            f"[sweep-fewshot] n={n} seed={seed} ours_le={acc_le:.2f} ours_ft={acc_ft:.2f} "
            f"sup_ft={sup.accuracy:.2f} ({time.perf_counter() - t0:.1f}s)",
            flush=True,
        )
    return rows


def _alpha_seed_rows(cfg: ExperimentConfig, seed: int, cache_dir) -> list[dict]:
    cache = TeacherCache(cache_dir)
    stages = cfg.stages().with_seed(seed)
    bundle = generate(replace(cfg.data, seed=seed))
    teacher = cache.get(bundle, stages.pretrain)
    rows: list[dict] = []
    for alpha in cfg.sweep.alphas:
        t0 = time.perf_counter()
        try:
            student, dcurve = distill(
                teacher, bundle, replace(stages.distill, loss_kind="interp", alpha=alpha)
            )
            for mode in cfg.sweep.alpha_eval_modes:
                _, _, acc, fcurve = evaluate_target(student, bundle, replace(stages.finetune, eval_mode=mode))
                rows.append(make_row("alpha", alpha, "interp", mode, seed, acc, None, dcurve[-1], fcurve[-1]))
                print(f"[sweep-alpha] alpha={alpha} seed={seed} {mode} acc={acc:.2f} "
                      f"({time.perf_counter() - t0:.1f}s)", flush=True)
        except DivergenceError as err:
            print(f"[sweep-alpha] alpha={alpha} seed={seed} diverged: {err}", flush=True)
            rows.extend(_nan_rows("alpha", alpha, seed, [("interp", m) for m in cfg.sweep.alpha_eval_modes]))
    return rows


_SEED_WORKERS = {
    "gap": _gap_seed_rows,
    "paired": _paired_seed_rows,
    "fewshot": _fewshot_seed_rows,
    "alpha": _alpha_seed_rows,
}

_GRID_ATTR = {"gap": "gammas", "paired": "ratios", "fewshot": "shots", "alpha": "alphas"}


def run_sweep(
    name: str,
    cfg: ExperimentConfig,
    seeds: int | None = None,
    out_dir: str | Path | None = None,
    teacher_cache_dir: str | Path | None = None,
    plot: bool = True,
    workers: int = 1,
) -> SweepResult:
    """Run one sweep's full factorial and write ``<out_dir>/sweep_<name>.csv``.

    ``workers > 1`` farms seeds out to a process pool; the row order (grid
    position, then seed, then method) is fixed regardless.
    """
    if name not in _SEED_WORKERS:
        raise ValueError(f"unknown sweep {name!r}; expected one of {SWEEP_NAMES}")
    seeds = cfg.sweep.seeds if seeds is None else seeds
    seed_values = _seed_list(cfg, seeds)
    worker = _SEED_WORKERS[name]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(worker, [cfg] * len(seed_values), seed_values,
                                   [teacher_cache_dir] * len(seed_values)))
    else:
        chunks = [worker(cfg, s, teacher_cache_dir) for s in seed_values]

    grid = [_cell(v) for v in getattr(cfg.sweep, _GRID_ATTR[name])]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (grid.index(_cell(r["value"])), r["seed"], r["method"], r["eval_mode"]))
    n_failed = sum(1 for r in rows if isinstance(r["accuracy"], float) and math.isnan(r["accuracy"]))

    csv_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"sweep_{name}.csv"
        write_rows_csv(csv_path, rows)
        if plot:
            _plot_sweep(out_dir / f"sweep_{name}.svg", name, rows)
    return SweepResult(rows=rows, csv_path=csv_path, n_failed=n_failed)


def _plot_sweep(path: Path, name: str, rows: list[dict]) -> None:
    series: dict[str, dict[float, list[float]]] = {}
    for row in rows:
        acc = row["accuracy"]
        if acc is None or (isinstance(acc, float) and math.isnan(acc)):
            continue
        label = f"{row['method']}+{row['eval_mode']}"
        series.setdefault(label, {}).setdefault(float(row["value"]), []).append(acc)
    mean_series = {
        label: [(x, sum(v) / len(v)) for x, v in sorted(by_x.items())]
        for label, by_x in series.items()
    }
    if not mean_series:
        return
    write_line_plot(
        path,
        mean_series,
        title=f"sweep-{name}: accuracy vs {name}",
        xlabel=_GRID_ATTR[name].rstrip("s") if name != "fewshot" else "labels per class",
        ylabel="top-1 accuracy (%)",
    )
