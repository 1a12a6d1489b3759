"""Flat key-value experiment configuration files.

Grammar: one ``section.key = value`` per line; ``#`` starts a comment;
blank lines are ignored.  Every key must be known (typos are hard errors)
and may appear at most once.  Lists are comma-separated.  Example::

    out_dir = runs/demo
    data.gap = 0.1
    data.seed = 3
    pretrain.epochs = 40
    distill.loss = cmd
    finetune.mode = le
    sweep.gammas = 0, 0.2, 0.4, 0.6, 0.8
    sweep.seeds = 5

Unspecified keys keep the documented defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .data import GeneratorConfig
from .pipeline import StageConfigs, TrainConfig


class ConfigError(ValueError):
    """Unparseable, unknown, duplicate, or invalid configuration entry."""


@dataclass(frozen=True)
class SweepConfig:
    gammas: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8)
    ratios: tuple[float, ...] = (0.05, 0.2, 0.5, 1.0)
    shots: tuple[int, ...] = (1, 5, 10)
    alphas: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    seeds: int = 5
    paired_method: str = "cmd"
    fewshot_method: str = "cmc"
    alpha_eval_modes: tuple[str, ...] = ("le",)


@dataclass(frozen=True)
class ExperimentConfig:
    data: GeneratorConfig = field(default_factory=GeneratorConfig)
    pretrain: TrainConfig = field(default_factory=TrainConfig)
    distill: TrainConfig = field(default_factory=TrainConfig)
    finetune: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    tv_batch_size: int = 64
    tv_n_batches: int = 50
    kappa_max_points: int = 512
    kappa_n_ref: int = 64
    out_dir: str = "out"

    def stages(self) -> StageConfigs:
        return StageConfigs(pretrain=self.pretrain, distill=self.distill, finetune=self.finetune)


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(",")) if text.strip() else ()


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",")) if text.strip() else ()


def _parse_strs(text: str) -> tuple[str, ...]:
    return tuple(tok.strip() for tok in text.split(",")) if text.strip() else ()


_DATA_KEYS = {
    "n_classes": int, "latent_dim": int, "dim_a": int, "dim_b": int,
    "class_scale": float, "latent_std": float, "noise_std": float, "gap": float,
    "n_source": int, "n_paired": int, "n_labeled": int, "n_test": int, "seed": int,
}

_STAGE_KEYS = {
    "lr": float, "epochs": int, "batch_size": int, "tau": float, "alpha": float,
    "loss": str, "mode": str, "milestones": _parse_ints, "lr_decay": float,
    "beta1": float, "beta2": float, "widths": _parse_ints, "activation": str,
    "augment_pairs": _parse_bool, "noise_std": float, "mask_prob": float,
}
_STAGE_FIELD = {"loss": "loss_kind", "mode": "eval_mode"}

_SWEEP_KEYS = {
    "gammas": _parse_floats, "ratios": _parse_floats, "shots": _parse_ints,
    "alphas": _parse_floats, "seeds": int, "paired_method": str,
    "fewshot_method": str, "alpha_eval_modes": _parse_strs,
}

_TOP_KEYS = {
    "out_dir": str,
    "tv.batch_size": ("tv_batch_size", int),
    "tv.n_batches": ("tv_n_batches", int),
    "kappa.max_points": ("kappa_max_points", int),
    "kappa.n_ref": ("kappa_n_ref", int),
}


def _known_keys() -> dict:
    """Maps every legal config key to (target, field name, parser)."""
    keys: dict[str, tuple[str, str, object]] = {"out_dir": ("top", "out_dir", str)}
    for name, (attr, parser) in ((k, v) for k, v in _TOP_KEYS.items() if isinstance(v, tuple)):
        keys[name] = ("top", attr, parser)
    for name, parser in _DATA_KEYS.items():
        keys[f"data.{name}"] = ("data", name, parser)
    for stage in ("pretrain", "distill", "finetune"):
        for name, parser in _STAGE_KEYS.items():
            keys[f"{stage}.{name}"] = (stage, _STAGE_FIELD.get(name, name), parser)
    for name, parser in _SWEEP_KEYS.items():
        keys[f"sweep.{name}"] = ("sweep", name, parser)
    return keys


_SCHEMA = _known_keys()


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    overrides: dict[str, dict] = {"top": {}, "data": {}, "pretrain": {}, "distill": {}, "finetune": {}, "sweep": {}}
    betas: dict[str, dict[str, float]] = {"pretrain": {}, "distill": {}, "finetune": {}}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
        target, attr, parser = _SCHEMA[key]
        try:
            parsed = parser(value)
        except ValueError as err:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {err}") from err
        if target in betas and attr in ("beta1", "beta2"):
            betas[target][attr] = parsed
        else:
            overrides[target][attr] = parsed

    for stage, parts in betas.items():
        if parts:
            base = overrides[stage].get("betas", TrainConfig().betas)
            overrides[stage]["betas"] = (parts.get("beta1", base[0]), parts.get("beta2", base[1]))

    try:
        data = GeneratorConfig(**overrides["data"])
        pretrain = replace(TrainConfig(), **overrides["pretrain"])
        distill = replace(TrainConfig(), **overrides["distill"])
        finetune = replace(TrainConfig(), **overrides["finetune"])
        sweep = replace(SweepConfig(), **overrides["sweep"])
    except ValueError as err:
        raise ConfigError(f"{source}: {err}") from err
    return ExperimentConfig(
        data=data, pretrain=pretrain, distill=distill, finetune=finetune, sweep=sweep,
        **overrides["top"],
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return parse_config_text(text, source=str(path))


def known_config_keys() -> list[str]:
    return sorted(_SCHEMA)
