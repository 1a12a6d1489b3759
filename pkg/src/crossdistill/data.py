"""Synthetic two-modality dataset with a tunable modality-gap knob.

Both modalities observe a class-structured latent z = mu_class + eps
through fixed random mixing matrices and a tanh squash.  For every pair,
the target side sees the mixed latent (1 - gap) * z + gap * u with u
independent standard normal: ``gap=0`` means the two observations share
one latent exactly, ``gap=1`` means the target rows of the pairs carry no
class information at all.  The labeled and test splits draw their own
clean latents, so the gap degrades the pairing (the transfer channel),
not the downstream task itself.

The two modalities are deliberately asymmetric, mirroring a data-rich
"easy" source and an information-poor target:

* class means share a common anchor direction and differ only inside the
  first half of the latent coordinates, with a crowded spread;
* within-class noise is anisotropic: small on the class-bearing
  coordinates, large on the rest (r.m.s. equals ``latent_std``);
* the source mixing matrix is isotropic, while the target mixing matrix
  attenuates the class-bearing coordinates and amplifies the noisy ones,
  making the target a low-SNR view whose class signal rides on
  low-variance directions.

The structure constants below were calibrated so that, at desk scale,
feature quality genuinely matters: self-supervised training on the small
target split stalls well below the supervised ceiling, distillation from
the source encoder recovers most of the headroom, and the benefit decays
as the gap widens.

All randomness that does not depend on ``gap`` is drawn before ``gap`` is
used, so bundles generated with the same seed share identical source-side
arrays across different gap values.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .container import ContainerError, read_container, write_container

# structure constants of the generator (see the module docstring)
_MEAN_SPREAD = 0.4       # crowding of class-mean directions around the anchor
_CLS_STD_FACTOR = 0.2    # within-class noise factor on class-bearing coords
_TARGET_GAIN_CLS = 0.8   # target-view gain on class-bearing coords
_TARGET_GAIN_NOISE = 1.4  # target-view gain on the noisy coords


@dataclass(frozen=True)
class GeneratorConfig:
    n_classes: int = 10
    latent_dim: int = 8
    dim_a: int = 32
    dim_b: int = 32
    class_scale: float = 3.0
    latent_std: float = 0.5
    noise_std: float = 0.1
    gap: float = 0.0
    n_source: int = 20000
    n_paired: int = 2000
    n_labeled: int = 500
    n_test: int = 2000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gap <= 1.0:
            raise ValueError(f"gap must lie in [0, 1], got {self.gap}")
        for name in ("n_classes", "latent_dim", "dim_a", "dim_b", "n_source", "n_paired", "n_labeled", "n_test"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.n_labeled % self.n_classes != 0:
            raise ValueError(
                f"n_labeled ({self.n_labeled}) must be divisible by n_classes ({self.n_classes}) "
                "so the labeled split can be class-balanced"
            )
        if self.n_test % self.n_classes != 0:
            raise ValueError(f"n_test ({self.n_test}) must be divisible by n_classes ({self.n_classes})")


@dataclass
class DatasetBundle:
    """All splits of one synthetic experiment.

    The fields prefixed with an underscore are generation provenance kept
    for verification (ground-truth latents, mixing matrices, per-pair
    observation noise); training code must not read them.
    """

    config: GeneratorConfig
    source_x: np.ndarray          # (n_source, dim_a), unlabeled
    paired_xa: np.ndarray         # (n_paired, dim_a)
    paired_xb: np.ndarray         # (n_paired, dim_b), row i pairs with paired_xa row i
    labeled_x: np.ndarray         # (n_labeled, dim_b)
    labeled_y: np.ndarray         # (n_labeled,), int64 in [0, n_classes)
    test_x: np.ndarray            # (n_test, dim_b)
    test_y: np.ndarray            # (n_test,)
    _source_y: np.ndarray         # hidden source labels (sanity checks only)
    _mix_a: np.ndarray            # (dim_a, latent_dim)
    _mix_b: np.ndarray            # (dim_b, latent_dim)
    _paired_z: np.ndarray         # (n_paired, latent_dim), shared latent
    _paired_zb: np.ndarray        # (n_paired, latent_dim), gap-mixed latent
    _paired_noise_a: np.ndarray   # (n_paired, dim_a)
    _paired_noise_b: np.ndarray   # (n_paired, dim_b)
    _paired_y: np.ndarray         # hidden pair labels

    @property
    def n_classes(self) -> int:
        return self.config.n_classes


def _latent_std_profile(latent_dim: int, scale: float) -> np.ndarray:
    """Per-coordinate within-class stds: small on the class-bearing half,
    large on the rest, with r.m.s. equal to ``scale``."""
    r = latent_dim // 2
    if r == 0 or r == latent_dim:
        return np.full(latent_dim, scale)
    hi = np.sqrt((latent_dim - r * _CLS_STD_FACTOR**2) / (latent_dim - r))
    return scale * np.concatenate([np.full(r, _CLS_STD_FACTOR), np.full(latent_dim - r, hi)])


def _class_means(rng, k, dz, scale) -> np.ndarray:
    """Crowded class means of norm ``scale``: a shared anchor direction plus
    per-class deviations confined to the class-bearing coordinates."""
    anchor = rng.standard_normal(dz)
    anchor /= np.linalg.norm(anchor)
    dev = rng.standard_normal((k, dz))
    dev[:, dz // 2 :] = 0.0
    dirs = anchor + _MEAN_SPREAD * dev
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return scale * dirs


def _observe(z, mix, rng, noise_std):
    noise = noise_std * rng.standard_normal((z.shape[0], mix.shape[0]))
    return np.tanh(z @ mix.T) + noise, noise


def _balanced_labels(rng, n, k):
    labels = np.repeat(np.arange(k, dtype=np.int64), n // k)
    if labels.shape[0] < n:  # remainder drawn uniformly
        labels = np.concatenate([labels, rng.integers(0, k, size=n - labels.shape[0], dtype=np.int64)])
    return labels[rng.permutation(n)]


def generate(config: GeneratorConfig) -> DatasetBundle:
    """Deterministic bundle for a config; same config gives identical bytes."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xDA7A]))
    k, dz = config.n_classes, config.latent_dim
    r = dz // 2
    mu = _class_means(rng, k, dz, config.class_scale)
    stds = _latent_std_profile(dz, config.latent_std)
    mix_a = rng.standard_normal((config.dim_a, dz)) / np.sqrt(dz)
    mix_b = rng.standard_normal((config.dim_b, dz)) / np.sqrt(dz)
    if 0 < r < dz:
        mix_b[:, :r] *= _TARGET_GAIN_CLS
        mix_b[:, r:] *= _TARGET_GAIN_NOISE

    def draw(n):
        y = _balanced_labels(rng, n, k)
        return y, mu[y] + stds * rng.standard_normal((n, dz))

    # source modality: abundant unlabeled data (labels retained for checks only)
    src_y, src_z = draw(config.n_source)
    source_x, _ = _observe(src_z, mix_a, rng, config.noise_std)

    # paired data: draw everything gap-independent first, then mix per pair
    pair_y, pair_z = draw(config.n_paired)
    pair_u = rng.standard_normal((config.n_paired, dz))
    paired_xa, noise_a = _observe(pair_z, mix_a, rng, config.noise_std)
    pair_zb = (1.0 - config.gap) * pair_z + config.gap * pair_u
    paired_xb, noise_b = _observe(pair_zb, mix_b, rng, config.noise_std)

    # labeled and test splits observe the target modality's own clean latents:
    # the gap knob degrades the pairing, not the downstream task
    lab_y, lab_z = draw(config.n_labeled)
    labeled_x, _ = _observe(lab_z, mix_b, rng, config.noise_std)
    test_y, test_z = draw(config.n_test)
    test_x, _ = _observe(test_z, mix_b, rng, config.noise_std)

    return DatasetBundle(
        config=config,
        source_x=source_x,
        paired_xa=paired_xa,
        paired_xb=paired_xb,
        labeled_x=labeled_x,
        labeled_y=lab_y,
        test_x=test_x,
        test_y=test_y,
        _source_y=src_y,
        _mix_a=mix_a,
        _mix_b=mix_b,
        _paired_z=pair_z,
        _paired_zb=pair_zb,
        _paired_noise_a=noise_a,
        _paired_noise_b=noise_b,
        _paired_y=pair_y,
    )


def augment(
    x: np.ndarray,
    rng: np.random.Generator | int,
    noise_std: float = 0.1,
    mask_prob: float = 0.2,
) -> np.ndarray:
    """Stochastic view for contrastive positives: add Gaussian noise, then
    zero each coordinate independently with probability ``mask_prob``."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    x = np.asarray(x, dtype=np.float64)
    out = x + noise_std * rng.standard_normal(x.shape)
    keep = rng.random(x.shape) >= mask_prob
    return out * keep


def subsample_paired(bundle: DatasetBundle, ratio: float, seed: int) -> DatasetBundle:
    """Keep ceil(ratio * n_paired) pairs, chosen uniformly without replacement."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
    m = bundle.paired_xa.shape[0]
    keep = math.ceil(ratio * m)
    if keep == 0:
        raise ValueError(f"ratio {ratio} yields zero pairs")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5AB5]))
    idx = np.sort(rng.choice(m, size=keep, replace=False))
    return replace(
        bundle,
        paired_xa=bundle.paired_xa[idx],
        paired_xb=bundle.paired_xb[idx],
        _paired_z=bundle._paired_z[idx],
        _paired_zb=bundle._paired_zb[idx],
        _paired_noise_a=bundle._paired_noise_a[idx],
        _paired_noise_b=bundle._paired_noise_b[idx],
        _paired_y=bundle._paired_y[idx],
    )


def subsample_labels(bundle: DatasetBundle, n_per_class: int, seed: int) -> DatasetBundle:
    """Keep exactly ``n_per_class`` labeled samples from each class."""
    if n_per_class <= 0:
        raise ValueError("n_per_class must be positive")
    k = bundle.n_classes
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFE75]))
    chosen = []
    for c in range(k):
        pool = np.flatnonzero(bundle.labeled_y == c)
        if pool.size < n_per_class:
            raise ValueError(f"class {c} has only {pool.size} labeled samples, need {n_per_class}")
        chosen.append(rng.choice(pool, size=n_per_class, replace=False))
    idx = np.sort(np.concatenate(chosen))
    return replace(bundle, labeled_x=bundle.labeled_x[idx], labeled_y=bundle.labeled_y[idx])


_ARRAY_FIELDS = (
    "source_x", "paired_xa", "paired_xb", "labeled_x", "labeled_y", "test_x", "test_y",
    "_source_y", "_mix_a", "_mix_b", "_paired_z", "_paired_zb",
    "_paired_noise_a", "_paired_noise_b", "_paired_y",
)


def save_bundle(bundle: DatasetBundle, path: str | Path) -> None:
    arrays = {name: getattr(bundle, name) for name in _ARRAY_FIELDS}
    write_container(path, "dataset", asdict(bundle.config), arrays)


def load_bundle(path: str | Path) -> DatasetBundle:
    kind, config, arrays = read_container(path)
    if kind != "dataset":
        raise ContainerError(f"expected a dataset container, got kind {kind!r}")
    missing = [name for name in _ARRAY_FIELDS if name not in arrays]
    if missing:
        raise ContainerError(f"dataset container missing sections: {missing}")
    return DatasetBundle(config=GeneratorConfig(**config), **{n: arrays[n] for n in _ARRAY_FIELDS})
