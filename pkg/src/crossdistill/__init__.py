"""Cross-modality contrastive distillation on synthetic paired data.

Pretrain a source-modality encoder contrastively, distill it into a
target-modality encoder over a small paired set, fine-tune on scarce
labels, and diagnose the transfer with similarity-distribution distances
and an informativeness ratio.  Everything runs on CPU in float64.
"""

from .analysis import (
    DiagnosticsReport,
    KappaEstimate,
    compute_deltas,
    estimate_kappa,
    estimate_tv,
    tv_between_gibbs,
    tv_between_sides,
)
from .config import ConfigError, ExperimentConfig, SweepConfig, load_config, parse_config_text
from .container import ContainerError, read_container, write_container
from .data import (
    DatasetBundle,
    GeneratorConfig,
    augment,
    generate,
    load_bundle,
    save_bundle,
    subsample_labels,
    subsample_paired,
)
from .checkpoint import load_encoder, load_head, save_encoder, save_head
from .losses import (
    ce_loss,
    cmc_loss,
    cmd_loss,
    gibbs_matrix,
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
from .optim import Adam, DivergenceError, effective_lr, zero_grad
from .pipeline import (
    RunReport,
    StageConfigs,
    TrainConfig,
    distill,
    evaluate_target,
    pretrain_source,
    run_baseline,
    run_distilled,
    top1_accuracy,
    train_contrastive,
)
from .sweeps import SweepResult, TeacherCache, run_sweep
from .tensor import Tensor

__version__ = "0.1.0"
