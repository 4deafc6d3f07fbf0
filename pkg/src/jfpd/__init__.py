"""Trust-aware joint feature-prediction discrepancy for domain adaptation.

A small, deterministic toolkit: train a classifier on a labeled source
domain, adapt it to an unlabeled target domain by minimizing the
trust-weighted joint divergence against source class prototypes, and use the
same quantity as a diagnostic of domain-shift magnitude.
"""

from ._kernels import BACKEND as kernel_backend
from .adapt import AdaptConfig, AdaptTrace, adapt, adapt_epoch, cosine_lr
from .autodiff import Tensor, backward, grad_check
from .data import (
    DomainDataset,
    ShiftSpec,
    gen_gaussian_domains,
    gen_two_moons_rotated,
    load_idx,
    standardize,
)
from .divergence import (
    bound,
    cosine_distance,
    entropy,
    feature_divergence,
    js_divergence,
    prediction_divergence,
)
from .model import (
    Dims,
    ModelParams,
    TrainConfig,
    evaluate_accuracy,
    forward_features,
    forward_predict,
    init,
    load_checkpoint,
    pretrain_source,
    save_checkpoint,
)
from .objective import (
    JfpdConfig,
    SampleLossBreakdown,
    batch_loss,
    mean_jfpd_diagnostic,
    pair_jfpd,
    pseudo_label,
    sample_loss,
)
from .prototypes import (
    AbsentClassError,
    PrototypeSet,
    compute_prototypes,
    sample_minibatch_prototypes,
)
from .rng import Rng, derive_seed
from .trust import alignment_trust, trust_bounds, uncertainty_trust

__version__ = "0.1.0"
