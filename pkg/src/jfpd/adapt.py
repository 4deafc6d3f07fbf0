"""Trust-aware target adaptation: the second stage of the two-stage recipe.

Each epoch shuffles the unlabeled targets once, and every mini-batch draws
fresh per-class source prototypes with the current parameters, recomputes
pseudo-labels and trust weights, and takes one SGD step on the joint
discrepancy. Target labels, when a benchmark carries them, feed only the
accuracy column of the trace; the loss path receives a label-stripped view.

Modes: "jfpd" (full objective), "fgpd"/"pgfd" (single-branch ablations, the
unused branch reports 0 in the trace), and "standard" (pseudo-label
cross-entropy, the trust-free fine-tuning baseline; its trace still logs the
joint-discrepancy diagnostics for comparison, computed at the configured
alpha with trust on).
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .model import TrainingDiverged, evaluate_accuracy, forward_graph, sgd_step
from .objective import (
    BRANCH_BOTH,
    BRANCH_FEATURE,
    BRANCH_PREDICTION,
    JfpdConfig,
    batch_loss,
    diagnostic_stats,
)
from .prototypes import sample_minibatch_prototypes
from .rng import Rng, derive_seed

_SALT_ADAPT = 103

MODES = ("jfpd", "fgpd", "pgfd", "standard")

TRACE_COLUMNS = (
    "epoch",
    "mean_jfpd",
    "mean_pgfd",
    "mean_fgpd",
    "mean_psi",
    "mean_phi",
    "skipped",
    "target_acc",
)


@dataclass
class AdaptConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.05
    schedule: str = "cosine"  # constant | cosine
    restart_period: int | None = None
    seed: int = 0
    proto_k: int = 32
    jfpd: JfpdConfig = field(default_factory=JfpdConfig)
    log_every: int = 1
    mode: str = "jfpd"
    use_trust: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.proto_k < 1:
            raise ValueError("epochs, batch_size and proto_k must be positive")
        if self.lr < 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass
class EpochRecord:
    epoch: int
    mean_jfpd: float
    mean_pgfd: float
    mean_fgpd: float
    mean_psi: float
    mean_phi: float
    skipped: int
    target_acc: float  # NaN when the target is unlabeled

    def row(self):
        return [
            self.epoch,
            self.mean_jfpd,
            self.mean_pgfd,
            self.mean_fgpd,
            self.mean_psi,
            self.mean_phi,
            self.skipped,
            self.target_acc,
        ]


@dataclass
class AdaptTrace:
    records: list = field(default_factory=list)

    def rows(self):
        return [r.row() for r in self.records]

    def column(self, name):
        i = TRACE_COLUMNS.index(name)
        return np.array([r.row()[i] for r in self.records], dtype=np.float64)

    def __len__(self):
        return len(self.records)


def cosine_lr(step, total, base_lr, restart_period=None):
    """Half-cosine decay restarting every ``restart_period`` steps."""
    period = restart_period if restart_period else total
    if period <= 0:
        raise ValueError(f"restart period must be positive, got {period}")
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")
    return base_lr * (1.0 + math.cos(math.pi * (step % period) / period)) / 2.0


def _epoch_lr(cfg, epoch):
    if cfg.schedule == "constant":
        return cfg.lr
    if cfg.schedule == "cosine":
        return cosine_lr(epoch, cfg.epochs, cfg.lr, cfg.restart_period)
    raise ValueError(f"unknown schedule {cfg.schedule!r}")


def _mode_setup(cfg):
    """(effective JfpdConfig, branch) for the configured mode."""
    if cfg.mode == "jfpd":
        return cfg.jfpd, BRANCH_BOTH
    if cfg.mode == "fgpd":
        return replace(cfg.jfpd, alpha=0.0), BRANCH_PREDICTION
    if cfg.mode == "pgfd":
        return replace(cfg.jfpd, alpha=1.0), BRANCH_FEATURE
    return cfg.jfpd, BRANCH_BOTH  # standard: diagnostics only


class _EpochAccumulator:
    def __init__(self):
        self.total = self.pgfd = self.fgpd = self.psi = self.phi = 0.0
        self.kept = 0
        self.skipped = 0

    def add(self, stats):
        self.total += float(stats.totals.sum())
        self.pgfd += float(stats.pgfd.sum())
        self.fgpd += float(stats.fgpd.sum())
        self.psi += float(stats.psi.sum())
        self.phi += float(stats.phi.sum())
        self.kept += stats.kept
        self.skipped += stats.skipped

    def record(self, epoch, target_acc):
        k = max(self.kept, 1)
        return EpochRecord(
            epoch=epoch,
            mean_jfpd=self.total / k,
            mean_pgfd=self.pgfd / k,
            mean_fgpd=self.fgpd / k,
            mean_psi=self.psi / k,
            mean_phi=self.phi / k,
            skipped=self.skipped,
            target_acc=target_acc,
        )


def adapt_epoch(params, source, target, cfg, rng, epoch=0):
    """One pass over the shuffled targets; mutates params, returns the record."""
    lr = _epoch_lr(cfg, epoch)
    jfpd_cfg, branch = _mode_setup(cfg)
    x_target = target.without_labels().x
    n = x_target.shape[0]
    acc = _EpochAccumulator()

    order = rng.shuffled_indices(n)
    for start in range(0, n, cfg.batch_size):
        batch = x_target[order[start : start + cfg.batch_size]]
        protos = sample_minibatch_prototypes(params, source, cfg.proto_k, rng)
        params.zero_grad()
        if cfg.mode == "standard":
            # confidence-free baseline: cross-entropy against own pseudo-labels
            stats = diagnostic_stats(params, batch, protos, jfpd_cfg)
            _, logits = forward_graph(params, batch)
            pseudo = np.argmax(logits.data, axis=1)
            loss = ad.cross_entropy(logits, pseudo)
        else:
            loss, stats = batch_loss(
                params, batch, protos, jfpd_cfg, branch=branch, use_trust=cfg.use_trust
            )
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDiverged(
                f"non-finite adaptation loss at epoch {epoch}, batch {start // cfg.batch_size}"
            )
        ad.backward(loss)
        sgd_step(params, lr)
        acc.add(stats)

    target_acc = (
        evaluate_accuracy(params, target) if target.y is not None else float("nan")
    )
    return acc.record(epoch, target_acc)


def adapt(params, source, target, cfg):
    """Run the full adaptation schedule; returns (new params, AdaptTrace).

    The input parameters are left untouched. On a non-finite loss the raised
    TrainingDiverged carries ``last_good_params`` and ``completed_epochs``.
    """
    params = params.copy()
    rng = Rng(derive_seed(cfg.seed, _SALT_ADAPT))
    trace = AdaptTrace()
    for epoch in range(cfg.epochs):
        last_good = params.copy()
        try:
            trace.records.append(adapt_epoch(params, source, target, cfg, rng, epoch))
        except TrainingDiverged as exc:
            exc.last_good_params = last_good
            exc.completed_epochs = epoch
            raise
    return params, trace


def lemma_suppression_report(params, source, target, cfg):
    """Compare trust-weighted vs unweighted per-sample totals on a frozen model.

    Returns (n_ok, n_total): samples where weighted <= unweighted. The trust
    weights live in (0, 1], so n_ok == n_total always; the CLI surfaces this
    as a report line for --no-trust runs.
    """
    from .prototypes import compute_prototypes

    protos = compute_prototypes(params, source)
    x = target.without_labels().x
    weighted = diagnostic_stats(params, x, protos, cfg.jfpd, use_trust=True)
    unweighted = diagnostic_stats(params, x, protos, cfg.jfpd, use_trust=False)
    ok = int(np.sum(weighted.totals <= unweighted.totals))
    return ok, int(weighted.totals.size)
