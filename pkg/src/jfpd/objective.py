"""The trust-aware joint feature-prediction discrepancy objective.

``pair_jfpd`` scores an arbitrary sample pair; training uses the prototype
form: each target sample is pseudo-labeled, anchored to its class prototypes,
and contributes alpha*psi*d_feat + (1-alpha)*phi*d_pred. With detached trust
(the default) psi and phi are plain numbers recomputed every call, so the
optimizer cannot shrink the loss by inflating uncertainty instead of closing
the gap.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from . import autodiff as ad
from .divergence import check_simplex, feature_divergence, prediction_divergence
from .model import forward_all, forward_graph
from .prototypes import AbsentClassError
from .trust import alignment_trust, uncertainty_trust

BRANCH_BOTH = "both"
BRANCH_FEATURE = "feature"  # pgfd-only objective
BRANCH_PREDICTION = "prediction"  # fgpd-only objective


class EmptyBatchError(ValueError):
    """Every sample in the batch was skipped; the mean is undefined."""


@dataclass(frozen=True)
class JfpdConfig:
    alpha: float = 0.5
    detach_trust: bool = True
    skip_absent_class: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass
class SampleLossBreakdown:
    """Per-sample pieces: total = alpha * pgfd + (1 - alpha) * fgpd."""

    pgfd: float  # psi * d_feat
    fgpd: float  # phi * d_pred
    total: float
    psi: float
    phi: float
    pseudo_label: int
    loss: object = field(default=None, repr=False)  # differentiable total, when tracked


@dataclass
class BatchStats:
    """Aggregates of one batch plus the per-sample arrays behind them."""

    mean: SampleLossBreakdown
    skipped: int
    kept: int
    totals: np.ndarray
    pgfd: np.ndarray
    fgpd: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    pseudo_labels: np.ndarray


def pair_jfpd(f_s, f_t, p_s, p_t, alpha):
    """Trust-weighted joint divergence between one source/target pair."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    d_feat = feature_divergence(f_s, f_t)
    d_pred = prediction_divergence(p_s, p_t)
    psi = uncertainty_trust(p_s, p_t)
    phi = alignment_trust(d_feat)
    return alpha * psi * d_feat + (1.0 - alpha) * phi * d_pred


def pseudo_label(p_t):
    """Argmax class of a prediction vector; ties break to the lowest index."""
    arr = check_simplex(p_t, "p_t")
    return int(np.argmax(arr))


def batch_trust_weights(pred_entropy_t, proto_entropy, d_feat):
    """Vectorized (psi, phi) for a batch; recomputed at every call site."""
    psi = 1.0 / (1.0 + pred_entropy_t + proto_entropy)
    phi = 1.0 / (1.0 + d_feat)
    return psi, phi


def _keep_indices(pseudo, protos, skip_absent, batch_size):
    present = protos.counts[pseudo] > 0
    if not skip_absent and not present.all():
        missing = int(pseudo[~present][0])
        raise AbsentClassError(
            f"pseudo-label {missing} has no prototype and skipping is disabled"
        )
    keep = np.flatnonzero(present)
    if keep.size == 0:
        raise EmptyBatchError(f"all {batch_size} samples skipped (absent classes)")
    return keep


def _stats(alpha, pgfd, fgpd, totals, psi, phi, labels, skipped):
    return BatchStats(
        mean=SampleLossBreakdown(
            pgfd=float(pgfd.mean()),
            fgpd=float(fgpd.mean()),
            total=float(totals.mean()),
            psi=float(psi.mean()),
            phi=float(phi.mean()),
            pseudo_label=-1,
        ),
        skipped=int(skipped),
        kept=int(labels.size),
        totals=np.asarray(totals, dtype=np.float64),
        pgfd=np.asarray(pgfd, dtype=np.float64),
        fgpd=np.asarray(fgpd, dtype=np.float64),
        psi=np.asarray(psi, dtype=np.float64),
        phi=np.asarray(phi, dtype=np.float64),
        pseudo_labels=labels.copy(),
    )


def batch_loss(params, targets, protos, cfg, branch=BRANCH_BOTH, use_trust=True):
    """Mean per-sample loss over a target batch.

    Returns (loss tensor, BatchStats). ``branch`` restricts the objective to
    one side of the decomposition (the other side's columns report 0);
    ``use_trust=False`` forces psi = phi = 1. Samples whose pseudo-label
    class has no prototype are skipped when cfg.skip_absent_class, otherwise
    raise; an all-skipped batch raises EmptyBatchError.
    """
    x = targets.x if hasattr(targets, "x") else np.atleast_2d(np.asarray(targets))
    features, logits = forward_graph(params, x)
    probs = ad.softmax(logits)

    pseudo = np.argmax(probs.data, axis=1)
    keep = _keep_indices(pseudo, protos, cfg.skip_absent_class, x.shape[0])
    skipped = x.shape[0] - keep.size
    if skipped:
        f_kept = ad.take_rows(features, keep)
        p_kept = ad.take_rows(probs, keep)
    else:
        f_kept, p_kept = features, probs
    labels = pseudo[keep]
    kept = keep.size
    zeros = np.zeros(kept)

    want_feat = branch in (BRANCH_BOTH, BRANCH_FEATURE)
    want_pred = branch in (BRANCH_BOTH, BRANCH_PREDICTION)
    if not (want_feat or want_pred):
        raise ValueError(f"unknown branch {branch!r}")

    z_anchor = protos.features[labels]
    q_anchor = protos.predictions[labels]
    d_feat_op = (
        ad.bound_map(ad.rowwise_cosine_to(f_kept, z_anchor)) if want_feat else None
    )
    d_pred_op = (
        ad.bound_map(ad.rowwise_js_to(p_kept, q_anchor)) if want_pred else None
    )

    terms = []
    if cfg.detach_trust or not use_trust:
        if use_trust:
            if want_feat:
                d_feat_vals = d_feat_op.data[:, 0]
            else:
                # phi still needs the feature divergence, just not its gradient;
                # use the same op as the feature branch so fgpd == jfpd@alpha=0
                d_feat_vals = ad.bound_map(
                    ad.rowwise_cosine_to(f_kept, z_anchor)
                ).data[:, 0]
            psi, phi = batch_trust_weights(
                _kernels.row_entropy(p_kept.data),
                _kernels.row_entropy(q_anchor),
                d_feat_vals,
            )
            if not want_feat:
                psi = zeros
            if not want_pred:
                phi = zeros
        else:
            psi = np.ones(kept) if want_feat else zeros
            phi = np.ones(kept) if want_pred else zeros
        if want_feat:
            w = psi if branch == BRANCH_FEATURE else cfg.alpha * psi
            terms.append(ad.mul(d_feat_op, ad.constant(w[:, None])))
        if want_pred:
            w = phi if branch == BRANCH_PREDICTION else (1.0 - cfg.alpha) * phi
            terms.append(ad.mul(d_pred_op, ad.constant(w[:, None])))
    else:
        psi, phi = zeros, zeros
        if want_feat:
            h_t = ad.rowwise_entropy(p_kept)
            h_q = _kernels.row_entropy(q_anchor)
            psi_op = ad.reciprocal(ad.add(ad.add(h_t, ad.constant(h_q[:, None])), 1.0))
            psi = psi_op.data[:, 0].copy()
            t = ad.mul(psi_op, d_feat_op)
            terms.append(t if branch == BRANCH_FEATURE else ad.mul(t, cfg.alpha))
        if want_pred:
            d_feat_for_phi = (
                d_feat_op
                if want_feat
                else ad.bound_map(ad.rowwise_cosine_to(f_kept, z_anchor))
            )
            phi_op = ad.reciprocal(ad.add(d_feat_for_phi, 1.0))
            phi = phi_op.data[:, 0].copy()
            t = ad.mul(phi_op, d_pred_op)
            terms.append(t if branch == BRANCH_PREDICTION else ad.mul(t, 1.0 - cfg.alpha))

    weighted = terms[0] if len(terms) == 1 else ad.add(terms[0], terms[1])
    loss = ad.mean_all(weighted)

    pgfd = psi * d_feat_op.data[:, 0] if want_feat else zeros
    fgpd = phi * d_pred_op.data[:, 0] if want_pred else zeros
    stats = _stats(cfg.alpha, pgfd, fgpd, weighted.data[:, 0].copy(), psi, phi, labels, skipped)
    return loss, stats


def sample_loss(params, x_t, protos, cfg):
    """Per-sample loss breakdown with the differentiable total in ``loss``.

    Returns None when the pseudo-label class is absent and skipping is on.
    """
    x = np.asarray(x_t, dtype=np.float64).reshape(1, -1)
    try:
        loss, stats = batch_loss(params, x, protos, cfg)
    except EmptyBatchError:
        if cfg.skip_absent_class:
            return None
        raise
    return SampleLossBreakdown(
        pgfd=float(stats.pgfd[0]),
        fgpd=float(stats.fgpd[0]),
        total=float(stats.totals[0]),
        psi=float(stats.psi[0]),
        phi=float(stats.phi[0]),
        pseudo_label=int(stats.pseudo_labels[0]),
        loss=loss,
    )


def diagnostic_stats(params, x, protos, cfg, use_trust=True):
    """BatchStats of the non-differentiable joint discrepancy for a batch."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    feats, probs = forward_all(params, x)
    pseudo = np.argmax(probs, axis=1)
    keep = _keep_indices(pseudo, protos, True, x.shape[0])
    labels = pseudo[keep]
    f = np.ascontiguousarray(feats[keep])
    p = np.ascontiguousarray(probs[keep])
    z = np.ascontiguousarray(protos.features[labels])
    q = np.ascontiguousarray(protos.predictions[labels])

    raw_feat = _kernels.row_cosine(f, z)
    raw_pred = _kernels.row_js(p, q)
    d_feat = raw_feat / (1.0 + raw_feat)
    d_pred = raw_pred / (1.0 + raw_pred)
    psi, phi = batch_trust_weights(
        _kernels.row_entropy(p), _kernels.row_entropy(q), d_feat
    )
    if not use_trust:
        psi = np.ones_like(psi)
        phi = np.ones_like(phi)
    pgfd = psi * d_feat
    fgpd = phi * d_pred
    totals = cfg.alpha * pgfd + (1.0 - cfg.alpha) * fgpd
    return _stats(cfg.alpha, pgfd, fgpd, totals, psi, phi, labels, x.shape[0] - keep.size)


def mean_jfpd_diagnostic(params, source, targets, protos, cfg):
    """Mean joint discrepancy of a target set against source prototypes.

    No gradients are involved; this is the domain-gap estimate that gets
    plotted against target error. Prototypes are recomputed from ``source``
    with the current model when not supplied.
    """
    if protos is None:
        from .prototypes import compute_prototypes

        protos = compute_prototypes(params, source)
    x = targets.x if hasattr(targets, "x") else targets
    return diagnostic_stats(params, x, protos, cfg).mean.total
