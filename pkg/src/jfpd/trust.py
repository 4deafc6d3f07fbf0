"""Per-sample reliability weights and their analytic lower bounds.

psi downweights pairs whose predictions are uncertain; phi downweights pairs
that are far apart in feature space. Both live in (0, 1] and multiply the
matching divergence term, so they can only shrink a sample's contribution.
"""

import math

from .divergence import entropy


def uncertainty_trust(p_s, p_t):
    """1 / (1 + H(p_s) + H(p_t)): high when both predictions are confident."""
    return 1.0 / (1.0 + entropy(p_s) + entropy(p_t))


def alignment_trust(d_feat):
    """1 / (1 + d_feat) for a bounded feature divergence in [0, 1)."""
    d_feat = float(d_feat)
    if not 0.0 <= d_feat < 1.0:
        raise ValueError(f"alignment_trust needs d_feat in [0, 1), got {d_feat}")
    return 1.0 / (1.0 + d_feat)


def trust_bounds(n_classes):
    """Lower bounds (gamma1, gamma2) for psi and phi with C classes.

    Entropy is at most ln C per domain, so psi >= 1/(1 + 2 ln C); the bounded
    feature divergence stays below 1, so phi > 1/2.
    """
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    gamma1 = 1.0 / (1.0 + 2.0 * math.log(n_classes))
    return gamma1, 0.5
