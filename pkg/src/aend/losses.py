"""Diarization losses.

The diarization term is a permutation-invariant BCE: the per-pair cost
matrix (hypothesis row vs label row) is assembled with two matrix
products over clamped logs, the best label permutation is found
exhaustively for S <= 6 and by Hungarian assignment above that (the two
agree because the total cost is a sum of per-pair costs), and the loss
reads the chosen entries off the cost tensor so gradients flow only
through them.

Attractor existence uses BCE on logits in softplus form. The aggregate
is total = diarization + alpha * existence + beta * mean(per-layer
auxiliary terms), each auxiliary term being that layer's own
independently-permuted PIT BCE plus its existence BCE.
"""

import itertools
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import tensor as tt
from .tensor import Tensor
from .tolerances import BCE_CLAMP

EXHAUSTIVE_MAX = 6


def bce_cost_matrix(y: Tensor, labels: np.ndarray) -> Tensor:
    """cost[i, j] = mean-over-time BCE of posterior row i vs label row j."""
    S, T = y.shape
    lab = Tensor(np.asarray(labels, dtype=y.data.dtype))
    log_y = tt.log(tt.clip(y, BCE_CLAMP, 1.0 - BCE_CLAMP))
    log_ny = tt.log(tt.clip(1.0 - y, BCE_CLAMP, 1.0 - BCE_CLAMP))
    return (log_y @ tt.transpose(lab)
            + log_ny @ tt.transpose(1.0 - lab)) * (-1.0 / T)


def _best_permutation(cost: np.ndarray) -> np.ndarray:
    """perm[i] = label row assigned to hypothesis row i, minimizing total."""
    S = cost.shape[0]
    if not np.isfinite(cost).all():
        # poisoned costs: any assignment is as bad as another, keep the
        # identity so the non-finite loss reaches the divergence check
        return np.arange(S, dtype=np.intp)
    if S <= EXHAUSTIVE_MAX:
        best, best_perm = np.inf, None
        for p in itertools.permutations(range(S)):
            total = sum(cost[i, p[i]] for i in range(S))
            if total < best:
                best, best_perm = total, p
        return np.array(best_perm, dtype=np.intp)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(S, dtype=np.intp)
    perm[rows] = cols
    return perm


def pit_bce(y: Tensor, labels: np.ndarray) -> Tuple[Tensor, np.ndarray]:
    """Minimum mean BCE over all label permutations.

    Returns (scalar loss, perm) with perm[i] the label row matched to
    hypothesis row i. The permutation choice itself is not differentiated
    through; the loss is.
    """
    labels = np.asarray(labels)
    if y.shape != labels.shape:
        raise ValueError("shape mismatch: %r vs %r" % (y.shape, labels.shape))
    S = y.shape[0]
    if S == 0:
        return Tensor(np.zeros((), dtype=y.data.dtype)), np.empty(0, np.intp)
    cost = bce_cost_matrix(y, labels)
    perm = _best_permutation(cost.data)
    pick = np.zeros((S, S), dtype=y.data.dtype)
    pick[np.arange(S), perm] = 1.0
    # gather one entry per row before summing: the row-wise dot is exact
    # (single nonzero), so the final sum runs in hypothesis order no
    # matter how the labels were permuted, keeping PIT bitwise invariant
    ones = Tensor(np.ones((S, 1), dtype=y.data.dtype))
    per_row = (cost * Tensor(pick)) @ ones
    return tt.tsum(per_row) * (1.0 / S), perm


def pit_bce_padded(y: Tensor, labels: np.ndarray) -> Tuple[Tensor, np.ndarray]:
    """PIT over the real label rows only; extra hypothesis rows are padding.

    y has S_slots rows, labels has S_real <= S_slots rows. The permutation
    search runs among the first S_real hypothesis rows (decode order ties
    the existence labels to early slots); trailing rows are scored against
    all-zero rows and never enter the search. The loss is the mean BCE
    over all S_slots rows.
    """
    labels = np.asarray(labels)
    s_real, s_slots = labels.shape[0], y.shape[0]
    if s_real > s_slots or labels.shape[1] != y.shape[1]:
        raise ValueError("label block %r does not fit posteriors %r"
                         % (labels.shape, y.shape))
    if s_real == s_slots:
        return pit_bce(y, labels)
    real_loss, perm = pit_bce(tt.slice_rows(y, 0, s_real), labels)
    pad = tt.slice_rows(y, s_real, s_slots)
    pad_loss = tt.tmean(bce_cost_matrix(pad, np.zeros((1, labels.shape[1]))))
    total = (real_loss * float(s_real) + pad_loss * float(s_slots - s_real)) \
        * (1.0 / s_slots)
    return total, perm


def existence_labels(num_slots: int, num_real: int) -> np.ndarray:
    """(1, ..., 1, 0, ..., 0): one per decoded slot, num_real ones."""
    if num_real > num_slots:
        raise ValueError("more real speakers than slots")
    lab = np.zeros(num_slots)
    lab[:num_real] = 1.0
    return lab


def existence_bce(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean BCE on attractor-existence logits (softplus form)."""
    labels = np.asarray(labels, dtype=logits.data.dtype)
    if logits.shape != labels.shape:
        raise ValueError("shape mismatch: %r vs %r"
                         % (logits.shape, labels.shape))
    return tt.tmean(tt.softplus(logits) - logits * Tensor(labels))


@dataclass
class LossBreakdown:
    diarization: Tensor
    existence: Tensor
    intermediate: List[Tensor]
    total: Tensor
    best_permutation: np.ndarray
    intermediate_permutations: List[np.ndarray] = field(default_factory=list)

    def scalars(self) -> dict:
        out = {
            "diarization": float(self.diarization.data),
            "existence": float(self.existence.data),
            "total": float(self.total.data),
        }
        if self.intermediate:
            out["intermediate"] = [float(t.data) for t in self.intermediate]
        return out


def total_loss(y: Tensor, logits: Tensor, labels: np.ndarray,
               intermediates: List[Tuple[Tensor, Tensor]] = (),
               alpha: float = 1.0, beta: float = 1.0) -> LossBreakdown:
    """Aggregate training loss for one recording/chunk.

    y: (S_slots, T) final posteriors; logits: existence logits over the
    decoded slots (S_slots + 1 of them during training); labels:
    (S_real, T) with S_real <= S_slots. Each intermediate entry is that
    layer's (posteriors, existence logits), PIT-solved independently.
    """
    labels = np.asarray(labels)
    s_real = labels.shape[0]
    diar, perm = pit_bce_padded(y, labels)
    exist = existence_bce(logits, existence_labels(logits.shape[0], s_real))
    inter_terms = []
    inter_perms = []
    for y_l, logits_l in intermediates:
        l_diar, l_perm = pit_bce_padded(y_l, labels)
        l_exist = existence_bce(logits_l,
                                existence_labels(logits_l.shape[0], s_real))
        inter_terms.append(l_diar + l_exist)
        inter_perms.append(l_perm)
    total = diar + exist * alpha
    if inter_terms:
        acc = inter_terms[0]
        for t in inter_terms[1:]:
            acc = acc + t
        total = total + acc * (beta / len(inter_terms))
    return LossBreakdown(diar, exist, inter_terms, total, perm, inter_perms)
