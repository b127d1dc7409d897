"""Divergence losses, small-loss selection, separation hinge and variants.

All functions are pure and operate on probability rows (one sample per
row, one column per class).  Probabilities are clamped at 1e-12 before
every log so near-one-hot outputs stay finite; the clamp is treated as
constant when differentiating.

Naming used throughout:

* ``agreement divergence`` (skld): KL(p1||p2) + KL(p2||p1), small when the
  two heads agree.
* ``crs``: H(p1, p2) + H(p2, p1), the pairwise cross-entropy sum.
* ``ent``: H(p1) + H(p2), the confidence term.
* ``joint divergence``: crs + ent, large when the heads disagree *and* are
  unconfident; skld == crs - ent as an algebraic identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, DataError, DimensionError, UsageError

P_CLAMP = 1e-12


def _clamped_log(p: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(p, P_CLAMP))


def _check_pair(p1: np.ndarray, p2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p1 = np.atleast_2d(np.asarray(p1, dtype=np.float64))
    p2 = np.atleast_2d(np.asarray(p2, dtype=np.float64))
    if p1.shape != p2.shape:
        raise DimensionError(f"probability shapes differ: {p1.shape} vs {p2.shape}")
    return p1, p2


@dataclass
class SeparationParams:
    """Dead-band hinge parameters: threshold ``delta``, margin ``margin``."""

    delta: float
    margin: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigError(f"delta must be > 0, got {self.delta}")
        if self.margin < 0:
            raise ConfigError(f"margin must be >= 0, got {self.margin}")


class MethodVariant(Enum):
    FULL = "full"
    SOURCE_ONLY = "source_only"
    NO_SELECT = "no_select"
    NO_DIV = "no_div"
    NO_CRS = "no_crs"
    NO_ENT = "no_ent"
    NO_SEP = "no_sep"
    NO_MINIMAX = "no_minimax"
    WITH_KL = "with_kl"


@dataclass
class LossBreakdown:
    """Batch diagnostics: supervised term, agreement divergence, mean crs,
    mean ent, and the per-sample joint source losses used for selection."""

    sup: float
    skld: float
    crs: float
    ent: float
    per_sample_joint: np.ndarray


# --- elementary divergences ---------------------------------------------------

def kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL divergence of two probability vectors, in nats."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise DimensionError(f"kl expects equal-length vectors, got {p.shape}, {q.shape}")
    return float(np.sum(p * (_clamped_log(p) - _clamped_log(q))))


def kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return (p * (_clamped_log(p) - _clamped_log(q))).sum(axis=1)


def skld(p1: np.ndarray, p2: np.ndarray) -> float:
    """Batch-mean symmetric agreement divergence."""
    p1, p2 = _check_pair(p1, p2)
    if p1.shape[0] == 0:
        raise UsageError("skld needs a nonempty batch")
    return float((kl_rows(p1, p2) + kl_rows(p2, p1)).mean())


def crs_rows(p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    """Per-sample pairwise cross-entropy sum H(p1,p2) + H(p2,p1)."""
    return -(p1 * _clamped_log(p2) + p2 * _clamped_log(p1)).sum(axis=1)


def ent_rows(p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    """Per-sample entropy sum H(p1) + H(p2)."""
    return -(p1 * _clamped_log(p1) + p2 * _clamped_log(p2)).sum(axis=1)


def crs_ent(p1: np.ndarray, p2: np.ndarray) -> tuple[float, float]:
    """(crs, ent) of a single probability pair."""
    p1, p2 = _check_pair(p1, p2)
    return float(crs_rows(p1, p2)[0]), float(ent_rows(p1, p2)[0])


def joint_divergence(p1: np.ndarray, p2: np.ndarray) -> float:
    """crs + ent of a single pair; large means disagreement plus low
    confidence."""
    c, e = crs_ent(p1, p2)
    return c + e


# --- gradients of the per-sample terms ---------------------------------------
# These return d(term_i)/d(p), unscaled; callers apply batch weights.

def _safe_inv(p: np.ndarray) -> np.ndarray:
    # derivative of log(max(p, clamp)): 1/p above the clamp, 0 below it
    return np.where(p > P_CLAMP, 1.0 / np.maximum(p, P_CLAMP), 0.0)


def crs_grad_rows(p1: np.ndarray, p2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d1 = -_clamped_log(p2) - p2 * _safe_inv(p1)
    d2 = -_clamped_log(p1) - p1 * _safe_inv(p2)
    return d1, d2


def ent_grad_rows(p1: np.ndarray, p2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d1 = -_clamped_log(p1) - p1 * _safe_inv(p1)
    d2 = -_clamped_log(p2) - p2 * _safe_inv(p2)
    return d1, d2


def skld_grad_rows(p1: np.ndarray, p2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d1 = _clamped_log(p1) - _clamped_log(p2) + (p1 - p2) * _safe_inv(p1)
    d2 = _clamped_log(p2) - _clamped_log(p1) + (p2 - p1) * _safe_inv(p2)
    return d1, d2


# --- supervised and joint source losses --------------------------------------

def _check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DataError(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]")
    return labels.astype(np.int64)


def supervised_loss(p1: np.ndarray, p2: np.ndarray, labels: np.ndarray) -> float:
    """Batch-mean cross-entropy of both heads against the observed labels."""
    p1, p2 = _check_pair(p1, p2)
    labels = _check_labels(labels, p1.shape[1])
    rows = np.arange(p1.shape[0])
    per = -(_clamped_log(p1[rows, labels]) + _clamped_log(p2[rows, labels]))
    return float(per.mean())


def source_loss(p1: np.ndarray, p2: np.ndarray, labels: np.ndarray,
                lam: float) -> tuple[float, np.ndarray]:
    """Joint source loss: supervised + lam * agreement divergence.

    Returns the batch mean and the per-sample values used by small-loss
    selection.
    """
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    p1, p2 = _check_pair(p1, p2)
    labels = _check_labels(labels, p1.shape[1])
    rows = np.arange(p1.shape[0])
    per = -(_clamped_log(p1[rows, labels]) + _clamped_log(p2[rows, labels]))
    per = per + lam * (kl_rows(p1, p2) + kl_rows(p2, p1))
    return float(per.mean()), per


def source_loss_grad(p1: np.ndarray, p2: np.ndarray, labels: np.ndarray,
                     lam: float, rows: np.ndarray | None = None
                     ) -> tuple[float, np.ndarray, np.ndarray]:
    """Value and d/dp of the joint source loss averaged over ``rows``
    (default: the whole batch).  Gradient rows outside the subset are zero."""
    p1, p2 = _check_pair(p1, p2)
    labels = _check_labels(labels, p1.shape[1])
    n = p1.shape[0]
    if rows is None:
        rows = np.arange(n)
    k = len(rows)
    if k == 0:
        raise UsageError("source_loss_grad needs a nonempty subset")

    sub1, sub2, suby = p1[rows], p2[rows], labels[rows]
    idx = np.arange(k)
    per = -(_clamped_log(sub1[idx, suby]) + _clamped_log(sub2[idx, suby]))
    per = per + lam * (kl_rows(sub1, sub2) + kl_rows(sub2, sub1))
    value = float(per.mean())

    d1 = np.zeros((k, p1.shape[1]))
    d2 = np.zeros((k, p1.shape[1]))
    d1[idx, suby] = -_safe_inv(sub1[idx, suby])
    d2[idx, suby] = -_safe_inv(sub2[idx, suby])
    if lam != 0.0:
        s1, s2 = skld_grad_rows(sub1, sub2)
        d1 += lam * s1
        d2 += lam * s2

    dp1 = np.zeros_like(p1)
    dp2 = np.zeros_like(p2)
    dp1[rows] = d1 / k
    dp2[rows] = d2 / k
    return value, dp1, dp2


def loss_breakdown(p1: np.ndarray, p2: np.ndarray, labels: np.ndarray,
                   lam: float) -> LossBreakdown:
    p1, p2 = _check_pair(p1, p2)
    total_skld = skld(p1, p2)
    c = crs_rows(p1, p2)
    e = ent_rows(p1, p2)
    _, per = source_loss(p1, p2, labels, lam)
    return LossBreakdown(sup=supervised_loss(p1, p2, labels), skld=total_skld,
                         crs=float(c.mean()), ent=float(e.mean()),
                         per_sample_joint=per)


# --- small-loss selection ------------------------------------------------------

def small_loss_select(per_sample_losses: np.ndarray, alpha: float) -> np.ndarray:
    """Indices of the k = ceil((1 - alpha) * N) smallest losses.

    ``alpha`` is the dropped fraction: alpha = 0 keeps everything.  Ties
    break toward the lower index; the result is sorted ascending.
    """
    losses = np.asarray(per_sample_losses, dtype=np.float64)
    if losses.ndim != 1 or losses.size == 0:
        raise UsageError("small_loss_select needs a nonempty 1-D loss vector")
    if not 0.0 <= alpha < 1.0:
        raise ConfigError(f"alpha must be in [0, 1), got {alpha}")
    n = losses.size
    # guard float drift: N - floor(alpha*N) == ceil((1-alpha)*N) for integer N
    k = n - int(math.floor(alpha * n + 1e-9))
    order = np.argsort(losses, kind="stable")
    return np.sort(order[:k])


# --- separation hinge ---------------------------------------------------------

def _hinge_rows(values: np.ndarray, params: SeparationParams,
                reach: float | None = None) -> np.ndarray:
    dist = np.abs(values - params.delta)
    if reach is not None:
        dist = np.minimum(dist, reach)
    return np.where(np.abs(values - params.delta) > params.margin, -dist, 0.0)


def _hinge_grad_rows(values: np.ndarray, params: SeparationParams,
                     reach: float | None = None) -> np.ndarray:
    diff = values - params.delta
    active = np.abs(diff) > params.margin
    if reach is not None:
        active = active & (np.abs(diff) < reach)
    return np.where(active, -np.sign(diff), 0.0)


def separation_loss(p1: np.ndarray, p2: np.ndarray, params: SeparationParams,
                    use_crs: bool = True, use_ent: bool = True,
                    ent_sign: float = 1.0, reach: float | None = None) -> float:
    """Batch-mean dead-band hinge on per-sample crs and ent.

    Values inside [delta - margin, delta + margin] contribute nothing;
    minimizing pushes values already outside the band further away from
    delta.  ``ent_sign=-1`` flips the ent branch, turning the banded joint
    divergence into the banded agreement divergence.  A finite ``reach``
    saturates the hinge at that distance from delta, so samples already
    far outside the band stop being pushed (keeps the optimization away
    from the probability clamp).
    """
    p1, p2 = _check_pair(p1, p2)
    total = np.zeros(p1.shape[0])
    if use_crs:
        total = total + _hinge_rows(crs_rows(p1, p2), params, reach)
    if use_ent:
        total = total + ent_sign * _hinge_rows(ent_rows(p1, p2), params, reach)
    return float(total.mean())


def separation_loss_grad(p1: np.ndarray, p2: np.ndarray, params: SeparationParams,
                         use_crs: bool = True, use_ent: bool = True,
                         ent_sign: float = 1.0, reach: float | None = None
                         ) -> tuple[float, np.ndarray, np.ndarray]:
    p1, p2 = _check_pair(p1, p2)
    n = p1.shape[0]
    value = np.zeros(n)
    dp1 = np.zeros_like(p1)
    dp2 = np.zeros_like(p2)
    if use_crs:
        c = crs_rows(p1, p2)
        value += _hinge_rows(c, params, reach)
        w = _hinge_grad_rows(c, params, reach)[:, None] / n
        g1, g2 = crs_grad_rows(p1, p2)
        dp1 += w * g1
        dp2 += w * g2
    if use_ent:
        e = ent_rows(p1, p2)
        value += ent_sign * _hinge_rows(e, params, reach)
        w = ent_sign * _hinge_grad_rows(e, params, reach)[:, None] / n
        g1, g2 = ent_grad_rows(p1, p2)
        dp1 += w * g1
        dp2 += w * g2
    return float(value.mean()), dp1, dp2


def crs_push_grad(p1: np.ndarray, p2: np.ndarray, cap: float | None = None
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sample crs with gradients for divergence-raising objectives.

    With a finite ``cap``, rows whose crs already exceeds it get zero
    gradient (their rejection is decided; pushing further only saturates
    the heads).  Returns (crs rows, d/dp1, d/dp2) with per-row scaling
    left to the caller.
    """
    c = crs_rows(p1, p2)
    g1, g2 = crs_grad_rows(p1, p2)
    if cap is not None:
        live = (c < cap)[:, None]
        g1 = g1 * live
        g2 = g2 * live
    return c, g1, g2


def common_mask(p1: np.ndarray, p2: np.ndarray, params: SeparationParams) -> np.ndarray:
    """Detected target-common samples: crs strictly below delta - margin."""
    p1, p2 = _check_pair(p1, p2)
    return crs_rows(p1, p2) < (params.delta - params.margin)


def reject_unknown(l_crs: float, delta: float) -> bool:
    """Unknown (target-private) iff the cross divergence strictly exceeds
    delta; a sample exactly at delta counts as known."""
    if not delta > 0:
        raise ConfigError(f"delta must be > 0, got {delta}")
    return l_crs > delta


# --- variant plumbing ----------------------------------------------------------

@dataclass
class VariantPlan:
    """Effective objective set for one method variant."""

    variant: MethodVariant
    alpha: float
    lam: float
    source_only: bool
    sep_enabled: bool
    sep_use_crs: bool
    sep_use_ent: bool
    sep_ent_sign: float
    minimax: bool


def variant_losses(variant: MethodVariant, alpha: float, lam: float) -> VariantPlan:
    """Resolve a variant into the objectives actually trained.

    * source_only: supervised loss on the full source batch, nothing else
    * no_select: alpha forced to 0
    * no_div: lam forced to 0
    * no_crs / no_ent: drop one branch of the separation hinge
    * no_sep: the target separation step becomes a no-op
    * no_minimax: skip the discriminator and alignment steps
    * with_kl: separation uses crs - ent instead of crs + ent
    """
    v = variant
    return VariantPlan(
        variant=v,
        alpha=0.0 if v in (MethodVariant.NO_SELECT, MethodVariant.SOURCE_ONLY) else alpha,
        lam=0.0 if v in (MethodVariant.NO_DIV, MethodVariant.SOURCE_ONLY) else lam,
        source_only=v is MethodVariant.SOURCE_ONLY,
        sep_enabled=v not in (MethodVariant.NO_SEP, MethodVariant.SOURCE_ONLY),
        sep_use_crs=v is not MethodVariant.NO_CRS,
        sep_use_ent=v is not MethodVariant.NO_ENT,
        sep_ent_sign=-1.0 if v is MethodVariant.WITH_KL else 1.0,
        minimax=v not in (MethodVariant.NO_MINIMAX, MethodVariant.SOURCE_ONLY),
    )
