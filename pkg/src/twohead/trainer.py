"""Mini-batch training loop: clean-sample fitting, target separation, and
the discriminator/alignment mini-max game.

Per source/target batch pair the loop runs four phases in order:

  A-1  fit generator + heads on the small-loss subset of the source batch
       (supervised loss plus weighted agreement divergence)
  A-2  push per-sample crs/ent away from the threshold band on the target
       batch (all parameters)
  B    heads only: keep the source subset loss low while raising target
       crs (heads act as a discriminator, generator frozen)
  C    generator only: lower crs on the detected target-common subset,
       repeated n_inner times with the subset re-detected each time

Variants switch phases or terms off; see losses.variant_losses.

Two stabilizers keep the mini-max game away from degenerate saturation
when training small networks from scratch: the divergence-raising flows
(A-2 hinge, B's target term) saturate one extra margin beyond the dead
band, and their gradients carry a balance weight < 1 so the supervised
anchor and the alignment step set the equilibrium.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import losses
from .data import DomainDataset, minibatches
from .errors import ConfigError, NonFiniteLossError
from .losses import MethodVariant, SeparationParams, VariantPlan
from .nn import Scope, SgdConfig, TwoHeadModel, backward, forward, init_model, sgd_step
from .rng import derive_seed

HIDDEN_WIDTH = 32
N_HIDDEN_LAYERS = 3

StepHook = Callable[[str, int, TwoHeadModel], None]


@dataclass
class TrainConfig:
    """All training hyperparameters.

    ``delta`` defaults to ln(num classes) when left as None; ``alpha`` is
    the fraction of each source batch dropped by small-loss selection.
    """

    alpha: float = 0.2
    lam: float = 0.1
    delta: float | None = None
    margin: float = 1.0
    n_inner: int = 4
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    minimax_weight: float = 0.2
    batch_size: int = 64
    epochs: int = 400
    seed: int = 7
    variant: MethodVariant = MethodVariant.FULL

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"alpha (drop fraction) must be in [0, 1), got {self.alpha}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.delta is not None and self.delta <= 0:
            raise ConfigError(f"delta must be > 0, got {self.delta}")
        if self.margin < 0:
            raise ConfigError(f"margin must be >= 0, got {self.margin}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.minimax_weight <= 0:
            raise ConfigError(f"minimax_weight must be > 0, got {self.minimax_weight}")
        if self.n_inner < 1:
            raise ConfigError(f"n_inner must be >= 1, got {self.n_inner}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")

    def resolved_delta(self, num_classes: int) -> float:
        return math.log(num_classes) if self.delta is None else self.delta


@dataclass
class TraceRow:
    epoch: int
    step: int
    loss_sup: float
    loss_skld: float
    loss_sep: float
    loss_b: float
    loss_c: float
    clean_fraction_selected: float


@dataclass
class TrainState:
    model: TwoHeadModel
    config: TrainConfig
    delta: float
    step_counter: int = 0
    trace: list[TraceRow] = field(default_factory=list)
    step_log: list[str] = field(default_factory=list)

    def epoch_means(self, column: str) -> np.ndarray:
        epochs = max(r.epoch for r in self.trace) + 1
        out = np.zeros(epochs)
        for e in range(epochs):
            vals = [getattr(r, column) for r in self.trace if r.epoch == e]
            out[e] = float(np.mean(vals))
        return out

    def trace_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "step", "loss_sup", "loss_skld", "loss_sep",
                             "loss_b", "loss_c", "clean_fraction_selected"])
            for r in self.trace:
                writer.writerow([r.epoch, r.step, repr(r.loss_sup), repr(r.loss_skld),
                                 repr(r.loss_sep), repr(r.loss_b), repr(r.loss_c),
                                 repr(r.clean_fraction_selected)])


def _check_finite(value: float, step: str, epoch: int) -> float:
    if not math.isfinite(value):
        raise NonFiniteLossError(step=step, epoch=epoch, value=value)
    return value


@dataclass
class A1Result:
    loss: float
    sup: float
    skld: float
    selected: np.ndarray


def step_a1(model: TwoHeadModel, x: np.ndarray, y_obs: np.ndarray,
            plan: VariantPlan, sgd: SgdConfig) -> A1Result:
    """Small-loss selection plus one full-network update on the selected
    subset.  Source-only training uses the plain supervised loss on the
    whole batch."""
    p1, p2, cache = forward(model, x)
    if plan.source_only:
        selected = np.arange(len(x))
    else:
        _, per_sample = losses.source_loss(p1, p2, y_obs, plan.lam)
        selected = losses.small_loss_select(per_sample, plan.alpha)

    value, dp1, dp2 = losses.source_loss_grad(p1, p2, y_obs, plan.lam, rows=selected)
    sup = losses.supervised_loss(p1[selected], p2[selected], y_obs[selected])
    agreement = losses.skld(p1[selected], p2[selected])
    backward(model, cache, dp1, dp2)
    sgd_step(model, sgd, Scope.ALL)
    return A1Result(loss=value, sup=sup, skld=agreement, selected=selected)


def step_a2(model: TwoHeadModel, x_t: np.ndarray, sep: SeparationParams,
            plan: VariantPlan, sgd: SgdConfig,
            reach: float | None = None, weight: float = 1.0) -> float:
    """Full-network update on the target separation hinge, weighted by
    ``weight``.  A batch whose gradient vanishes (everything inside the
    band, or the separation variant is off) leaves the parameters
    untouched.  The returned value is the unweighted hinge loss."""
    if not plan.sep_enabled:
        return 0.0
    p1, p2, cache = forward(model, x_t)
    value, dp1, dp2 = losses.separation_loss_grad(
        p1, p2, sep, use_crs=plan.sep_use_crs, use_ent=plan.sep_use_ent,
        ent_sign=plan.sep_ent_sign, reach=reach)
    if np.any(dp1) or np.any(dp2):
        backward(model, cache, weight * dp1, weight * dp2)
        sgd_step(model, sgd, Scope.ALL)
    return value


def step_b(model: TwoHeadModel, x_sel: np.ndarray, y_sel: np.ndarray,
           x_t: np.ndarray, plan: VariantPlan, sgd: SgdConfig,
           cap: float | None = None, weight: float = 1.0) -> float:
    """Heads-only discriminator update: keep the selected source loss low
    while raising the mean target crs (``weight`` times).  The generator
    stays bit-identical.  Target rows whose crs already exceeds ``cap``
    stop contributing gradient (their rejection is decided)."""
    ps1, ps2, cache_s = forward(model, x_sel)
    val_s, dps1, dps2 = losses.source_loss_grad(ps1, ps2, y_sel, plan.lam)
    backward(model, cache_s, dps1, dps2)

    pt1, pt2, cache_t = forward(model, x_t)
    crs_t, g1, g2 = losses.crs_push_grad(pt1, pt2, cap=cap)
    n = len(x_t)
    backward(model, cache_t, -weight * g1 / n, -weight * g2 / n)

    sgd_step(model, sgd, Scope.HEADS_ONLY)
    return val_s - float(crs_t.mean())


def step_c(model: TwoHeadModel, x_t: np.ndarray, sep: SeparationParams,
           sgd: SgdConfig, n_inner: int) -> list[float]:
    """Generator-only alignment: lower mean crs over the detected
    target-common subset.  Repeated n_inner times, re-detecting the subset
    each time; an empty subset skips that repeat."""
    out = []
    for _ in range(n_inner):
        p1, p2, cache = forward(model, x_t)
        mask = losses.common_mask(p1, p2, sep)
        if not mask.any():
            continue
        rows = np.flatnonzero(mask)
        crs = losses.crs_rows(p1, p2)
        value = float(crs[rows].mean())
        g1, g2 = losses.crs_grad_rows(p1, p2)
        dp1 = np.zeros_like(p1)
        dp2 = np.zeros_like(p2)
        dp1[rows] = g1[rows] / len(rows)
        dp2[rows] = g2[rows] / len(rows)
        backward(model, cache, dp1, dp2)
        sgd_step(model, sgd, Scope.GENERATOR_ONLY)
        out.append(value)
    return out


def train(source: DomainDataset, target: DomainDataset, config: TrainConfig,
          step_hook: StepHook | None = None) -> TrainState:
    """Run the full procedure; deterministic given (datasets, config)."""
    if source.features.shape[1] != target.features.shape[1]:
        raise ConfigError("source and target feature dimensions differ")
    if source.observed_labels is None:
        raise ConfigError("source dataset has no observed labels")

    n_classes = source.num_model_classes
    if n_classes < 2:
        raise ConfigError(f"need >= 2 source classes, got {n_classes}")
    delta = config.resolved_delta(n_classes)
    sep = SeparationParams(delta=delta, margin=config.margin)
    # divergence-raising flows saturate once a sample is rejected with a
    # full extra margin; keeps the mini-max game off the probability clamp
    push_reach = 2.0 * config.margin
    push_cap = delta + 2.0 * config.margin
    plan = losses.variant_losses(config.variant, config.alpha, config.lam)
    sgd = SgdConfig(learning_rate=config.learning_rate, momentum=config.momentum,
                    weight_decay=config.weight_decay)

    widths = [source.features.shape[1]] + [HIDDEN_WIDTH] * N_HIDDEN_LAYERS
    model = init_model(widths, n_classes, derive_seed(config.seed, "model"))
    state = TrainState(model=model, config=config, delta=delta)

    seed_src = derive_seed(config.seed, "batch-source")
    seed_tgt = derive_seed(config.seed, "batch-target")
    clean = source.observed_labels == source.true_labels

    def fire(step_name: str, epoch: int):
        state.step_log.append(step_name)
        if step_hook is not None:
            step_hook(step_name, epoch, model)

    for epoch in range(config.epochs):
        src_batches = minibatches(source, config.batch_size, seed_src, epoch)
        tgt_batches = minibatches(target, config.batch_size, seed_tgt, epoch)
        for src_idx, tgt_idx in zip(src_batches, tgt_batches):
            x_s = source.features[src_idx]
            y_s = source.observed_labels[src_idx]
            x_t = target.features[tgt_idx]

            a1 = step_a1(model, x_s, y_s, plan, sgd)
            _check_finite(a1.loss, "A-1", epoch)
            fire("A-1", epoch)

            loss_sep = 0.0
            if plan.sep_enabled and not plan.source_only:
                loss_sep = step_a2(model, x_t, sep, plan, sgd, reach=push_reach,
                                   weight=config.minimax_weight)
                _check_finite(loss_sep, "A-2", epoch)
                fire("A-2", epoch)

            loss_b = 0.0
            loss_c = 0.0
            if plan.minimax and not plan.source_only:
                loss_b = step_b(model, x_s[a1.selected], y_s[a1.selected],
                                x_t, plan, sgd, cap=push_cap,
                                weight=config.minimax_weight)
                _check_finite(loss_b, "B", epoch)
                fire("B", epoch)

                c_values = step_c(model, x_t, sep, sgd, config.n_inner)
                for v in c_values:
                    _check_finite(v, "C", epoch)
                for _ in range(config.n_inner):
                    fire("C", epoch)
                loss_c = float(np.mean(c_values)) if c_values else 0.0

            clean_frac = float(clean[src_idx][a1.selected].mean())
            state.trace.append(TraceRow(
                epoch=epoch, step=state.step_counter,
                loss_sup=a1.sup, loss_skld=a1.skld, loss_sep=loss_sep,
                loss_b=loss_b, loss_c=loss_c,
                clean_fraction_selected=clean_frac))
            state.step_counter += 1
    return state
