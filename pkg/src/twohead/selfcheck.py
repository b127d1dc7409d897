"""Built-in verification suites: loss identities, gradient oracles, and
the selection contract.  The CLI exposes them as ``selftest``; the test
suite reuses them for acceptance checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import losses, nn
from .losses import SeparationParams
from .rng import make_rng


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.detail}"


def check_loss_identities(n_pairs: int = 1000, seed: int = 2024) -> CheckResult:
    """Random probability pairs over 2..20 classes must satisfy
    skld == crs - ent (within 1e-10), joint == crs + ent exactly, and
    ent <= 2 ln C."""
    rng = make_rng(seed, "identities")
    worst_decomp = 0.0
    for i in range(n_pairs):
        c = 2 + i % 19
        p1 = rng.dirichlet(np.ones(c))
        p2 = rng.dirichlet(np.ones(c))
        pair_skld = losses.kl(p1, p2) + losses.kl(p2, p1)
        crs, ent = losses.crs_ent(p1, p2)
        worst_decomp = max(worst_decomp, abs(pair_skld - (crs - ent)))
        if losses.joint_divergence(p1, p2) != crs + ent:
            return CheckResult("loss-identities", False,
                               f"joint divergence != crs + ent at pair {i}")
        if ent > 2.0 * math.log(c) + 1e-12:
            return CheckResult("loss-identities", False,
                               f"ent {ent} exceeds 2 ln {c} at pair {i}")
        if crs < ent:
            return CheckResult("loss-identities", False,
                               f"crs < ent at pair {i}")
    ok = worst_decomp < 1e-10
    return CheckResult("loss-identities", ok,
                       f"{n_pairs} pairs, max |skld - (crs - ent)| = {worst_decomp:.3e}")


def _grad_objectives(num_classes: int, n_samples: int, seed: int):
    """Named (loss_fn, batch-layout) closures covering every training
    objective.  Mixed-batch objectives mark the first ``n_samples`` rows
    as source and the rest as target."""
    rng = make_rng(seed, "gradcheck-labels")
    labels = rng.integers(0, num_classes, size=n_samples)
    sep = SeparationParams(delta=math.log(num_classes), margin=0.35)
    lam = 0.1

    def source_joint(p1, p2):
        return losses.source_loss_grad(p1, p2, labels, lam)

    def supervised_only(p1, p2):
        return losses.source_loss_grad(p1, p2, labels, 0.0)

    def separation_joint(p1, p2):
        return losses.separation_loss_grad(p1, p2, sep)

    def separation_kl(p1, p2):
        return losses.separation_loss_grad(p1, p2, sep, ent_sign=-1.0)

    def separation_crs_only(p1, p2):
        return losses.separation_loss_grad(p1, p2, sep, use_ent=False)

    def separation_ent_only(p1, p2):
        return losses.separation_loss_grad(p1, p2, sep, use_crs=False)

    def separation_off(p1, p2):
        return 0.0, np.zeros_like(p1), np.zeros_like(p2)

    def separation_saturated(p1, p2):
        return losses.separation_loss_grad(p1, p2, sep, reach=2.0 * sep.margin)

    def discriminator(p1, p2):
        # first half source rows with the joint loss, second half target
        # rows entering negatively through their mean crs
        src = np.arange(n_samples)
        tgt = np.arange(n_samples, p1.shape[0])
        val_s, d1, d2 = losses.source_loss_grad(p1, p2, _pad_labels(labels, p1), rows=src, lam=lam)
        crs = losses.crs_rows(p1[tgt], p2[tgt])
        g1, g2 = losses.crs_grad_rows(p1[tgt], p2[tgt])
        d1[tgt] -= g1 / len(tgt)
        d2[tgt] -= g2 / len(tgt)
        return val_s - float(crs.mean()), d1, d2

    def discriminator_capped(p1, p2):
        src = np.arange(n_samples)
        tgt = np.arange(n_samples, p1.shape[0])
        cap = sep.delta + 2.0 * sep.margin
        val_s, d1, d2 = losses.source_loss_grad(p1, p2, _pad_labels(labels, p1), rows=src, lam=lam)
        crs, g1, g2 = losses.crs_push_grad(p1[tgt], p2[tgt], cap=cap)
        d1[tgt] -= g1 / len(tgt)
        d2[tgt] -= g2 / len(tgt)
        return val_s - float(np.minimum(crs, cap).mean()), d1, d2

    def alignment(p1, p2):
        rows = np.arange(0, p1.shape[0], 2)  # fixed detected-common subset
        crs = losses.crs_rows(p1, p2)
        g1, g2 = losses.crs_grad_rows(p1, p2)
        d1 = np.zeros_like(p1)
        d2 = np.zeros_like(p2)
        d1[rows] = g1[rows] / len(rows)
        d2[rows] = g2[rows] / len(rows)
        return float(crs[rows].mean()), d1, d2

    single = [("source-joint", source_joint),
              ("supervised-only", supervised_only),
              ("separation-joint", separation_joint),
              ("separation-kl", separation_kl),
              ("separation-crs-only", separation_crs_only),
              ("separation-ent-only", separation_ent_only),
              ("separation-saturated", separation_saturated),
              ("separation-off", separation_off)]
    mixed = [("discriminator", discriminator),
             ("discriminator-capped", discriminator_capped),
             ("alignment", alignment)]
    return single, mixed, sep


def _pad_labels(labels: np.ndarray, p1: np.ndarray) -> np.ndarray:
    out = np.zeros(p1.shape[0], dtype=np.int64)
    out[:len(labels)] = labels
    return out


def _hinge_gap(p1, p2, sep: SeparationParams) -> float:
    """Distance of every per-sample crs/ent value from the nearest hinge
    kink (band edge or saturation radius); finite differences need this
    to stay clear of zero."""
    vals = np.concatenate([losses.crs_rows(p1, p2), losses.ent_rows(p1, p2)])
    dist = np.abs(vals - sep.delta)
    gap_band = np.abs(dist - sep.margin).min()
    gap_reach = np.abs(dist - 2.0 * sep.margin).min()
    return float(min(gap_band, gap_reach))


def check_gradients(seed: int = 11, tol: float = 1e-4, h: float = 1e-5
                    ) -> list[CheckResult]:
    """Finite-difference oracle over every training objective on a small
    two-head network and a 4-sample batch."""
    num_classes = 3
    n = 4
    rng = make_rng(seed, "gradcheck-data")
    x_src = rng.normal(scale=1.5, size=(n, 2))
    x_tgt = rng.normal(scale=1.5, size=(n, 2)) + 2.0
    single, mixed, sep = _grad_objectives(num_classes, n, seed)

    model = nn.init_model([2, 8, 8, 8], num_classes, seed=seed)
    p1, p2, _ = nn.forward(model, x_src)
    gap = _hinge_gap(p1, p2, sep)
    results = []
    if gap < 1e-3:
        results.append(CheckResult("gradient-setup", False,
                                   f"hinge kink too close to a sample ({gap:.2e})"))
        return results

    for name, fn in single:
        report = nn.grad_check(model, fn, x_src, h=h, tol=tol)
        results.append(CheckResult(
            f"grad-{name}", report.passed,
            f"max rel err {report.max_rel_error:.3e} (worst {report.worst_param or 'n/a'})"))
    both = np.vstack([x_src, x_tgt])
    for name, fn in mixed:
        report = nn.grad_check(model, fn, both, h=h, tol=tol)
        results.append(CheckResult(
            f"grad-{name}", report.passed,
            f"max rel err {report.max_rel_error:.3e} (worst {report.worst_param or 'n/a'})"))
    return results


def check_selection_contract(n_vectors: int = 10000, seed: int = 5) -> CheckResult:
    """Random loss vectors: exactly ceil((1-alpha) N) survivors and no
    selected loss above an unselected one."""
    rng = make_rng(seed, "selection")
    for i in range(n_vectors):
        n = int(rng.integers(1, 65))
        alpha = float(rng.random())
        vec = rng.normal(size=n)
        sel = losses.small_loss_select(vec, alpha)
        expect = math.ceil((1.0 - alpha) * n)
        if len(sel) != expect:
            return CheckResult("selection-contract", False,
                               f"vector {i}: kept {len(sel)}, expected {expect}")
        rest = np.setdiff1d(np.arange(n), sel)
        if rest.size and vec[sel].max() > vec[rest].min():
            return CheckResult("selection-contract", False,
                               f"vector {i}: selected loss above unselected")
    return CheckResult("selection-contract", True, f"{n_vectors} random vectors")


def run_selftest(verbose: bool = True) -> bool:
    results = [check_loss_identities()]
    results.extend(check_gradients())
    results.append(check_selection_contract())
    for r in results:
        if verbose:
            print(r.line())
    return all(r.passed for r in results)
