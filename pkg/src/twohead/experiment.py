"""Experiment orchestration: config parsing, single runs, ablation suites,
hyperparameter sweeps, and artifact emission.

All artifacts are written atomically (temp file in the same directory,
then rename), so an interrupted run never leaves a partial file under the
final name.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from . import __version__
from .data import NoiseKind, NoiseSpec, build_toy_scenario, dataset_to_csv
from .errors import ConfigError
from .evaluation import boundary_grid, density_to_csv, evaluate, write_boundary_svg
from .losses import MethodVariant
from .nn import save_model_csv
from .trainer import TrainConfig, train

TOY_BOUNDS = ((-10.0, 14.0), (-12.0, 10.0))
DEFAULT_GRID_RESOLUTION = 120

SWEEPABLE = {
    "alpha": (0.0, 1.0, False),     # [lo, hi), float
    "lambda": (0.0, None, False),
    "delta": (0.0, None, False),    # exclusive lower bound handled below
    "margin": (0.0, None, False),
    "n_inner": (1, None, True),     # int
}


@dataclass
class ExperimentSpec:
    """One experiment: scenario settings plus a full training config."""

    preset: str = "toy"
    noise_kind: NoiseKind = NoiseKind.SYMMETRIC_FLIP
    noise_rate: float = 0.2
    samples_per_class: int = 300
    stddev: float = 1.0
    train: TrainConfig = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.preset != "toy":
            raise ConfigError(f"preset: only 'toy' is supported, got {self.preset!r}")
        if self.train is None:
            self.train = TrainConfig()

    def to_dict(self) -> dict:
        t = self.train
        return {
            "preset": self.preset,
            "noise_kind": self.noise_kind.value,
            "noise_rate": self.noise_rate,
            "samples_per_class": self.samples_per_class,
            "stddev": self.stddev,
            "alpha": t.alpha,
            "lambda": t.lam,
            "delta": t.delta,
            "margin": t.margin,
            "n_inner": t.n_inner,
            "learning_rate": t.learning_rate,
            "momentum": t.momentum,
            "weight_decay": t.weight_decay,
            "minimax_weight": t.minimax_weight,
            "batch_size": t.batch_size,
            "epochs": t.epochs,
            "seed": t.seed,
            "variant": t.variant.value,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentSpec":
        known = set(cls.default_dict())
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = cls.default_dict()
        merged.update(raw)

        def field(key, conv):
            try:
                return conv(merged[key])
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: {exc}") from exc

        try:
            train = TrainConfig(
                alpha=field("alpha", float),
                lam=field("lambda", float),
                delta=None if merged["delta"] is None else field("delta", float),
                margin=field("margin", float),
                n_inner=field("n_inner", int),
                learning_rate=field("learning_rate", float),
                momentum=field("momentum", float),
                weight_decay=field("weight_decay", float),
                minimax_weight=field("minimax_weight", float),
                batch_size=field("batch_size", int),
                epochs=field("epochs", int),
                seed=field("seed", int),
                variant=field("variant", MethodVariant),
            )
        except ConfigError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(
            preset=field("preset", str),
            noise_kind=field("noise_kind", NoiseKind),
            noise_rate=field("noise_rate", float),
            samples_per_class=field("samples_per_class", int),
            stddev=field("stddev", float),
            train=train,
        )

    @staticmethod
    def default_dict() -> dict:
        return ExperimentSpec(train=TrainConfig()).to_dict()


@dataclass
class SweepSpec:
    param: str
    values: list
    base: ExperimentSpec

    def __post_init__(self):
        if self.param not in SWEEPABLE:
            raise ConfigError(
                f"param: must be one of {sorted(SWEEPABLE)}, got {self.param!r}")
        if not self.values:
            raise ConfigError("values: need at least one sweep value")
        lo, hi, is_int = SWEEPABLE[self.param]
        for v in self.values:
            if is_int and int(v) != v:
                raise ConfigError(f"values: {self.param} must be an integer, got {v}")
            if self.param == "delta" and v <= 0:
                raise ConfigError(f"values: delta must be > 0, got {v}")
            if v < lo or (hi is not None and v >= hi):
                upper = "inf" if hi is None else hi
                raise ConfigError(
                    f"values: {self.param}={v} outside [{lo}, {upper})")


def atomic_write(path: Path, write_fn) -> None:
    tmp = path.with_name(path.name + ".tmp")
    write_fn(tmp)
    os.replace(tmp, path)


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write(path, lambda tmp: Path(tmp).write_text(text))


@dataclass
class RunSummary:
    variant: str
    avg_accuracy: float
    common_accuracy: float
    unknown_recall: float
    out_dir: str


def run_experiment(spec: ExperimentSpec, out_dir: Path) -> RunSummary:
    """Generate data, train, evaluate, and write all artifacts."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    noise = NoiseSpec(spec.noise_kind, spec.noise_rate)
    source, target = build_toy_scenario(
        spec.train.seed, noise=noise,
        samples_per_class=spec.samples_per_class, stddev=spec.stddev)

    state = train(source, target, spec.train)
    report = evaluate(state.model, target, state.delta)
    grid = boundary_grid(state.model, TOY_BOUNDS, DEFAULT_GRID_RESOLUTION, state.delta)

    atomic_write(out_dir / "loss_trace.csv", state.trace_to_csv)
    atomic_write(out_dir / "eval_report.csv", report.to_csv)
    atomic_write(out_dir / "density.csv", lambda p: density_to_csv(report, p))
    atomic_write(out_dir / "boundary.csv", grid.to_csv)
    atomic_write(out_dir / "boundary.svg",
                 lambda p: write_boundary_svg(grid, p, source=source, target=target))
    atomic_write(out_dir / "model.csv", lambda p: save_model_csv(state.model, p))
    atomic_write(out_dir / "source_data.csv", lambda p: dataset_to_csv(source, p))
    atomic_write(out_dir / "target_data.csv", lambda p: dataset_to_csv(target, p))

    manifest = {"config": spec.to_dict(), "seed": spec.train.seed,
                "build": f"twohead-{__version__}"}
    atomic_write_text(out_dir / "manifest.json",
                      json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunSummary(variant=spec.train.variant.value,
                      avg_accuracy=report.average_accuracy,
                      common_accuracy=report.common_accuracy,
                      unknown_recall=report.unknown_recall,
                      out_dir=str(out_dir))


def _child_run(args: tuple[dict, str]) -> RunSummary:
    raw, out_dir = args
    return run_experiment(ExperimentSpec.from_dict(raw), Path(out_dir))


def _run_many(jobs: int, work: list[tuple[dict, str]]) -> list[RunSummary]:
    if jobs <= 1 or len(work) <= 1:
        return [_child_run(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_child_run, work))


def ablate(base: ExperimentSpec, out_dir: Path, jobs: int = 1) -> list[RunSummary]:
    """Run every method variant on identical data and seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    work = []
    for variant in MethodVariant:
        spec = replace(base, train=replace(base.train, variant=variant))
        work.append((spec.to_dict(), str(out_dir / variant.value)))
    summaries = _run_many(jobs, work)

    def write(pth):
        with open(pth, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["variant", "avg_accuracy", "common_acc", "unknown_recall"])
            for s in summaries:
                writer.writerow([s.variant, repr(s.avg_accuracy),
                                 repr(s.common_accuracy), repr(s.unknown_recall)])

    atomic_write(out_dir / "ablation.csv", write)
    return summaries


def sweep(spec: SweepSpec, out_dir: Path, jobs: int = 1) -> list[RunSummary]:
    """One full run per swept value; everything else fixed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    work = []
    for v in spec.values:
        raw = spec.base.to_dict()
        raw[spec.param] = v
        ExperimentSpec.from_dict(raw)  # validate eagerly, before spawning
        work.append((raw, str(out_dir / f"{spec.param}_{v}")))
    summaries = _run_many(jobs, work)

    def write(pth):
        with open(pth, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["param", "value", "avg_accuracy"])
            for v, s in zip(spec.values, summaries):
                writer.writerow([spec.param, v, repr(s.avg_accuracy)])

    atomic_write(out_dir / "sweep.csv", write)
    return summaries
