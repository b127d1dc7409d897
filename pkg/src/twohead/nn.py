"""Minimal dense network engine: forward, reverse-mode gradients, momentum SGD.

Everything runs on float64 numpy arrays (shape (rows, cols), row per
sample) so gradient checks and bit-identity tests stay tight.  The model
is one shared feature generator feeding two independently initialized
classifier heads.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, NumericError, UsageError
from .rng import make_rng


class Activation(Enum):
    RELU = "relu"
    IDENTITY = "identity"


class Scope(Enum):
    """Which parameter subset an SGD step may touch."""

    ALL = "all"
    HEADS_ONLY = "heads_only"
    GENERATOR_ONLY = "generator_only"


@dataclass
class SgdConfig:
    learning_rate: float
    momentum: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")


class DenseLayer:
    """Fully connected layer with weight (out, in), bias (out,) and an
    activation.  Gradient and momentum buffers always shape-match the
    parameters."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray, activation: Activation):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionError("weight must be (out, in) and bias (out,)")
        self.activation = activation
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self.vel_weight = np.zeros_like(self.weight)
        self.vel_bias = np.zeros_like(self.bias)

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (activation output, pre-activation); caller keeps the cache."""
        z = x @ self.weight.T + self.bias
        if self.activation is Activation.RELU:
            return np.maximum(z, 0.0), z
        return z, z

    def backward(self, x: np.ndarray, z: np.ndarray, dout: np.ndarray) -> np.ndarray:
        """Accumulate parameter grads for upstream dout; return dX."""
        if self.activation is Activation.RELU:
            dz = dout * (z > 0.0)
        else:
            dz = dout
        self.grad_weight += dz.T @ x
        self.grad_bias += dz.sum(axis=0)
        return dz @ self.weight


FEATURE_SCALE = 10.0  # inverse temperature applied to the unit-norm features


@dataclass
class TwoHeadModel:
    """Shared generator feeding two classifier heads.

    The generator's output is L2-normalized per sample and scaled by
    ``feature_scale`` before entering the heads (normalized-feature
    classifier convention); this bounds attainable confidence by the head
    weight norms instead of the input magnitude.
    """

    generator: list[DenseLayer]
    head1: list[DenseLayer]
    head2: list[DenseLayer]
    num_classes: int
    feature_scale: float = FEATURE_SCALE
    version: int = 0  # bumped on every parameter update; guards stale caches

    @property
    def input_dim(self) -> int:
        return self.generator[0].in_dim

    def named_layers(self) -> Iterator[tuple[str, DenseLayer]]:
        for i, layer in enumerate(self.generator):
            yield f"gen.{i}", layer
        for i, layer in enumerate(self.head1):
            yield f"head1.{i}", layer
        for i, layer in enumerate(self.head2):
            yield f"head2.{i}", layer

    def scope_layers(self, scope: Scope) -> list[DenseLayer]:
        if scope is Scope.ALL:
            return self.generator + self.head1 + self.head2
        if scope is Scope.HEADS_ONLY:
            return self.head1 + self.head2
        return list(self.generator)

    def zero_grads(self) -> None:
        for _, layer in self.named_layers():
            layer.grad_weight[:] = 0.0
            layer.grad_bias[:] = 0.0

    def parameters_blob(self) -> bytes:
        """All parameters as one byte string, for bit-identity checks."""
        return b"".join(
            part.tobytes()
            for _, layer in self.named_layers()
            for part in (layer.weight, layer.bias)
        )


@dataclass
class ForwardCache:
    version: int
    x: np.ndarray
    gen_io: list[tuple[np.ndarray, np.ndarray]]  # (input, pre-activation) per layer
    raw_features: np.ndarray
    feat_norms: np.ndarray
    features: np.ndarray                         # normalized and scaled
    head1_io: list[tuple[np.ndarray, np.ndarray]]
    head2_io: list[tuple[np.ndarray, np.ndarray]]
    p1: np.ndarray
    p2: np.ndarray


def _glorot_layer(rng, in_dim: int, out_dim: int, activation: Activation) -> DenseLayer:
    bound = math.sqrt(6.0 / (in_dim + out_dim))
    w = rng.uniform(-bound, bound, size=(out_dim, in_dim))
    b = np.zeros(out_dim)
    return DenseLayer(w, b, activation)


def _stack(rng, widths: Sequence[int], final_activation: Activation) -> list[DenseLayer]:
    layers = []
    for i in range(len(widths) - 1):
        act = final_activation if i == len(widths) - 2 else Activation.RELU
        layers.append(_glorot_layer(rng, widths[i], widths[i + 1], act))
    return layers


def init_model(layer_widths: Sequence[int], num_classes: int, seed: int) -> TwoHeadModel:
    """Build generator + two heads with Glorot-uniform weights.

    ``layer_widths`` describes the generator (input width first); each head
    mirrors the generator depth at the last hidden width and ends in a
    linear layer with ``num_classes`` outputs.  The two heads draw from
    distinct sub-seed streams so they start different.
    """
    if len(layer_widths) < 2:
        raise ConfigError("layer_widths needs an input width and at least one layer")
    if any(w <= 0 for w in layer_widths):
        raise ConfigError(f"layer widths must be positive, got {list(layer_widths)}")
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")

    feat = layer_widths[-1]
    head_widths = [feat] * len(layer_widths[:-1]) + [num_classes]
    gen = _stack(make_rng(seed, "generator"), layer_widths, Activation.RELU)
    h1 = _stack(make_rng(seed, "head1"), head_widths, Activation.IDENTITY)
    h2 = _stack(make_rng(seed, "head2"), head_widths, Activation.IDENTITY)
    return TwoHeadModel(generator=gen, head1=h1, head2=h2, num_classes=num_classes)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax of a single logit vector."""
    v = np.asarray(logits, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"softmax expects a vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NumericError("softmax input contains NaN/Inf")
    e = np.exp(v - v.max())
    return e / e.sum()


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _run_stack(layers: list[DenseLayer], x: np.ndarray):
    io = []
    out = x
    for layer in layers:
        nxt, z = layer.forward(out)
        io.append((out, z))
        out = nxt
    return out, io


def forward(model: TwoHeadModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Run both heads on a batch; returns class probabilities and a cache
    for ``backward``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionError(
            f"input must be (N, {model.input_dim}), got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise NumericError("forward input contains NaN/Inf")

    raw, gen_io = _run_stack(model.generator, x)
    norms = np.maximum(np.linalg.norm(raw, axis=1, keepdims=True), 1e-12)
    feats = model.feature_scale * raw / norms
    logits1, h1_io = _run_stack(model.head1, feats)
    logits2, h2_io = _run_stack(model.head2, feats)
    p1 = softmax_rows(logits1)
    p2 = softmax_rows(logits2)
    cache = ForwardCache(model.version, x, gen_io, raw, norms, feats,
                         h1_io, h2_io, p1, p2)
    return p1, p2, cache


def _softmax_backward(p: np.ndarray, dp: np.ndarray) -> np.ndarray:
    inner = (dp * p).sum(axis=1, keepdims=True)
    return p * (dp - inner)


def _stack_backward(layers: list[DenseLayer], io, dout: np.ndarray) -> np.ndarray:
    for layer, (x_in, z) in zip(reversed(layers), reversed(io)):
        dout = layer.backward(x_in, z, dout)
    return dout


def backward(model: TwoHeadModel, cache: ForwardCache,
             dp1: np.ndarray, dp2: np.ndarray) -> None:
    """Accumulate d(loss)/d(theta) into grad buffers, given upstream
    gradients on the two probability outputs.  The generator gradient is
    the sum of both heads' contributions."""
    if cache.version != model.version:
        raise UsageError("stale forward cache: parameters changed since forward()")
    if dp1.shape != cache.p1.shape or dp2.shape != cache.p2.shape:
        raise DimensionError("upstream gradient shapes do not match probabilities")

    dz1 = _softmax_backward(cache.p1, dp1)
    dz2 = _softmax_backward(cache.p2, dp2)
    dfeat = _stack_backward(model.head1, cache.head1_io, dz1)
    dfeat = dfeat + _stack_backward(model.head2, cache.head2_io, dz2)
    # through h -> scale * h / ||h||: project out the radial component
    unit = cache.raw_features / cache.feat_norms
    radial = (dfeat * unit).sum(axis=1, keepdims=True)
    draw = model.feature_scale * (dfeat - unit * radial) / cache.feat_norms
    _stack_backward(model.generator, cache.gen_io, draw)


def sgd_step(model: TwoHeadModel, cfg: SgdConfig, scope: Scope = Scope.ALL) -> None:
    """Momentum SGD (with optional L2 weight decay folded into the
    gradient) on the layers in scope; out-of-scope parameters stay
    bit-identical.  All gradient buffers are zeroed afterward."""
    for layer in model.scope_layers(scope):
        layer.vel_weight *= cfg.momentum
        layer.vel_weight += layer.grad_weight
        if cfg.weight_decay:
            layer.vel_weight += cfg.weight_decay * layer.weight
        layer.weight -= cfg.learning_rate * layer.vel_weight
        layer.vel_bias *= cfg.momentum
        layer.vel_bias += layer.grad_bias
        if cfg.weight_decay:
            layer.vel_bias += cfg.weight_decay * layer.bias
        layer.bias -= cfg.learning_rate * layer.vel_bias
    model.zero_grads()
    model.version += 1


# --- gradient verification -------------------------------------------------

LossFn = Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray, np.ndarray]]
# maps (p1, p2) -> (loss value, d loss/d p1, d loss/d p2)

_ZERO_GRAD_FLOOR = 1e-6  # below this magnitude, compare absolutely


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    tol: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = self.max_rel_error < self.tol


def _loss_value(model: TwoHeadModel, loss_fn: LossFn, x: np.ndarray) -> float:
    p1, p2, _ = forward(model, x)
    return loss_fn(p1, p2)[0]


def grad_check(model: TwoHeadModel, loss_fn: LossFn, x: np.ndarray,
               h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients against central finite differences for
    every parameter.

    Entries where both gradients are below 1e-6 in magnitude are compared
    absolutely (the relative measure is meaningless at zero); everything
    else uses |a - n| / max(|a|, |n|).
    """
    if not 0.0 < h <= 1e-3:
        raise ConfigError(f"h must be in (0, 1e-3], got {h}")

    model.zero_grads()
    p1, p2, cache = forward(model, x)
    _, dp1, dp2 = loss_fn(p1, p2)
    backward(model, cache, dp1, dp2)

    worst = 0.0
    worst_param = ""
    for name, layer in model.named_layers():
        for kind, param, grad in (("w", layer.weight, layer.grad_weight),
                                  ("b", layer.bias, layer.grad_bias)):
            flat_p = param.reshape(-1)
            flat_g = grad.reshape(-1)
            for idx in range(flat_p.size):
                orig = flat_p[idx]
                flat_p[idx] = orig + h
                up = _loss_value(model, loss_fn, x)
                flat_p[idx] = orig - h
                down = _loss_value(model, loss_fn, x)
                flat_p[idx] = orig
                numeric = (up - down) / (2.0 * h)
                analytic = flat_g[idx]
                denom = max(abs(analytic), abs(numeric))
                err = abs(analytic - numeric)
                if denom >= _ZERO_GRAD_FLOOR:
                    err /= denom
                if err > worst:
                    worst = err
                    worst_param = f"{name}.{kind}[{idx}]"
    model.zero_grads()
    return GradCheckReport(max_rel_error=worst, worst_param=worst_param, tol=tol)


# --- parameter serialization -------------------------------------------------

def save_model_csv(model: TwoHeadModel, path) -> None:
    """Flat (layer, row, col, value) CSV; bias entries use col = -1."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["layer", "row", "col", "value"])
        for name, layer in model.named_layers():
            for (r, c), v in np.ndenumerate(layer.weight):
                writer.writerow([name, r, c, repr(float(v))])
            for r, v in enumerate(layer.bias):
                writer.writerow([name, r, -1, repr(float(v))])


def load_model_csv(path) -> TwoHeadModel:
    """Rebuild a model from ``save_model_csv`` output.  Layer roles and
    activations are implied by the layer names and positions."""
    entries: dict[str, dict[tuple[int, int], float]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            entries.setdefault(row["layer"], {})[(int(row["row"]), int(row["col"]))] = float(row["value"])

    def build(prefix: str, final_act: Activation) -> list[DenseLayer]:
        names = sorted((n for n in entries if n.startswith(prefix + ".")),
                        key=lambda n: int(n.split(".")[1]))
        if not names:
            raise ConfigError(f"model file has no '{prefix}' layers")
        layers = []
        for i, name in enumerate(names):
            cells = entries[name]
            rows = 1 + max(r for r, _ in cells)
            cols = 1 + max(c for _, c in cells)
            w = np.zeros((rows, cols))
            b = np.zeros(rows)
            for (r, c), v in cells.items():
                if c < 0:
                    b[r] = v
                else:
                    w[r, c] = v
            act = final_act if i == len(names) - 1 else Activation.RELU
            layers.append(DenseLayer(w, b, act))
        return layers

    gen = build("gen", Activation.RELU)
    h1 = build("head1", Activation.IDENTITY)
    h2 = build("head2", Activation.IDENTITY)
    return TwoHeadModel(generator=gen, head1=h1, head2=h2,
                        num_classes=h1[-1].out_dim)
