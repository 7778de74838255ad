"""Marker-quadrant toy task: position interactions are necessary, content is not.

One marker cell lights up on an H x W grid (uniformly at random); the label is
the marker's quadrant.  The model is a single lambda layer over the flattened
grid, mean-pooled over positions, followed by a linear classifier.  Inputs
carry two channels: a constant bias plane and the marker indicator.

Mean pooling makes the content-only claim provable rather than empirical:
relocating the marker permutes input rows, the content lambda and the pooled
query are permutation-invariant, so the pooled logits cannot depend on the
marker location.  ``pooled_logits_exact`` evaluates that path with exactly
rounded (order-invariant) reductions, making the invariance hold bitwise; the
training path uses the fast kernels.  Position lambdas see the marker's
offsets to every query position, which is linearly sufficient for quadrants,
so full and position-only training succeed while content-only stays at
chance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grad import backward
from .layer import LambdaConfig, init_params, _forward
from .relpos import grid
from .rng import DEFAULT_SEED, stream
from .tensor import contract, softmax

MODES = ("full", "content-only", "position-only")
_MODE_KEY = {"full": "full", "content-only": "content", "position-only": "position"}


@dataclass(frozen=True)
class ToyTaskSpec:
    height: int = 8
    width: int = 8
    train_size: int = 512
    test_size: int = 256
    steps: int = 800
    batch_size: int = 32
    lr: float = 0.15
    k: int = 8
    h: int = 2
    d_model: int = 8
    eval_every: int = 100

    @property
    def classes(self) -> int:
        return 4

    @property
    def positions(self) -> int:
        return self.height * self.width


def quadrant_label(spec: ToyTaskSpec, cell: int) -> int:
    row, col = divmod(cell, spec.width)
    return (row >= spec.height // 2) * 2 + (col >= spec.width // 2)


def make_inputs(spec: ToyTaskSpec, cells: np.ndarray) -> np.ndarray:
    """[len(cells), H*W, 2]: channel 0 constant bias, channel 1 marker."""
    x = np.zeros((len(cells), spec.positions, 2))
    x[:, :, 0] = 1.0
    x[np.arange(len(cells)), cells, 1] = 1.0
    return x


def make_dataset(spec: ToyTaskSpec, seed: int):
    gen = stream(seed, "toy/data")
    train_cells = gen.integers(0, spec.positions, size=spec.train_size)
    test_cells = gen.integers(0, spec.positions, size=spec.test_size)
    labels = np.array([quadrant_label(spec, c) for c in train_cells])
    test_labels = np.array([quadrant_label(spec, c) for c in test_cells])
    return (make_inputs(spec, train_cells), labels, train_cells,
            make_inputs(spec, test_cells), test_labels, test_cells)


@dataclass
class ToyModel:
    spec: ToyTaskSpec
    config: LambdaConfig
    params: object
    w_cls: np.ndarray
    b_cls: np.ndarray
    mode: str = "full"


def init_model(spec: ToyTaskSpec, seed: int = DEFAULT_SEED, mode: str = "full") -> ToyModel:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    config = LambdaConfig(
        d_in=2, d_out=spec.d_model, k=spec.k, h=spec.h,
        geometry=grid(spec.height, spec.width),
    )
    params = init_params(config, seed)
    w_cls = stream(seed, "toy/classifier").normal(0.0, 0.1, size=(spec.d_model, spec.classes))
    return ToyModel(spec, config, params, w_cls, np.zeros(spec.classes), mode)


def pooled_logits(model: ToyModel, X: np.ndarray) -> np.ndarray:
    Y = _forward(X, None, model.params, model.config, mode=_MODE_KEY[model.mode])
    pooled = Y.mean(axis=1)
    return pooled @ model.w_cls + model.b_cls


def pooled_logits_exact(model: ToyModel, X: np.ndarray) -> np.ndarray:
    """Content-only pooled logits with order-invariant reductions.

    Every reduction whose summands move under an input-row permutation (the
    softmax normalizer, the content contraction over m, the mean pool over n)
    is exactly rounded, so permuting input rows leaves the result bit-identical.
    """
    p, cfg = model.params, model.config
    q_flat = X @ p.w_q
    b, n, _ = X.shape
    Q = q_flat.reshape(b, n, cfg.h, cfg.k).transpose(0, 2, 1, 3)
    K = X @ p.w_k
    V = X @ p.w_v
    K_norm = softmax(K, axis=1, exact=True)
    lam_c = contract("bmk,bmv->bkv", K_norm, V, exact=True)
    Y = contract("bhnk,bkv->bnhv", Q, lam_c).reshape(b, n, cfg.d_out)
    pooled = np.apply_along_axis(lambda s: math.fsum(s.tolist()), 1, Y) / n
    return pooled @ model.w_cls + model.b_cls


def _cross_entropy(logits, labels):
    probs = softmax(logits, axis=1)
    picked = probs[np.arange(len(labels)), labels]
    with np.errstate(divide="ignore"):  # log(0) -> inf flags divergence upstream
        loss = -np.log(picked).mean()
    return loss, (probs - np.eye(probs.shape[1])[labels]) / len(labels)


def accuracy(model: ToyModel, X, labels) -> float:
    return float((pooled_logits(model, X).argmax(axis=1) == labels).mean())


@dataclass
class ToyRunReport:
    mode: str
    seed: int
    steps: int
    final_train_accuracy: float
    final_test_accuracy: float
    curve: list = field(default_factory=list)  # (step, train_acc, test_acc)
    losses: list = field(default_factory=list)
    diverged: bool = False
    model: ToyModel | None = None


def train(spec: ToyTaskSpec, seed: int = DEFAULT_SEED, mode: str = "full") -> ToyRunReport:
    """Plain SGD on softmax cross-entropy; deterministic per (seed, mode)."""
    model = init_model(spec, seed, mode)
    Xtr, ytr, _, Xte, yte, _ = make_dataset(spec, seed)
    batches = stream(seed, "toy/batches")
    report = ToyRunReport(mode, seed, spec.steps, 0.0, 0.0)
    n = spec.positions
    mode_key = _MODE_KEY[mode]
    for step in range(spec.steps):
        idx = batches.integers(0, spec.train_size, size=spec.batch_size)
        Xb, yb = Xtr[idx], ytr[idx]
        Y = _forward(Xb, None, model.params, model.config, mode=mode_key)
        pooled = Y.mean(axis=1)
        logits = pooled @ model.w_cls + model.b_cls
        loss, dlogits = _cross_entropy(logits, yb)
        if not np.isfinite(loss):
            report.diverged = True
            break
        report.losses.append(float(loss))
        d_w_cls = pooled.T @ dlogits
        d_b_cls = dlogits.sum(axis=0)
        d_pooled = dlogits @ model.w_cls.T
        dY = np.repeat(d_pooled[:, None, :], n, axis=1) / n
        variant = {"full": "global", "content": "content_only", "position": "position_only"}[mode_key]
        g = backward(variant, Xb, None, model.params, model.config, dY)
        p = model.params
        lr = spec.lr
        p.w_q -= lr * g.w_q
        p.w_k -= lr * g.w_k
        p.w_v -= lr * g.w_v
        p.rel -= lr * g.rel
        model.w_cls -= lr * d_w_cls
        model.b_cls -= lr * d_b_cls
        if (step + 1) % spec.eval_every == 0 or step == spec.steps - 1:
            tr = accuracy(model, Xtr, ytr)
            te = accuracy(model, Xte, yte)
            report.curve.append((step + 1, tr, te))
    if report.curve:
        _, report.final_train_accuracy, report.final_test_accuracy = report.curve[-1]
    report.model = model
    return report


def marker_permutation_logit_gap(model: ToyModel, spec: ToyTaskSpec) -> float:
    """Max abs difference of exact content-only pooled logits across all
    marker locations; provably (and bitwise) zero for content-only models."""
    cells = np.arange(spec.positions)
    X = make_inputs(spec, cells)
    logits = pooled_logits_exact(model, X)
    return float(np.abs(logits - logits[0]).max())
