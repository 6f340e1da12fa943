"""Incremental softmax classifiers with exact FLOP accounting.

Two architectures: a plain logistic (softmax) head, and a one-hidden-layer
tanh MLP. Weights live in one flat float64 vector so pathway masks, the
regularizer, and checkpoints can treat every model uniformly.

Flat layout (row-major):
  LOGISTIC: W [n_classes x d_in], b [n_classes]
  MLP:      W1 [hidden x d_in], b1 [hidden], W2 [n_classes x hidden], b2 [n_classes]

FLOP convention: 2 FLOPs per trainable coordinate per sample on the forward
pass (one multiply, one add), backward twice the forward. This is a declared
cost model, not a measurement; it is a pure function of (architecture,
pathway_mask) so ledgers stay reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import IntEnum
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .errors import RejectedInputError
from .samples import LabeledSample

logger = logging.getLogger(__name__)

WEIGHT_INIT_SCALE = 0.1  # seeded uniform init in [-WEIGHT_INIT_SCALE, +WEIGHT_INIT_SCALE]
DEFAULT_REG_SCALE = 1.0  # unit scale for the squared-L2 footprint regularizer


class Architecture(IntEnum):
    LOGISTIC = 0
    MLP = 1


def weight_count(architecture: Architecture, d_in: int, n_classes: int, hidden_width: int = 0) -> int:
    if architecture is Architecture.LOGISTIC:
        return d_in * n_classes + n_classes
    return hidden_width * d_in + hidden_width + n_classes * hidden_width + n_classes


@dataclass(frozen=True)
class FlopProfile:
    """Per-sample forward/backward FLOPs for the trainable portion."""

    forward_per_sample: int
    backward_per_sample: int

    @property
    def per_sample(self) -> int:
        return self.forward_per_sample + self.backward_per_sample


@dataclass(frozen=True, eq=False)
class ModelState:
    """Immutable versioned parameter vector plus pathway metadata.

    Updates never mutate in place; they return a fresh state with
    ``version + 1``. Arrays are flagged read-only on construction.
    """

    version: int
    weights: np.ndarray
    architecture: Architecture
    d_in: int
    n_classes: int
    hidden_width: int = 0
    pathway_mask: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        expected = weight_count(self.architecture, self.d_in, self.n_classes, self.hidden_width)
        if w.shape != (expected,):
            raise RejectedInputError(
                f"weights shape {w.shape} does not match architecture (expected ({expected},))"
            )
        if not np.all(np.isfinite(w)):
            raise RejectedInputError("weights must be finite")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        mask = self.pathway_mask
        mask = np.ones(expected, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).copy()
        if mask.shape != (expected,):
            raise RejectedInputError("pathway_mask length must match weight vector")
        mask.setflags(write=False)
        object.__setattr__(self, "pathway_mask", mask)
        if self.architecture is Architecture.LOGISTIC and self.hidden_width != 0:
            raise RejectedInputError("logistic models have hidden_width 0")
        if self.architecture is Architecture.MLP and self.hidden_width < 1:
            raise RejectedInputError("MLP needs hidden_width >= 1")

    @cached_property
    def flop_profile(self) -> FlopProfile:
        trainable = int(np.count_nonzero(self.pathway_mask))
        fwd = 2 * trainable
        return FlopProfile(forward_per_sample=fwd, backward_per_sample=2 * fwd)

    def unpack(self):
        """Views into the flat vector: (W, b) or (W1, b1, W2, b2)."""
        d, c, h = self.d_in, self.n_classes, self.hidden_width
        w = self.weights
        if self.architecture is Architecture.LOGISTIC:
            return w[: d * c].reshape(c, d), w[d * c :]
        o1, o2, o3 = h * d, h * d + h, h * d + h + c * h
        return (w[:o1].reshape(h, d), w[o1:o2], w[o2:o3].reshape(c, h), w[o3:])


@dataclass(frozen=True, eq=False)
class Batch:
    """Non-empty list of labeled samples for one task."""

    samples: tuple[LabeledSample, ...]
    task_id: int

    def __post_init__(self):
        samples = tuple(self.samples)
        if not samples:
            raise RejectedInputError("batch must be non-empty")
        d = samples[0].features.shape[0]
        if any(s.features.shape[0] != d for s in samples):
            raise RejectedInputError("all feature vectors in a batch must share dimension")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def d_in(self) -> int:
        return self.samples[0].features.shape[0]

    @cached_property
    def X(self) -> np.ndarray:
        x = np.stack([s.features for s in self.samples])
        x.setflags(write=False)
        return x

    @cached_property
    def y(self) -> np.ndarray:
        y = np.array([s.label for s in self.samples], dtype=np.int64)
        y.setflags(write=False)
        return y

    @cached_property
    def sample_weights(self) -> np.ndarray:
        w = np.array([s.weight for s in self.samples], dtype=np.float64)
        w.setflags(write=False)
        return w


@dataclass(frozen=True)
class LossReport:
    """Mean cross-entropy (nats) and argmax accuracy over a batch."""

    mean_loss: float
    accuracy: float
    n: int

    def __post_init__(self):
        if self.mean_loss < 0 or not (0.0 <= self.accuracy <= 1.0):
            raise RejectedInputError("loss must be >= 0 and accuracy in [0, 1]")


@dataclass(frozen=True)
class UpdateConfig:
    """Hyperparameters for one incremental update.

    ``pathway_mask`` overrides the model's stored mask for this update and
    becomes the returned state's mask. ``loss_increase_tol`` only controls
    the monitoring warning, never the update itself.
    """

    learning_rate: float
    epochs: int = 1
    pathway_mask: np.ndarray | None = None
    loss_increase_tol: float = 1e-6

    def __post_init__(self):
        if self.learning_rate < 0:
            raise RejectedInputError("learning rate must be >= 0")
        if self.epochs < 1:
            raise RejectedInputError("epochs must be >= 1")


@dataclass(frozen=True)
class UpdateResult:
    model: ModelState
    flops: int
    loss_before: float
    loss_after: float
    error: str | None = None


def init_model(
    architecture: Architecture,
    d_in: int,
    n_classes: int,
    hidden_width: int = 0,
    seed: int = 0,
    zero: bool = False,
) -> ModelState:
    """Fresh version-0 model with deterministic seeded uniform weights."""
    n = weight_count(architecture, d_in, n_classes, hidden_width)
    if zero:
        w = np.zeros(n)
    else:
        rng = np.random.default_rng(seed)
        w = rng.uniform(-WEIGHT_INIT_SCALE, WEIGHT_INIT_SCALE, size=n)
    return ModelState(
        version=0,
        weights=w,
        architecture=architecture,
        d_in=d_in,
        n_classes=n_classes,
        hidden_width=hidden_width,
    )


def output_layer_mask(model: ModelState) -> np.ndarray | None:
    """Shallow-pathway mask unlocking only the output layer.

    Meaningful for the MLP; a logistic model is all output layer, so there
    is no cheaper pathway and the result is None.
    """
    if model.architecture is Architecture.LOGISTIC:
        return None
    d, c, h = model.d_in, model.n_classes, model.hidden_width
    mask = np.zeros(model.weights.shape[0], dtype=bool)
    mask[h * d + h :] = True
    return mask


def _forward(model: ModelState, X: np.ndarray):
    """Logits and hidden activations (None for logistic)."""
    if model.architecture is Architecture.LOGISTIC:
        W, b = model.unpack()
        return X @ W.T + b, None
    W1, b1, W2, b2 = model.unpack()
    H = np.tanh(X @ W1.T + b1)
    return H @ W2.T + b2, H


def _softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=-1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=-1, keepdims=True)


def predict_proba(model: ModelState, x: np.ndarray) -> np.ndarray:
    """Class probabilities for one feature vector (softmax of logits)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.d_in,):
        raise RejectedInputError(f"input dimension {x.shape} does not match d_in={model.d_in}")
    if not np.all(np.isfinite(x)):
        raise RejectedInputError("input features must be finite")
    return predict_proba_batch(model, x[None, :])[0]

def predict_proba_batch(model: ModelState, X: np.ndarray) -> np.ndarray:
    """Row-wise class probabilities for an [n x d_in] feature matrix."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.d_in:
        raise RejectedInputError(f"input shape {X.shape} does not match d_in={model.d_in}")
    Z, _ = _forward(model, X)
    return _softmax(Z)


def _loss_and_grad(model: ModelState, batch: Batch):
    """Weighted mean cross-entropy and its gradient as a flat vector.

    Weighted mean is normalized by the sum of sample weights, so uniform
    weights reduce to the plain batch mean.
    """
    X, y, sw = batch.X, batch.y, batch.sample_weights
    if int(y.max()) >= model.n_classes:
        raise RejectedInputError("label out of range for model's class count")
    n = X.shape[0]
    Z, H = _forward(model, X)
    P = _softmax(Z)
    wsum = sw.sum()
    loss = float(-(sw * np.log(P[np.arange(n), y])).sum() / wsum)

    dZ = P.copy()
    dZ[np.arange(n), y] -= 1.0
    dZ *= (sw / wsum)[:, None]
    if model.architecture is Architecture.LOGISTIC:
        gW = dZ.T @ X
        gb = dZ.sum(axis=0)
        grad = np.concatenate([gW.ravel(), gb])
    else:
        W1, b1, W2, b2 = model.unpack()
        gW2 = dZ.T @ H
        gb2 = dZ.sum(axis=0)
        dH = dZ @ W2
        dA = dH * (1.0 - H * H)
        gW1 = dA.T @ X
        gb1 = dA.sum(axis=0)
        grad = np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])
    return loss, grad


def evaluate(model: ModelState, batch: Batch) -> LossReport:
    """Unweighted mean cross-entropy (nats) and accuracy on a batch.

    Accuracy ties break toward the lowest class index (argmax semantics).
    """
    if batch.d_in != model.d_in:
        raise RejectedInputError("batch dimension does not match model")
    P = predict_proba_batch(model, batch.X)
    y = batch.y
    if int(y.max()) >= model.n_classes:
        raise RejectedInputError("label out of range for model's class count")
    n = len(batch)
    losses = -np.log(P[np.arange(n), y])
    acc = float(np.mean(P.argmax(axis=1) == y))
    return LossReport(mean_loss=float(losses.mean()), accuracy=acc, n=n)


def update_flops(model: ModelState, mask: np.ndarray, batch_size: int, epochs: int) -> int:
    trainable = int(np.count_nonzero(mask))
    fwd = 2 * trainable
    return epochs * batch_size * (fwd + 2 * fwd)


def update(model: ModelState, batch: Batch, config: UpdateConfig) -> UpdateResult:
    """One incremental update: ``epochs`` full-batch SGD steps.

    Only mask-true coordinates move; the rest stay bit-identical. A
    non-finite gradient aborts the whole update and hands back the
    unchanged model with an error tag instead of raising.
    """
    if batch.d_in != model.d_in:
        raise RejectedInputError("batch dimension does not match model")
    mask = model.pathway_mask if config.pathway_mask is None else np.asarray(config.pathway_mask, dtype=bool)
    if mask.shape != model.weights.shape:
        raise RejectedInputError("pathway_mask length must match weight vector")

    w = model.weights.copy()
    work = replace(model, weights=w, pathway_mask=mask, version=model.version)
    loss_before, _ = _loss_and_grad(work, batch)
    loss_after = loss_before
    for _ in range(config.epochs):
        _, grad = _loss_and_grad(work, batch)
        if not np.all(np.isfinite(grad)):
            logger.error("non-finite gradient; update aborted at version %d", model.version)
            return UpdateResult(
                model=model, flops=0, loss_before=loss_before, loss_after=loss_before,
                error="non_finite_gradient",
            )
        w = w.copy()
        w[mask] -= config.learning_rate * grad[mask]
        work = replace(work, weights=w)
        loss_after, _ = _loss_and_grad(work, batch)

    if loss_after > loss_before + config.loss_increase_tol:
        logger.warning(
            "training loss rose %.6f -> %.6f over %d epoch(s) (lr=%g)",
            loss_before, loss_after, config.epochs, config.learning_rate,
        )
    new_model = replace(model, weights=w, pathway_mask=mask, version=model.version + 1)
    flops = update_flops(model, mask, len(batch), config.epochs)
    return UpdateResult(model=new_model, flops=flops, loss_before=loss_before, loss_after=loss_after)


def regularizer(model: ModelState, scale: float = DEFAULT_REG_SCALE) -> float:
    """Footprint penalty: scaled squared L2 norm of the trainable weights.

    Zero iff every trainable weight is zero. ``scale`` defaults to the
    documented unit constant; callers may tie it to the FLOP profile to
    penalize energy footprint more aggressively.
    """
    w = model.weights[model.pathway_mask]
    return float(scale * np.dot(w, w))


def meta_init(
    task_sampler: Iterator[Batch],
    steps: int,
    inner_lr: float,
    outer_lr: float,
    *,
    template: ModelState,
    inner_epochs: int = 1,
) -> ModelState:
    """Reptile-style meta-initialization at toy scale.

    Each step adapts a copy of the current init on one sampled task batch
    (``inner_epochs`` SGD steps), then interpolates the init toward the
    adapted weights by ``outer_lr``. Returns a fresh version-0 state
    usable as a warm start.
    """
    if steps < 1:
        raise RejectedInputError("steps must be >= 1")
    it = iter(task_sampler)
    w = template.weights.copy()
    cfg = UpdateConfig(learning_rate=inner_lr, epochs=inner_epochs)
    for _ in range(steps):
        try:
            batch = next(it)
        except StopIteration:
            raise RejectedInputError("task sampler exhausted before requested steps") from None
        if batch.d_in != template.d_in:
            raise RejectedInputError("task batch dimension does not match template model")
        start = replace(template, weights=w)
        result = update(start, batch, cfg)
        if result.error is not None:
            raise NonFiniteMetaStep(result.error)
        w = w + outer_lr * (result.model.weights - w)
    return replace(template, weights=w, version=0)


class NonFiniteMetaStep(RejectedInputError):
    """An inner adaptation step blew up during meta-initialization."""
