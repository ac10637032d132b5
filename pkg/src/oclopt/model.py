"""Parametric predictors with exact loss and gradient computation.

Three model kinds keep optimizer behavior testable without an autodiff
framework:

* ``quadratic-probe``: theta itself is the prediction; quadratic loss against
  the observed targets under a fixed diagonal curvature. The regression
  stand-in with fully analytic constants.
* ``linear-softmax``: multinomial logistic regression.
* ``mlp-1-hidden``: one tanh hidden layer + softmax. Smooth everywhere so
  Lipschitz-style assumptions stay globally valid.

Losses are mean per-example loss plus 0.5 * weight_decay * ||theta||^2, and
gradients are exact. Models carry no running statistics, so averaged copies of
parameters need no recomputation of any kind.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class DivergenceError(FloatingPointError):
    """Non-finite parameters or gradients: the optimization diverged."""


@dataclass(frozen=True)
class ParamVector:
    """Flat parameter vector plus a named-block layout.

    Layout maps block name -> (offset, shape); the blocks partition the
    vector. Views returned by ``block`` share memory with ``values``.
    """

    values: np.ndarray
    layout: tuple = ()

    def __post_init__(self):
        if self.values.ndim != 1:
            raise ValueError("ParamVector must be flat")
        covered = 0
        for _, off, shape in self.layout:
            if off != covered:
                raise ValueError("layout blocks must be contiguous from 0")
            covered += int(np.prod(shape))
        if self.layout and covered != self.values.size:
            raise ValueError("layout does not partition the vector")

    @property
    def dim(self) -> int:
        return self.values.size

    def block(self, name: str) -> np.ndarray:
        for n, off, shape in self.layout:
            if n == name:
                return self.values[off: off + int(np.prod(shape))].reshape(shape)
        raise KeyError(name)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)


@dataclass(frozen=True)
class ModelSpec:
    kind: str                       # quadratic-probe | linear-softmax | mlp-1-hidden
    loss: str                       # quadratic | cross-entropy
    weight_decay: float = 0.0
    dim: int = 0                    # quadratic-probe parameter dimension
    curvature: tuple = ()           # quadratic-probe diagonal eigenvalues
    d_in: int = 0
    n_classes: int = 0
    hidden: int = 0

    def __post_init__(self):
        if self.kind == "quadratic-probe":
            if self.loss != "quadratic":
                raise ValueError("quadratic-probe requires quadratic loss")
            if self.dim < 1 or len(self.curvature) != self.dim:
                raise ValueError("quadratic-probe needs dim and matching curvature")
            if min(self.curvature) <= 0:
                raise ValueError("curvature eigenvalues must be positive")
        elif self.kind in ("linear-softmax", "mlp-1-hidden"):
            if self.loss != "cross-entropy":
                raise ValueError(f"{self.kind} requires cross-entropy loss")
            if self.d_in < 1 or self.n_classes < 2:
                raise ValueError("classification models need d_in >= 1 and n_classes >= 2")
            if self.kind == "mlp-1-hidden" and self.hidden < 1:
                raise ValueError("mlp-1-hidden needs hidden >= 1")
        else:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")

    @property
    def classification(self) -> bool:
        return self.kind != "quadratic-probe"

    @property
    def n_params(self) -> int:
        if self.kind == "quadratic-probe":
            return self.dim
        if self.kind == "linear-softmax":
            return self.n_classes * self.d_in + self.n_classes
        return (self.hidden * self.d_in + self.hidden
                + self.n_classes * self.hidden + self.n_classes)

    def param_layout(self) -> tuple:
        if self.kind == "quadratic-probe":
            return (("theta", 0, (self.dim,)),)
        if self.kind == "linear-softmax":
            w = self.n_classes * self.d_in
            return (("w", 0, (self.n_classes, self.d_in)),
                    ("b", w, (self.n_classes,)))
        w1 = self.hidden * self.d_in
        b1 = w1 + self.hidden
        w2 = b1 + self.n_classes * self.hidden
        return (("w1", 0, (self.hidden, self.d_in)),
                ("b1", w1, (self.hidden,)),
                ("w2", b1, (self.n_classes, self.hidden)),
                ("b2", w2, (self.n_classes,)))


def init_params(spec: ModelSpec, rng: np.random.Generator) -> ParamVector:
    """Deterministic initialization given the caller's generator."""
    layout = spec.param_layout()
    values = np.zeros(spec.n_params)
    pv = ParamVector(values, layout)
    if spec.kind == "linear-softmax":
        pv.block("w")[:] = 0.1 * rng.standard_normal((spec.n_classes, spec.d_in))
    elif spec.kind == "mlp-1-hidden":
        pv.block("w1")[:] = rng.standard_normal((spec.hidden, spec.d_in)) / np.sqrt(spec.d_in)
        pv.block("w2")[:] = rng.standard_normal((spec.n_classes, spec.hidden)) / np.sqrt(spec.hidden)
    return pv


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_batch(spec: ModelSpec, batch):
    x = np.asarray(batch.inputs, dtype=float)
    if len(x) == 0:
        raise ValueError("minibatch must be non-empty")
    expected = spec.dim if spec.kind == "quadratic-probe" else spec.d_in
    if x.shape[1] != expected:
        raise ValueError(f"input dimension {x.shape[1]} != model dimension {expected}")
    return x


def loss_and_grad(spec: ModelSpec, theta: ParamVector, batch):
    """Mean per-example loss plus the L2 penalty, and its exact gradient.

    Deterministic in (theta, batch). Non-finite results are returned as-is;
    callers treat them as a divergence signal, so overflow is not a warning.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _loss_and_grad(spec, theta, batch)


def _loss_and_grad(spec: ModelSpec, theta: ParamVector, batch):
    if theta.dim != spec.n_params:
        raise ValueError(f"parameter dimension {theta.dim} != expected {spec.n_params}")
    x = _check_batch(spec, batch)
    y = np.asarray(batch.labels)
    n = len(x)
    grad = np.zeros_like(theta.values)
    gv = ParamVector(grad, theta.layout)

    if spec.kind == "quadratic-probe":
        a = np.asarray(spec.curvature)
        d = theta.values[None, :] - y
        loss = 0.5 * float(np.mean(np.sum(d * d * a[None, :], axis=1)))
        grad[:] = a * (theta.values - y.mean(axis=0))
    elif spec.kind == "linear-softmax":
        w, b = theta.block("w"), theta.block("b")
        p = _softmax(x @ w.T + b[None, :])
        loss = float(-np.mean(np.log(np.maximum(p[np.arange(n), y], 1e-300))))
        dz = p.copy()
        dz[np.arange(n), y] -= 1.0
        dz /= n
        gv.block("w")[:] = dz.T @ x
        gv.block("b")[:] = dz.sum(axis=0)
    else:
        w1, b1 = theta.block("w1"), theta.block("b1")
        w2, b2 = theta.block("w2"), theta.block("b2")
        h = np.tanh(x @ w1.T + b1[None, :])
        p = _softmax(h @ w2.T + b2[None, :])
        loss = float(-np.mean(np.log(np.maximum(p[np.arange(n), y], 1e-300))))
        dz = p.copy()
        dz[np.arange(n), y] -= 1.0
        dz /= n
        gv.block("w2")[:] = dz.T @ h
        gv.block("b2")[:] = dz.sum(axis=0)
        dh = (dz @ w2) * (1.0 - h * h)
        gv.block("w1")[:] = dh.T @ x
        gv.block("b1")[:] = dh.sum(axis=0)

    if spec.weight_decay > 0.0:
        loss += 0.5 * spec.weight_decay * float(theta.values @ theta.values)
        grad += spec.weight_decay * theta.values
    return loss, gv


def logits(spec: ModelSpec, theta: ParamVector, inputs: np.ndarray) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    if spec.kind == "linear-softmax":
        return x @ theta.block("w").T + theta.block("b")[None, :]
    if spec.kind == "mlp-1-hidden":
        h = np.tanh(x @ theta.block("w1").T + theta.block("b1")[None, :])
        return h @ theta.block("w2").T + theta.block("b2")[None, :]
    raise ValueError("logits are defined for classification models only")


def predict(spec: ModelSpec, theta: ParamVector, inputs: np.ndarray) -> np.ndarray:
    """Labels for classification (argmax, ties to the lowest class index);
    the parameter vector replicated per datum for the quadratic probe."""
    if spec.kind == "quadratic-probe":
        return np.tile(theta.values, (len(inputs), 1))
    return np.argmax(logits(spec, theta, inputs), axis=1)


def accuracy(spec: ModelSpec, theta: ParamVector, batch) -> float:
    """Fraction of argmax-correct predictions. Classification only."""
    if not spec.classification:
        raise ValueError("accuracy is undefined for regression models; use loss-based metrics")
    if len(batch.inputs) == 0:
        raise ValueError("dataset must be non-empty")
    preds = predict(spec, theta, batch.inputs)
    return float(np.mean(preds == np.asarray(batch.labels)))


@lru_cache(maxsize=64)
def _without_decay(spec: ModelSpec) -> ModelSpec:
    return ModelSpec(kind=spec.kind, loss=spec.loss, weight_decay=0.0, dim=spec.dim,
                     curvature=spec.curvature, d_in=spec.d_in,
                     n_classes=spec.n_classes, hidden=spec.hidden)


def data_loss(spec: ModelSpec, theta: ParamVector, batch) -> float:
    """Mean per-example loss without the weight-decay term (an evaluation metric)."""
    loss, _ = loss_and_grad(_without_decay(spec), theta, batch)
    return loss


def validation_performance(spec: ModelSpec, theta: ParamVector, batch,
                           metric: str = "accuracy") -> float:
    """Higher-is-better validation signal.

    Classification: accuracy, or negative loss when metric='loss'. Regression
    models always use negative loss so comparisons stay maximizations.
    """
    if spec.classification and metric == "accuracy":
        return accuracy(spec, theta, batch)
    return -data_loss(spec, theta, batch)


def step_ahead_performance(spec: ModelSpec, predictions: np.ndarray, batch) -> float:
    """Score step-2 predictions once labels are revealed.

    Classification: accuracy of the predicted labels. Quadratic probe:
    negative mean quadratic loss of the predicted vectors.
    """
    y = np.asarray(batch.labels)
    if spec.classification:
        return float(np.mean(predictions == y))
    a = np.asarray(spec.curvature)
    d = predictions - y
    return -0.5 * float(np.mean(np.sum(d * d * a[None, :], axis=1)))
