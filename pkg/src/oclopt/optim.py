"""Base optimizers and the moving-average family.

The moving-average (MA) model is a convex combination of the SGD iterates:
``ma <- gamma * ma + (1 - gamma) * theta`` with gamma in [0, 1]. The adaptive
variant (AMA) maintains two MA models with weights a factor ``delta`` apart
and population-search adapts the weights: every ``k_w`` iterations the better
model (by running online validation performance) is copied over the other and
the weights move up or down by ``delta``.

Interval hyperparameters, all counted in global update iterations:

* ``k_m``: MA models update every k_m iterations.
* ``k_v``: online validation folds every k_v iterations (one shared holdout
  minibatch evaluated on both MA models and the SGD model).
* ``k_w``: weight adaptation plus running-mean reset every k_w iterations.

All updates mutate state in place and return it; per-event costs can be
tallied into a CostCounter for compute accounting.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import DivergenceError, ParamVector

log = logging.getLogger(__name__)


@dataclass
class CostCounter:
    """Counts of forward passes, gradient computations, and parameter updates."""

    forward: int = 0
    grad: int = 0
    update: int = 0


def _check_finite(g: np.ndarray):
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient")


# -- base optimizers ----------------------------------------------------------

@dataclass
class SgdState:
    """Heavy-ball SGD: buffer <- beta * buffer + g; theta <- theta - lr * buffer.

    beta = 0 recovers the plain update theta <- theta - lr * g.
    """

    theta: ParamVector
    momentum: np.ndarray
    beta: float = 0.9
    lr: float = 0.0

    def __post_init__(self):
        if self.momentum.shape != self.theta.values.shape:
            raise ValueError("momentum buffer shape must match theta")


def init_sgd(theta: ParamVector, beta: float = 0.9) -> SgdState:
    return SgdState(theta=theta, momentum=np.zeros_like(theta.values), beta=beta)


def sgd_step(state: SgdState, grad, lr: float) -> SgdState:
    if lr <= 0.0:
        raise ValueError("learning rate must be positive")
    g = grad.values if isinstance(grad, ParamVector) else np.asarray(grad)
    if g.shape != state.theta.values.shape:
        raise ValueError("gradient shape mismatch")
    _check_finite(g)
    state.momentum *= state.beta
    state.momentum += g
    state.theta.values[:] -= lr * state.momentum
    state.lr = lr
    return state


@dataclass
class AdamState:
    theta: ParamVector
    m: np.ndarray
    v: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    lr: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1, beta2 must lie in [0, 1)")
        if self.m.shape != self.theta.values.shape or self.v.shape != self.theta.values.shape:
            raise ValueError("moment accumulator shape must match theta")


def init_adam(theta: ParamVector, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    return AdamState(theta=theta, m=np.zeros_like(theta.values),
                     v=np.zeros_like(theta.values), beta1=beta1, beta2=beta2, eps=eps)


def adam_step(state: AdamState, grad, lr: float) -> AdamState:
    if lr <= 0.0:
        raise ValueError("learning rate must be positive")
    g = grad.values if isinstance(grad, ParamVector) else np.asarray(grad)
    if g.shape != state.theta.values.shape:
        raise ValueError("gradient shape mismatch")
    _check_finite(g)
    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * g
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    state.theta.values[:] -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    state.lr = lr
    return state


# -- moving averages ----------------------------------------------------------

def ma_update(ma: ParamVector, gamma: float, theta: ParamVector) -> ParamVector:
    """Elementwise convex combination ma <- gamma * ma + (1 - gamma) * theta."""
    if not (0.0 <= gamma <= 1.0):
        raise ValueError(f"MA weight must lie in [0, 1], got {gamma}")
    v = ma.values
    v *= gamma
    v += (1.0 - gamma) * theta.values
    return ma


@dataclass
class EmaState:
    """Plain exponential moving average of the SGD iterates with fixed weight."""

    ma: ParamVector
    gamma: float
    k_m: int = 1

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError("gamma must lie in [0, 1]")


def init_ema(theta0: ParamVector, gamma: float, k_m: int = 1) -> EmaState:
    return EmaState(ma=theta0.copy(), gamma=gamma, k_m=k_m)


def ema_step(state: EmaState, sgd_theta: ParamVector, k: int,
             costs: Optional[CostCounter] = None) -> EmaState:
    if k % state.k_m == 0:
        ma_update(state.ma, state.gamma, sgd_theta)
        if costs is not None:
            costs.update += 1
    return state


@dataclass
class AmaState:
    """Two MA models plus the population-search bookkeeping.

    acc1/acc2/acc_sgd are running means of online validation performance,
    folded every k_v iterations on a shared minibatch and reset every k_w
    iterations. i_best selects the MA model used for inference and for the
    sigma signal.
    """

    ma1: ParamVector
    ma2: ParamVector
    gamma1: float
    gamma2: float
    delta: float = 5.0
    k_m: int = 10
    k_v: int = 20
    k_w: int = 10000
    acc1: float = 0.0
    acc2: float = 0.0
    acc_sgd: float = 0.0
    n: int = 0
    i_best: int = 1
    adapt: bool = True
    skipped_validations: int = 0

    def __post_init__(self):
        for g in (self.gamma1, self.gamma2):
            if not (0.0 <= g <= 1.0):
                raise ValueError("MA weights must lie in [0, 1]")
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")

    def sigma(self) -> float:
        """Validation-performance gap between the best MA model and the SGD model."""
        best = self.acc1 if self.i_best == 1 else self.acc2
        return best - self.acc_sgd

    def best_perf(self) -> float:
        return self.acc1 if self.i_best == 1 else self.acc2


def init_ama(theta0: ParamVector, gamma0: float = 0.99, delta: float = 5.0,
             k_m: int = 10, k_v: int = 20, k_w: int = 10000,
             adapt: bool = True) -> AmaState:
    return AmaState(ma1=theta0.copy(), ma2=theta0.copy(),
                    gamma1=gamma0, gamma2=gamma0 / delta,
                    delta=delta, k_m=k_m, k_v=k_v, k_w=k_w, adapt=adapt)


def ama_step(state: AmaState, sgd_theta: ParamVector, k: int,
             sample_validation: Callable[[], object],
             evaluate: Callable[[ParamVector, object], float],
             costs: Optional[CostCounter] = None) -> AmaState:
    """One iteration of the adaptive moving average bookkeeping after an SGD step.

    Args:
        state: AMA state, mutated in place.
        sgd_theta: the SGD model after update iteration k.
        k: global update iteration (1-based).
        sample_validation: returns a holdout minibatch, or None when no
            holdout data exists yet (the validation fold is then skipped).
        evaluate: higher-is-better performance of parameters on a minibatch.
        costs: optional compute accounting.
    """
    if k < 1:
        raise ValueError("iteration counter is 1-based")
    if k % state.k_m == 0:
        ma_update(state.ma1, state.gamma1, sgd_theta)
        ma_update(state.ma2, state.gamma2, sgd_theta)
        if costs is not None:
            costs.update += 2
    if k % state.k_v == 0:
        batch = sample_validation()
        if batch is None:
            state.skipped_validations += 1
            log.warning("no holdout data at validation iteration %d; fold skipped", k)
        else:
            a1 = evaluate(state.ma1, batch)
            a2 = evaluate(state.ma2, batch)
            a_sgd = evaluate(sgd_theta, batch)
            if costs is not None:
                costs.forward += 3
            n = state.n
            state.acc1 = (n * state.acc1 + a1) / (n + 1)
            state.acc2 = (n * state.acc2 + a2) / (n + 1)
            state.acc_sgd = (n * state.acc_sgd + a_sgd) / (n + 1)
            state.n = n + 1
            if state.acc1 > state.acc2:
                state.i_best = 1
            elif state.acc2 > state.acc1:
                state.i_best = 2
            # exact tie: keep the previous selection
    if state.adapt and k % state.k_w == 0:
        state.acc1 = state.acc2 = state.acc_sgd = 0.0
        state.n = 0
        if state.i_best == 1:
            state.gamma1 = min(1.0, state.delta * state.gamma1)
            state.gamma2 = state.gamma1 / state.delta
            state.ma2.values[:] = state.ma1.values
            state.i_best = 2
        else:
            state.gamma1 = state.gamma1 / state.delta
            state.gamma2 = state.gamma2 / state.delta
            state.ma1.values[:] = state.ma2.values
            state.i_best = 1
    return state


def best_ma(state: AmaState) -> ParamVector:
    """The MA model currently selected for inference."""
    return state.ma1 if state.i_best == 1 else state.ma2


def unfolded_ma_coefficients(gammas: np.ndarray) -> np.ndarray:
    """Coefficients of theta_0..theta_k in the unrolled MA recursion.

    For weights gamma_1..gamma_k the MA model equals
    sum_i coeff[i] * theta_i with coeff[k] = 1 - gamma_k,
    coeff[i] = (1 - gamma_i) * prod_{j>i} gamma_j for 0 < i < k, and
    coeff[0] = prod_j gamma_j. The coefficients sum to 1 for any weight
    sequence; tests rely on this identity.
    """
    gammas = np.asarray(gammas, dtype=float)
    k = len(gammas)
    coeffs = np.empty(k + 1)
    suffix = np.concatenate([np.cumprod(gammas[::-1])[::-1], [1.0]])
    coeffs[0] = suffix[0]
    for i in range(1, k + 1):
        coeffs[i] = (1.0 - gammas[i - 1]) * suffix[i]
    return coeffs


# -- checkpointing -------------------------------------------------------------

def save_optimizer(path, base, ma=None):
    """Serialize optimizer state (and optional MA state) to an .npz archive.

    Float64 values round-trip exactly, so a restored optimizer continues
    bit-identically to one that was never saved.
    """
    blobs = {}
    if isinstance(base, SgdState):
        blobs.update(base_kind="sgd", base_theta=base.theta.values,
                     base_momentum=base.momentum,
                     base_scalars=np.array([base.beta, base.lr]))
    elif isinstance(base, AdamState):
        blobs.update(base_kind="adam", base_theta=base.theta.values,
                     base_m=base.m, base_v=base.v,
                     base_scalars=np.array([base.beta1, base.beta2, base.eps,
                                            float(base.step), base.lr]))
    else:
        raise TypeError(f"unsupported base optimizer {type(base)!r}")
    if isinstance(ma, EmaState):
        blobs.update(ma_kind="ema", ma_ma=ma.ma.values,
                     ma_scalars=np.array([ma.gamma, float(ma.k_m)]))
    elif isinstance(ma, AmaState):
        blobs.update(ma_kind="ama", ma_ma1=ma.ma1.values, ma_ma2=ma.ma2.values,
                     ma_scalars=np.array([ma.gamma1, ma.gamma2, ma.delta,
                                          float(ma.k_m), float(ma.k_v), float(ma.k_w),
                                          ma.acc1, ma.acc2, ma.acc_sgd,
                                          float(ma.n), float(ma.i_best),
                                          float(ma.adapt), float(ma.skipped_validations)]))
    elif ma is not None:
        raise TypeError(f"unsupported MA state {type(ma)!r}")
    np.savez(path, **blobs)


def load_optimizer(path, layout=()):
    """Restore (base_state, ma_state) saved by save_optimizer."""
    with np.load(path, allow_pickle=False) as z:
        kind = str(z["base_kind"])
        if kind == "sgd":
            beta, lr = z["base_scalars"]
            base = SgdState(theta=ParamVector(z["base_theta"].copy(), layout),
                            momentum=z["base_momentum"].copy(), beta=float(beta),
                            lr=float(lr))
        else:
            b1, b2, eps, step, lr = z["base_scalars"]
            base = AdamState(theta=ParamVector(z["base_theta"].copy(), layout),
                             m=z["base_m"].copy(), v=z["base_v"].copy(),
                             beta1=float(b1), beta2=float(b2), eps=float(eps),
                             step=int(step), lr=float(lr))
        ma = None
        if "ma_kind" in z:
            mk = str(z["ma_kind"])
            if mk == "ema":
                gamma, k_m = z["ma_scalars"]
                ma = EmaState(ma=ParamVector(z["ma_ma"].copy(), layout),
                              gamma=float(gamma), k_m=int(k_m))
            else:
                s = z["ma_scalars"]
                ma = AmaState(ma1=ParamVector(z["ma_ma1"].copy(), layout),
                              ma2=ParamVector(z["ma_ma2"].copy(), layout),
                              gamma1=float(s[0]), gamma2=float(s[1]), delta=float(s[2]),
                              k_m=int(s[3]), k_v=int(s[4]), k_w=int(s[5]),
                              acc1=float(s[6]), acc2=float(s[7]), acc_sgd=float(s[8]),
                              n=int(s[9]), i_best=int(s[10]), adapt=bool(s[11]),
                              skipped_validations=int(s[12]))
    return base, ma
