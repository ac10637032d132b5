"""Loss/gradient correctness against finite differences, accuracy contracts,
and the analytic assumption witnesses."""

import numpy as np
import pytest

from oclopt.datapool import Minibatch
from oclopt.model import (ModelSpec, ParamVector, accuracy, init_params, logits,
                          loss_and_grad, predict, validation_performance)


def fd_gradient(spec, theta, batch, h=1e-5):
    """Central-difference gradient, the independent oracle."""
    grad = np.zeros_like(theta.values)
    for i in range(theta.dim):
        up = ParamVector(theta.values.copy(), theta.layout)
        dn = ParamVector(theta.values.copy(), theta.layout)
        up.values[i] += h
        dn.values[i] -= h
        lu, _ = loss_and_grad(spec, up, batch)
        ld, _ = loss_and_grad(spec, dn, batch)
        grad[i] = (lu - ld) / (2 * h)
    return grad


def grad_agreement(analytic, numeric):
    return float(np.max(np.abs(analytic - numeric))) / max(1.0, float(np.max(np.abs(analytic))))


def random_model_and_batch(rng):
    kind = rng.choice(["quadratic-probe", "linear-softmax", "mlp-1-hidden"])
    n = int(rng.integers(2, 9))
    wd = float(rng.choice([0.0, 1e-3, 1e-2]))
    if kind == "quadratic-probe":
        d = int(rng.integers(1, 5))
        spec = ModelSpec(kind=kind, loss="quadratic", weight_decay=wd, dim=d,
                         curvature=tuple(rng.uniform(0.2, 2.0, d)))
        batch = Minibatch(rng.standard_normal((n, d)), rng.standard_normal((n, d)))
    else:
        d = int(rng.integers(2, 5))
        c = int(rng.integers(2, 4))
        hidden = int(rng.integers(2, 6))
        spec = ModelSpec(kind=kind, loss="cross-entropy", weight_decay=wd,
                         d_in=d, n_classes=c, hidden=hidden)
        batch = Minibatch(rng.standard_normal((n, d)), rng.integers(0, c, n))
    theta = init_params(spec, rng)
    theta.values[:] += 0.3 * rng.standard_normal(theta.dim)
    return spec, theta, batch


class TestGradients:
    def test_quadratic_stationary_point(self):
        spec = ModelSpec(kind="quadratic-probe", loss="quadratic", dim=3,
                         curvature=(0.5, 1.0, 1.5))
        target = np.array([1.0, -2.0, 0.5])
        theta = ParamVector(target.copy())
        batch = Minibatch(np.tile(target, (4, 1)), np.tile(target, (4, 1)))
        loss, grad = loss_and_grad(spec, theta, batch)
        assert loss == 0.0
        assert np.allclose(grad.values, 0.0)

    def test_softmax_zero_params_gives_ln2(self):
        spec = ModelSpec(kind="linear-softmax", loss="cross-entropy", d_in=3,
                         n_classes=2)
        theta = ParamVector(np.zeros(spec.n_params), spec.param_layout())
        batch = Minibatch(np.random.default_rng(0).standard_normal((6, 3)),
                          np.array([0, 1, 0, 1, 1, 0]))
        loss, _ = loss_and_grad(spec, theta, batch)
        assert np.isclose(loss, np.log(2.0))

    def test_mlp_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        spec = ModelSpec(kind="mlp-1-hidden", loss="cross-entropy", d_in=3,
                         n_classes=3, hidden=5, weight_decay=1e-3)
        theta = init_params(spec, rng)
        batch = Minibatch(rng.standard_normal((8, 3)), rng.integers(0, 3, 8))
        _, grad = loss_and_grad(spec, theta, batch)
        numeric = fd_gradient(spec, theta, batch)
        assert grad_agreement(grad.values, numeric) < 1e-6

    def test_all_kinds_match_finite_differences(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            spec, theta, batch = random_model_and_batch(rng)
            _, grad = loss_and_grad(spec, theta, batch)
            numeric = fd_gradient(spec, theta, batch)
            assert grad_agreement(grad.values, numeric) < 1e-6, spec.kind

    def test_dimension_mismatch_raises(self):
        spec = ModelSpec(kind="linear-softmax", loss="cross-entropy", d_in=3,
                         n_classes=2)
        theta = ParamVector(np.zeros(spec.n_params), spec.param_layout())
        bad = Minibatch(np.zeros((4, 5)), np.zeros(4, dtype=int))
        with pytest.raises(ValueError):
            loss_and_grad(spec, theta, bad)

    def test_empty_batch_raises(self):
        spec = ModelSpec(kind="linear-softmax", loss="cross-entropy", d_in=2,
                         n_classes=2)
        theta = ParamVector(np.zeros(spec.n_params), spec.param_layout())
        with pytest.raises(ValueError):
            loss_and_grad(spec, theta, Minibatch(np.zeros((0, 2)), np.zeros(0, dtype=int)))

    def test_unbiased_minibatch_gradients(self):
        # mean of single-item gradients equals the full-pool gradient
        rng = np.random.default_rng(3)
        spec = ModelSpec(kind="linear-softmax", loss="cross-entropy", d_in=2,
                         n_classes=3, weight_decay=1e-3)
        theta = init_params(spec, rng)
        xs, ys = rng.standard_normal((16, 2)), rng.integers(0, 3, 16)
        _, full = loss_and_grad(spec, theta, Minibatch(xs, ys))
        singles = [loss_and_grad(spec, theta, Minibatch(xs[i:i + 1], ys[i:i + 1]))[1].values
                   for i in range(16)]
        assert np.allclose(np.mean(singles, axis=0), full.values, atol=1e-12)


class TestAccuracy:
    def spec(self):
        return ModelSpec(kind="linear-softmax", loss="cross-entropy", d_in=2,
                         n_classes=2)

    def test_perfect_predictor(self):
        spec = self.spec()
        theta = ParamVector(np.zeros(spec.n_params), spec.param_layout())
        theta.block("w")[:] = np.array([[5.0, 0.0], [-5.0, 0.0]])
        xs = np.array([[1.0, 0.0], [-1.0, 0.0], [2.0, 1.0]])
        ys = np.array([0, 1, 0])
        assert accuracy(spec, theta, Minibatch(xs, ys)) == 1.0

    def test_tie_breaks_toward_lowest_class(self):
        # zero params tie all logits; predictions are class 0 everywhere
        spec = self.spec()
        theta = ParamVector(np.zeros(spec.n_params), spec.param_layout())
        xs = np.random.default_rng(0).standard_normal((10, 2))
        ys = np.array([0] * 6 + [1] * 4)
        assert accuracy(spec, theta, Minibatch(xs, ys)) == 0.6

    def test_matches_enumerated_prediction_table(self):
        rng = np.random.default_rng(12)
        spec = ModelSpec(kind="linear-softmax", loss="cross-entropy", d_in=3,
                         n_classes=4)
        theta = init_params(spec, rng)
        xs = rng.standard_normal((20, 3))
        ys = rng.integers(0, 4, 20)
        # independent enumeration: per-example argmax over explicit dot products
        w, b = theta.block("w"), theta.block("b")
        correct = 0
        for i in range(20):
            scores = [float(w[c] @ xs[i]) + float(b[c]) for c in range(4)]
            best = max(range(4), key=lambda c: (scores[c], -c))
            correct += int(best == ys[i])
        assert accuracy(spec, theta, Minibatch(xs, ys)) == correct / 20

    def test_regression_model_rejected(self):
        spec = ModelSpec(kind="quadratic-probe", loss="quadratic", dim=2,
                         curvature=(1.0, 1.0))
        theta = ParamVector(np.zeros(2))
        with pytest.raises(ValueError):
            accuracy(spec, theta, Minibatch(np.zeros((2, 2)), np.zeros((2, 2))))

    def test_validation_performance_orientation(self):
        spec = ModelSpec(kind="quadratic-probe", loss="quadratic", dim=2,
                         curvature=(1.0, 1.0))
        good = ParamVector(np.array([1.0, 1.0]))
        bad = ParamVector(np.array([9.0, 9.0]))
        batch = Minibatch(np.tile([1.0, 1.0], (4, 1)), np.tile([1.0, 1.0], (4, 1)))
        assert validation_performance(spec, good, batch) > validation_performance(spec, bad, batch)


class TestParamVector:
    def test_layout_must_partition(self):
        with pytest.raises(ValueError):
            ParamVector(np.zeros(5), (("a", 0, (2,)), ("b", 2, (2,))))

    def test_block_views_share_memory(self):
        spec = ModelSpec(kind="linear-softmax", loss="cross-entropy", d_in=2,
                         n_classes=2)
        theta = ParamVector(np.zeros(spec.n_params), spec.param_layout())
        theta.block("b")[:] = 7.0
        assert np.all(theta.values[-2:] == 7.0)

    def test_init_is_deterministic(self):
        from oclopt.rng import substream
        spec = ModelSpec(kind="mlp-1-hidden", loss="cross-entropy", d_in=3,
                         n_classes=2, hidden=4)
        a = init_params(spec, substream(5, 6))
        b = init_params(spec, substream(5, 6))
        assert np.array_equal(a.values, b.values)


class TestNoiseWitness:
    def test_single_item_gradient_deviation_within_analytic_bound(self):
        # quadratic stream: single-observation gradients deviate from the
        # batch-mean gradient by at most l_smooth * noise_radius * 2 (each
        # observation is within noise_radius of the center)
        from oclopt.stream import DriftingQuadraticSpec, StreamSpec, next_batch

        quad = DriftingQuadraticSpec(dim=3, mu=0.4, l_smooth=1.2,
                                     center0=(1.0, 0.0, -1.0),
                                     velocity=(0.0, 0.0, 0.0), noise_radius=0.5)
        stream = StreamSpec(kind="drifting-quadratic", d_in=3, batch_size=64,
                            horizon=10, seed=3, quadratic=quad)
        spec = ModelSpec(kind="quadratic-probe", loss="quadratic", dim=3,
                         curvature=tuple(quad.eigenvalues()))
        rng = np.random.default_rng(0)
        theta = ParamVector(rng.standard_normal(3))
        batch = next_batch(stream, 1)
        # true gradient of the per-step objective at the noiseless center
        true_grad = quad.grad_at(theta.values, 1)
        rho = quad.noise_bound()
        for i in range(batch.n):
            single = Minibatch(batch.inputs[i:i + 1], batch.labels[i:i + 1])
            _, g = loss_and_grad(spec, theta, single)
            assert np.linalg.norm(g.values - true_grad) <= rho + 1e-12
