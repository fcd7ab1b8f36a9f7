import numpy as np
import pytest

from fluidfl.data import synth_gaussian_blobs
from fluidfl.errors import DataError, RateError, ShapeError
from fluidfl.nn import backward, init_model
from fluidfl.simclient import (ClientSpec, LoadWindow, evaluate, local_train,
                               simulate_epoch_time)


def spec_with(base=10.0, noise=0.0, windows=()):
    return ClientSpec(0, base, noise, list(windows))


class TestEpochTime:
    def test_linear_in_rate(self):
        spec = spec_with(base=10.0)
        rng = np.random.default_rng(0)
        assert simulate_epoch_time(spec, 0.5, 0.0, rng) == pytest.approx(5.0)
        for r in (0.1, 0.25, 0.65, 1.0):
            t = simulate_epoch_time(spec, r, 0.0, np.random.default_rng(0))
            full = simulate_epoch_time(spec, 1.0, 0.0, np.random.default_rng(0))
            assert t / full == pytest.approx(r)

    def test_slowdown_window(self):
        spec = spec_with(base=10.0, windows=[LoadWindow(0.25, 0.5, 2.0)])
        rng = np.random.default_rng(0)
        assert simulate_epoch_time(spec, 1.0, 0.3, rng) == pytest.approx(20.0)

    def test_window_boundaries_half_open(self):
        spec = spec_with(base=10.0, windows=[LoadWindow(0.25, 0.5, 2.0)])
        rng = np.random.default_rng(0)
        assert simulate_epoch_time(spec, 1.0, 0.25, rng) == pytest.approx(20.0)
        assert simulate_epoch_time(spec, 1.0, 0.5, rng) == pytest.approx(10.0)
        assert simulate_epoch_time(spec, 1.0, 0.2499, rng) == pytest.approx(10.0)

    def test_noise_stays_within_band(self):
        spec = spec_with(base=10.0, noise=0.05)
        rng = np.random.default_rng(42)
        times = [simulate_epoch_time(spec, 0.75, 0.0, rng) for _ in range(1000)]
        assert min(times) >= 7.125
        assert max(times) <= 7.875

    def test_deterministic_per_seed(self):
        spec = spec_with(base=3.0, noise=0.05)
        a = simulate_epoch_time(spec, 0.8, 0.1, np.random.default_rng(5))
        b = simulate_epoch_time(spec, 0.8, 0.1, np.random.default_rng(5))
        assert a == b

    def test_rate_validation(self):
        with pytest.raises(RateError):
            simulate_epoch_time(spec_with(), 0.0, 0.0, np.random.default_rng(0))

    def test_spec_validation(self):
        with pytest.raises(ShapeError):
            ClientSpec(0, -1.0)
        with pytest.raises(ShapeError):
            ClientSpec(0, 1.0, noise_pct=0.2)
        with pytest.raises(ShapeError):
            LoadWindow(0.5, 0.25, 2.0)
        with pytest.raises(ShapeError):
            LoadWindow(0.0, 0.5, 0.5)


class TestLocalTrain:
    def setup_method(self):
        self.ds = synth_gaussian_blobs(3, 4, 30, seed=2)
        self.model = init_model([4, 8, 3], seed=2)

    def test_zero_lr_returns_received_parameters(self):
        trained = local_train(self.model.copy(), self.ds.features,
                              self.ds.labels, 1, 0.0, 8,
                              np.random.default_rng(0))
        assert trained.params_equal(self.model)

    def test_loss_decreases_after_local_epoch(self):
        _, before = backward(self.model, self.ds.features, self.ds.labels)
        trained = local_train(self.model.copy(), self.ds.features,
                              self.ds.labels, 1, 0.05, 8,
                              np.random.default_rng(1))
        _, after = backward(trained, self.ds.features, self.ds.labels)
        assert after < before

    def test_deterministic_per_seed(self):
        a = local_train(self.model.copy(), self.ds.features, self.ds.labels,
                        2, 0.05, 8, np.random.default_rng(7))
        b = local_train(self.model.copy(), self.ds.features, self.ds.labels,
                        2, 0.05, 8, np.random.default_rng(7))
        assert a.params_equal(b)

    def test_empty_slice_rejected(self):
        with pytest.raises(DataError):
            local_train(self.model, np.zeros((0, 4)), np.zeros(0, dtype=int),
                        1, 0.1, 8, np.random.default_rng(0))


class TestEvaluate:
    def test_accuracy_and_loss(self):
        ds = synth_gaussian_blobs(2, 3, 40, seed=1)
        model = init_model([3, 6, 2], seed=1)
        for _ in range(30):
            grads, _ = backward(model, ds.features, ds.labels)
            from fluidfl.nn import sgd_step
            model = sgd_step(model, grads, 0.1)
        acc, loss = evaluate(model, ds.features, ds.labels)
        assert 0.9 <= acc <= 1.0
        assert loss >= 0.0

    def test_empty_slice(self):
        model = init_model([3, 2], seed=0)
        assert evaluate(model, np.zeros((0, 3)), np.zeros(0, dtype=int)) == (0.0, 0.0)
