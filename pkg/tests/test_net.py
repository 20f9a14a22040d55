import numpy as np
import pytest

from drill.buckets import make_buckets, softmax
from drill.losses import mae_expectation_grad
from drill.net import (
    CheckpointFormatError,
    GradientTape,
    MlpModel,
    OptimizerState,
    TrainingDivergenceError,
    forward,
    init_mlp,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
)


def zeroed(dims, head="distribution"):
    model = init_mlp(dims, np.random.default_rng(0), head=head)
    for w in model.weights:
        w[...] = 0.0
    for b in model.biases:
        b[...] = 0.0
    return model


class TestForward:
    def test_zero_model_gives_uniform_distribution(self):
        model = zeroed((4, 6, 5))
        dist = forward(model, np.array([0.3, -1.0, 2.0, 0.0]))
        assert np.allclose(dist.probs, 0.2, atol=1e-15)

    def test_bias_only_model_outputs_softmax_of_bias(self):
        model = zeroed((3, 4))
        model.biases[0][:] = [1.0, 0.0, -1.0, 2.0]
        dist = forward(model, np.array([5.0, -2.0, 7.0]))
        assert np.allclose(dist.probs, softmax([1.0, 0.0, -1.0, 2.0]), atol=1e-15)

    def test_random_model_normalized(self):
        rng = np.random.default_rng(9)
        model = init_mlp((6, 16, 12), rng)
        dist = forward(model, rng.standard_normal(6))
        assert abs(dist.probs.sum() - 1.0) < 1e-9

    def test_dimension_mismatch(self):
        model = zeroed((4, 5))
        with pytest.raises(ValueError):
            forward(model, np.zeros(3))

    def test_scalar_head_has_no_distribution(self):
        model = zeroed((4, 5, 1), head="scalar")
        with pytest.raises(ValueError):
            forward(model, np.zeros(4))


class TestBackward:
    def test_backward_without_forward_is_a_state_error(self):
        model = zeroed((3, 2))
        with pytest.raises(RuntimeError):
            model.backward(np.zeros((1, 2)))

    def test_zero_upstream_gradient_gives_zero_tape(self):
        rng = np.random.default_rng(1)
        model = init_mlp((5, 8, 4), rng)
        model.forward_batch(rng.standard_normal((3, 5)))
        tape = model.backward(np.zeros((3, 4)))
        assert np.all(tape.flat() == 0.0)

    def test_linear_layer_weight_gradient_is_the_input(self):
        model = zeroed((4, 3))
        x = np.array([[0.5, -1.0, 2.0, 0.25]])
        model.forward_batch(x)
        dlog = np.zeros((1, 3))
        dlog[0, 1] = 1.0  # loss = logits[1]
        tape = model.backward(dlog)
        assert np.allclose(tape.w_grads[0][:, 1], x[0], atol=0)
        assert np.allclose(tape.w_grads[0][:, [0, 2]], 0.0, atol=0)
        assert np.allclose(tape.b_grads[0], [0.0, 1.0, 0.0], atol=0)

    def test_full_loss_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(17)
        spec = make_buckets(0, 4, 7)
        model = init_mlp((4, 10, 7), rng)
        X = rng.standard_normal((3, 4))
        y = rng.uniform(0.5, 3.5, 3)

        def loss():
            probs = softmax(model.forward_batch(X))
            return float(np.mean(np.abs(probs @ spec.values - y)))

        probs = softmax(model.forward_batch(X))
        _, _, dz = mae_expectation_grad(probs, spec.values, y)
        analytic = model.backward(dz).flat()

        flat = model.params_flat()
        numeric = np.zeros_like(flat)
        h = 1e-5
        for i in range(flat.size):
            v = flat[i]
            flat[i] = v + h
            model.set_params_flat(flat)
            up = loss()
            flat[i] = v - h
            model.set_params_flat(flat)
            down = loss()
            flat[i] = v
            numeric[i] = (up - down) / (2 * h)
        model.set_params_flat(flat)
        err = np.linalg.norm(analytic - numeric) / max(
            np.linalg.norm(analytic), np.linalg.norm(numeric)
        )
        assert err < 1e-4


class TestInit:
    def test_weight_scale_and_zero_biases(self):
        model = init_mlp((10, 20, 5), np.random.default_rng(3))
        for w, (fi, fo) in zip(model.weights, [(10, 20), (20, 5)]):
            bound = np.sqrt(6.0 / (fi + fo))
            assert np.all(np.abs(w) <= bound)
        for b in model.biases:
            assert np.all(b == 0.0)

    def test_same_seed_same_model(self):
        a = init_mlp((6, 8, 3), np.random.default_rng(42))
        b = init_mlp((6, 8, 3), np.random.default_rng(42))
        assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            init_mlp((5,), np.random.default_rng(0))
        with pytest.raises(ValueError):
            init_mlp((5, 0, 2), np.random.default_rng(0))


class TestSgdStep:
    def test_zero_gradients_leave_parameters_unchanged(self):
        model = init_mlp((3, 4, 2), np.random.default_rng(0))
        before = model.params_flat()
        tape = GradientTape(
            [np.zeros_like(w) for w in model.weights],
            [np.zeros_like(b) for b in model.biases],
        )
        sgd_step(model, tape, OptimizerState(0.5, 0.9, 0.0))
        assert np.array_equal(model.params_flat(), before)

    def test_vanilla_step(self):
        model = zeroed((1, 1))
        tape = GradientTape([np.ones((1, 1))], [np.zeros(1)])
        sgd_step(model, tape, OptimizerState(0.1, 0.0, 0.0))
        assert model.weights[0][0, 0] == pytest.approx(-0.1, abs=1e-15)

    def test_two_momentum_steps_hand_unrolled(self):
        # v1 = 1, v2 = 1.9 under momentum 0.9 and unit gradients
        model = zeroed((1, 1))
        state = OptimizerState(0.1, 0.9, 0.0)
        for _ in range(2):
            sgd_step(model, GradientTape([np.ones((1, 1))], [np.zeros(1)]), state)
        assert model.weights[0][0, 0] == pytest.approx(-0.29, abs=1e-12)

    def test_weight_decay_enters_velocity(self):
        model = zeroed((1, 1))
        model.weights[0][0, 0] = 2.0
        state = OptimizerState(0.1, 0.0, 0.5)
        sgd_step(model, GradientTape([np.zeros((1, 1))], [np.zeros(1)]), state)
        # v = 0.5 * 2.0 = 1, theta = 2 - 0.1
        assert model.weights[0][0, 0] == pytest.approx(1.9, abs=1e-15)

    def test_non_finite_gradient_raises_divergence(self):
        model = zeroed((1, 1))
        tape = GradientTape([np.full((1, 1), np.nan)], [np.zeros(1)])
        with pytest.raises(TrainingDivergenceError):
            sgd_step(model, tape, OptimizerState(0.1))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        model = init_mlp((5, 12, 9), rng)
        mean, std = rng.standard_normal(5), rng.uniform(0.5, 2.0, 5)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, 1.0, 4.5, mean, std)
        loaded = load_checkpoint(path)
        assert loaded.model.layer_dims == model.layer_dims
        assert loaded.model.head == "distribution"
        assert all(np.array_equal(a, b) for a, b in zip(loaded.model.weights, model.weights))
        assert all(np.array_equal(a, b) for a, b in zip(loaded.model.biases, model.biases))
        assert (loaded.label_min, loaded.label_max) == (1.0, 4.5)
        assert np.array_equal(loaded.feature_mean, mean)
        assert np.array_equal(loaded.feature_std, std)
        spec = loaded.bucket_spec()
        assert spec.count == 9 and spec.values[0] == 1.0 and spec.values[-1] == 4.5

    def test_scalar_head_round_trip(self, tmp_path):
        model = init_mlp((3, 4, 1), np.random.default_rng(0), head="scalar")
        path = tmp_path / "dr.ckpt"
        save_checkpoint(path, model)
        loaded = load_checkpoint(path)
        assert loaded.model.head == "scalar"
        assert loaded.bucket_spec() is None
        assert np.isnan(loaded.label_min) and np.isnan(loaded.label_max)

    def test_save_then_save_is_identical(self, tmp_path):
        model = init_mlp((4, 6, 3), np.random.default_rng(1))
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(a, model, 0.0, 1.0)
        save_checkpoint(b, model, 0.0, 1.0)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 64)
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)

    def test_bad_version_rejected(self, tmp_path):
        model = init_mlp((2, 2), np.random.default_rng(0))
        path = tmp_path / "v.ckpt"
        save_checkpoint(path, model)
        blob = bytearray(path.read_bytes())
        blob[7] = ord("9")
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)

    def test_truncation_rejected(self, tmp_path):
        model = init_mlp((2, 3), np.random.default_rng(0))
        path = tmp_path / "t.ckpt"
        save_checkpoint(path, model)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        model = init_mlp((2, 3), np.random.default_rng(0))
        path = tmp_path / "x.ckpt"
        save_checkpoint(path, model)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)
