import json

import numpy as np
import pytest

from leafbench.errors import CheckpointCorrupt, ConfigError
from leafbench.layers import Dense, Flatten
from leafbench.model import (DEFAULT_BLOCKS, MicroCNNConfig,
                             SigmoidHeadModel, attach_multilabel_head,
                             build_micro_cnn, count_parameters,
                             load_checkpoint, micro_cnn_layers,
                             save_checkpoint)

SMALL = MicroCNNConfig(blocks=((4, 3, 1),), input_side=8)


def small_model(space, seed=3):
    return build_micro_cnn(SMALL, space, rng=np.random.default_rng(seed))


def batch_for(config, rng, n=6):
    return rng.random((n, config.input_side, config.input_side,
                       config.input_channels))


class StackBackbone:
    """Feature extractor contract wrapped around a plain layer stack."""

    def __init__(self, layers, feature_dim, name="StackBackbone"):
        self.stack = list(layers)
        self.feature_dim = feature_dim
        self.name = name
        self.frozen = False

    def forward(self, x, training=False):
        for layer in self.stack:
            x = layer.forward(x, training=training)
        return x

    def backward(self, dout):
        for layer in reversed(self.stack):
            dout = layer.backward(dout)
        return dout

    def freeze(self):
        self.frozen = True

    def parameters(self):
        if self.frozen:
            return []
        return [p for layer in self.stack for p in layer.parameters()]

    def gradients(self):
        if self.frozen:
            return []
        return [g for layer in self.stack for g in layer.gradients()]

    def state_list(self):
        from leafbench.model import _layer_state
        return [a for layer in self.stack for a in _layer_state(layer)]


class TestConfig:
    def test_defaults(self):
        config = MicroCNNConfig()
        assert config.blocks == DEFAULT_BLOCKS == ((8, 3, 1), (16, 3, 1),
                                                   (32, 3, 1))
        assert config.input_side == 120
        assert config.input_channels == 3

    def test_flatten_dim_default(self):
        # 120 -> 60 -> 30 -> 15 through three stride-1 blocks with pooling
        assert MicroCNNConfig().flatten_dim() == 15 * 15 * 32

    def test_flatten_dim_small_inputs(self):
        assert MicroCNNConfig(input_side=32).flatten_dim() == 4 * 4 * 32
        assert SMALL.flatten_dim() == 4 * 4 * 4

    def test_flatten_dim_with_conv_stride(self):
        config = MicroCNNConfig(blocks=((4, 3, 2),), input_side=10)
        # conv stride 2: ceil(10/2)=5, then pool: 2
        assert config.flatten_dim() == 2 * 2 * 4

    def test_flatten_dim_odd_sides_round_down(self):
        config = MicroCNNConfig(blocks=((2, 3, 1), (2, 3, 1)), input_side=7)
        assert config.flatten_dim() == 1 * 1 * 2

    def test_collapse_to_nothing_rejected(self):
        with pytest.raises(ConfigError):
            MicroCNNConfig(blocks=((2, 3, 1), (2, 3, 1)),
                           input_side=2).flatten_dim()

    def test_validation(self):
        with pytest.raises(ConfigError):
            MicroCNNConfig(blocks=())
        with pytest.raises(ConfigError):
            MicroCNNConfig(blocks=((4, 7, 1),))
        with pytest.raises(ConfigError):
            MicroCNNConfig(blocks=((0, 3, 1),))
        with pytest.raises(ConfigError):
            MicroCNNConfig(input_side=0)

    def test_json_round_trip(self):
        config = MicroCNNConfig(blocks=((4, 3, 2), (8, 5, 1)), input_side=48)
        again = MicroCNNConfig.from_json(
            json.loads(json.dumps(config.to_json())))
        assert again == config


class TestForward:
    def test_output_shape_and_range_paired(self, paired_space, rng):
        config = MicroCNNConfig(input_side=16)
        model = build_micro_cnn(config, paired_space,
                                rng=np.random.default_rng(0))
        out = model.forward(batch_for(config, rng, n=5))
        assert out.shape == (5, 34)
        assert np.all(out > 0.0) and np.all(out < 1.0)

    def test_output_shape_shared(self, shared_space, rng):
        config = MicroCNNConfig(input_side=16)
        model = build_micro_cnn(config, shared_space,
                                rng=np.random.default_rng(0))
        assert model.forward(batch_for(config, rng, n=2)).shape == (2, 26)

    def test_inference_deterministic(self, paired_space, rng):
        model = small_model(paired_space)
        x = batch_for(SMALL, rng)
        assert np.array_equal(model.forward(x), model.forward(x))

    def test_same_seed_same_weights(self, paired_space, rng):
        a = small_model(paired_space, seed=11)
        b = small_model(paired_space, seed=11)
        x = batch_for(SMALL, rng)
        assert np.array_equal(a.forward(x), b.forward(x))

    def test_predict_chunking_matches_single_pass(self, paired_space, rng):
        model = small_model(paired_space)
        x = batch_for(SMALL, rng, n=8)
        assert np.allclose(model.predict(x, batch_size=3),
                           model.forward(x))

    def test_training_forward_differs_from_inference(self, paired_space,
                                                     rng):
        # training mode uses batch statistics, inference the running ones
        model = small_model(paired_space)
        x = batch_for(SMALL, rng)
        assert not np.allclose(model.forward(x, training=True),
                               model.forward(x, training=False))


class TestLossAndGradients:
    def test_loss_and_grads_matches_forward_loss(self, paired_space, rng):
        model = small_model(paired_space)
        x = batch_for(SMALL, rng)
        y = np.zeros((6, 34))
        y[:, 0] = 1.0
        y[:, 6] = 1.0
        # same training-mode forward, so the values agree exactly
        assert model.loss_and_grads(x, y) == pytest.approx(
            model.loss_on(x, y, training=True), rel=1e-6)

    def test_gradient_buffers_match_parameter_shapes(self, paired_space,
                                                     rng):
        model = small_model(paired_space)
        x = batch_for(SMALL, rng)
        y = np.zeros((6, 34))
        y[:, 0] = 1.0
        model.loss_and_grads(x, y)
        params, grads = model.parameters(), model.gradients()
        assert len(params) == len(grads) > 0
        for p, g in zip(params, grads):
            assert p.shape == g.shape

    def test_target_shape_mismatch(self, paired_space, rng):
        from leafbench.errors import ShapeMismatch
        model = small_model(paired_space)
        with pytest.raises(ShapeMismatch):
            model.loss_and_grads(batch_for(SMALL, rng), np.zeros((6, 20)))


class TestParameterCounting:
    def test_hand_counted_small_config(self, paired_space):
        model = SigmoidHeadModel(
            micro_cnn_layers(SMALL, 5, rng=np.random.default_rng(0)))
        # conv 4*3*3*3+4, bn 4+4, dense 64*5+5
        assert count_parameters(model) == 112 + 8 + 325

    def test_state_arrays_include_running_statistics(self, paired_space):
        model = small_model(paired_space)
        # conv w/b + bn gamma/beta/mean/var + dense w/b
        assert len(model.state_arrays()) == 8
        assert len(model.parameters()) == 6

    def test_model_must_end_in_dense(self):
        with pytest.raises(ConfigError):
            SigmoidHeadModel([Flatten()])

    def test_head_width_must_match_space(self, paired_space):
        layers = micro_cnn_layers(SMALL, 5, rng=np.random.default_rng(0))
        with pytest.raises(ConfigError):
            SigmoidHeadModel(layers, space=paired_space)


class TestSnapshotRestore:
    def test_round_trip_restores_outputs(self, paired_space, rng):
        model = small_model(paired_space)
        x = batch_for(SMALL, rng)
        snap = model.snapshot()
        before = model.forward(x)
        for p in model.parameters():
            p += 0.5
        assert not np.allclose(model.forward(x), before)
        model.restore(snap)
        assert np.array_equal(model.forward(x), before)

    def test_snapshot_is_a_deep_copy(self, paired_space):
        model = small_model(paired_space)
        snap = model.snapshot()
        model.parameters()[0][...] += 1.0
        assert not np.allclose(snap[0], model.parameters()[0])

    def test_restore_rejects_wrong_length(self, paired_space):
        model = small_model(paired_space)
        with pytest.raises(CheckpointCorrupt):
            model.restore(model.snapshot()[:-1])


class TestCheckpoint:
    def train_step(self, model, rng):
        x = batch_for(SMALL, rng)
        y = np.zeros((6, 34))
        y[:, 0] = 1.0
        y[:, 6] = 1.0
        model.loss_and_grads(x, y)
        for p, g in zip(model.parameters(), model.gradients()):
            p -= 0.01 * g.astype(p.dtype)

    def test_round_trip(self, paired_space, rng, tmp_path):
        model = small_model(paired_space)
        self.train_step(model, rng)
        save_checkpoint(model, tmp_path / "ckpt")
        loaded = load_checkpoint(tmp_path / "ckpt")
        assert loaded.space.labels() == paired_space.labels()
        assert loaded.backbone_name == "MicroCNN"
        x = batch_for(SMALL, rng)
        assert np.array_equal(loaded.predict(x), model.predict(x))
        for a, b in zip(loaded.state_arrays(), model.state_arrays()):
            assert np.array_equal(a, b)

    def test_running_statistics_survive(self, paired_space, rng, tmp_path):
        model = small_model(paired_space)
        self.train_step(model, rng)
        bn = model.layers[1]
        assert not np.allclose(bn.running_mean, 0.0)
        save_checkpoint(model, tmp_path / "ckpt")
        loaded = load_checkpoint(tmp_path / "ckpt")
        assert np.array_equal(loaded.layers[1].running_mean, bn.running_mean)
        assert np.array_equal(loaded.layers[1].running_var, bn.running_var)

    def test_missing_file_detected(self, paired_space, tmp_path):
        model = small_model(paired_space)
        save_checkpoint(model, tmp_path / "ckpt")
        (tmp_path / "ckpt" / "weights.npz").unlink()
        with pytest.raises(CheckpointCorrupt):
            load_checkpoint(tmp_path / "ckpt")

    def test_wrong_array_count_detected(self, paired_space, tmp_path):
        model = small_model(paired_space)
        save_checkpoint(model, tmp_path / "ckpt")
        arrays = model.snapshot()[:-1]
        np.savez(tmp_path / "ckpt" / "weights.npz",
                 **{f"arr_{i:04d}": a for i, a in enumerate(arrays)})
        with pytest.raises(CheckpointCorrupt):
            load_checkpoint(tmp_path / "ckpt")

    def test_unreadable_metadata_detected(self, paired_space, tmp_path):
        model = small_model(paired_space)
        save_checkpoint(model, tmp_path / "ckpt")
        (tmp_path / "ckpt" / "model.json").write_text("{not json")
        with pytest.raises(CheckpointCorrupt):
            load_checkpoint(tmp_path / "ckpt")

    def test_missing_directory(self, tmp_path):
        with pytest.raises(CheckpointCorrupt):
            load_checkpoint(tmp_path / "nothing")


class TestBackboneHead:
    def wrapped_micro(self, space, seed=3):
        layers = micro_cnn_layers(SMALL, space.vector_length,
                                  rng=np.random.default_rng(seed),
                                  dtype=np.float64)
        backbone = StackBackbone(layers[:-1], SMALL.flatten_dim())
        return layers, backbone

    def test_head_on_backbone_matches_plain_stack(self, paired_space, rng):
        layers, backbone = self.wrapped_micro(paired_space)
        plain = SigmoidHeadModel(layers, space=paired_space,
                                 micro_cnn_config=SMALL, dtype=np.float64)
        wrapped = attach_multilabel_head(backbone, paired_space,
                                         rng=np.random.default_rng(9),
                                         dtype=np.float64)
        wrapped.layers[-1].weights = layers[-1].weights.copy()
        wrapped.layers[-1].bias = layers[-1].bias.copy()
        x = batch_for(SMALL, rng)
        assert np.allclose(wrapped.forward(x), plain.forward(x))

    def test_head_gradients_match_plain_stack(self, paired_space, rng):
        layers, backbone = self.wrapped_micro(paired_space)
        plain = SigmoidHeadModel(layers, space=paired_space,
                                 micro_cnn_config=SMALL, dtype=np.float64)
        wrapped = attach_multilabel_head(backbone, paired_space,
                                         rng=np.random.default_rng(9),
                                         dtype=np.float64)
        wrapped.layers[-1].weights = layers[-1].weights.copy()
        wrapped.layers[-1].bias = layers[-1].bias.copy()
        x = batch_for(SMALL, rng)
        y = np.zeros((6, 34))
        y[:, 1] = 1.0
        y[:, 10] = 1.0
        loss_a = plain.loss_and_grads(x, y)
        loss_b = wrapped.loss_and_grads(x, y)
        assert loss_a == pytest.approx(loss_b)
        for ga, gb in zip(plain.gradients(), wrapped.gradients()):
            assert np.allclose(ga, gb)

    def test_frozen_backbone_excluded_from_training(self, paired_space):
        _, backbone = self.wrapped_micro(paired_space)
        model = attach_multilabel_head(backbone, paired_space,
                                       freeze_backbone=True,
                                       rng=np.random.default_rng(9))
        assert backbone.frozen
        # only the head's weight matrix and bias remain trainable
        assert len(model.parameters()) == 2
        assert model.freeze_backbone

    def test_backbone_name_recorded(self, paired_space):
        _, backbone = self.wrapped_micro(paired_space)
        model = attach_multilabel_head(backbone, paired_space)
        assert model.backbone_name == "StackBackbone"
