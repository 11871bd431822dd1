from fractions import Fraction

import numpy as np
import pytest

from hummuss.errors import ConfigError, MissingTensorError, ModeError, ShapeMismatchError, UnknownTensorError
from hummuss.model import (
    HummussConfig, ModelState, ModelWeights, expected_shapes, forward, init_model,
    spatiotemporal_forward, stream_step,
)


def small_config(**kw):
    base = dict(n_blocks=2, d_m=16, d_rep=24, state_dim=8, causal=True)
    base.update(kw)
    return HummussConfig(**base)


@pytest.fixture(scope="module")
def causal_model():
    return init_model(small_config(), 7)


@pytest.fixture(scope="module")
def bi_model():
    return init_model(small_config(causal=False), 7)


class TestConfig:
    def test_defaults(self):
        assert HummussConfig().n_expand == Fraction(5, 2)
        assert HummussConfig(causal=True).n_expand == 3

    def test_text_roundtrip(self):
        cfg = small_config(n_expand=Fraction(5, 2), block_agg="learned", fusion="mean", nominal_fps=25.0)
        assert HummussConfig.from_text(cfg.to_text()) == cfg

    @pytest.mark.parametrize("kw", [dict(d_m=10, n_expand=Fraction(9, 4)), dict(state_dim=7),
                                    dict(d_m=15, k_temporal=2), dict(fusion="max"), dict(n_blocks=0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            small_config(**kw)

    def test_bad_text(self):
        with pytest.raises(ConfigError):
            HummussConfig.from_text("n_blocks=2\nbogus=1\n")


class TestParamCount:
    @pytest.mark.parametrize("causal", [False, True])
    def test_default_model_about_16m(self, causal):
        n = init_model(HummussConfig(causal=causal), 0).num_params()
        assert 15_000_000 <= n <= 17_000_000

    def test_matches_expected_shapes(self, causal_model):
        total = sum(int(np.prod(s)) for s in expected_shapes(causal_model.config).values())
        assert causal_model.num_params() == total


class TestForward:
    def test_output_shapes(self):
        cfg = HummussConfig(n_blocks=1, d_m=16, state_dim=8)
        rep, pose = forward(init_model(cfg, 0), np.zeros((2, 27, 17, 3)))
        assert rep.shape == (2, 27, 17, 512) and pose.shape == (2, 27, 17, 3)

    def test_zero_input(self, bi_model):
        w = bi_model
        zero_lift = ModelWeights(w.config, w.lift_w, np.zeros_like(w.lift_b), w.layers, w.head_w,
                                 np.zeros_like(w.head_b), w.readout_w, w.readout_b)
        rep, pose = forward(zero_lift, np.zeros((1, 5, 4, 3)))
        assert np.all(rep == 0)
        np.testing.assert_array_equal(pose, np.broadcast_to(w.readout_b, pose.shape))

    def test_wrong_input_width(self, bi_model):
        with pytest.raises(ConfigError):
            forward(bi_model, np.zeros((1, 5, 4, 2)))

    def test_fusion_weights_sum_to_one(self, bi_model):
        x = np.random.default_rng(0).standard_normal((2, 6, 5, 16))
        _, alpha = spatiotemporal_forward(x, bi_model.layers[0], bi_model.config, return_alpha=True)
        assert alpha.shape == (2, 6, 5, 2)
        np.testing.assert_allclose(alpha.sum(-1), 1.0, atol=1e-6)

    def test_identical_streams_pass_through(self, bi_model):
        from hummuss.model import fuse
        z = np.random.default_rng(1).standard_normal((1, 3, 4, 16))
        out, _ = fuse(z, z, bi_model.layers[0], "learned")
        np.testing.assert_allclose(out, z, rtol=1e-14)

    def test_bidirectional_sees_future(self, bi_model):
        rng = np.random.default_rng(2)
        u = rng.standard_normal((1, 12, 4, 3))
        v = u.copy()
        v[:, 8:] += 1.0
        assert not np.allclose(forward(bi_model, u)[1][:, :8], forward(bi_model, v)[1][:, :8])

    @pytest.mark.parametrize("fusion,agg", [("mean", "gate"), ("gate", "learned"), ("learned", "mean")])
    def test_aggregation_variants_stream(self, fusion, agg):
        w = init_model(small_config(fusion=fusion, block_agg=agg), 3)
        u = np.random.default_rng(3).standard_normal((1, 10, 4, 3))
        pose = forward(w, u)[1][0]
        state = ModelState()
        got = np.stack([stream_step(w, u[0, f], None, state) for f in range(10)])
        np.testing.assert_allclose(got, pose, atol=1e-5)


class TestCausal:
    def test_prefix_bit_identical(self, causal_model):
        rng = np.random.default_rng(4)
        u = rng.standard_normal((2, 30, 5, 3))
        base = forward(causal_model, u)
        for t in (1, 14, 29):
            v = u.copy()
            v[:, t:] = rng.standard_normal(v[:, t:].shape)
            out = forward(causal_model, v)
            np.testing.assert_array_equal(out[0][:, :t], base[0][:, :t])
            np.testing.assert_array_equal(out[1][:, :t], base[1][:, :t])


class TestStreaming:
    def test_matches_forward(self, causal_model):
        u = np.random.default_rng(5).standard_normal((1, 60, 6, 3))
        _, pose = forward(causal_model, u)
        state = ModelState()
        got = np.stack([stream_step(causal_model, u[0, f], f / 30.0, state) for f in range(60)])
        assert np.max(np.abs(got - pose[0])) <= 1e-5

    def test_single_frame(self, causal_model):
        u = np.random.default_rng(6).standard_normal((1, 1, 6, 3))
        _, pose = forward(causal_model, u)
        np.testing.assert_allclose(stream_step(causal_model, u[0, 0], 0.0, ModelState()), pose[0, 0], atol=1e-12)

    def test_reset_restarts(self, causal_model):
        u = np.random.default_rng(7).standard_normal((5, 6, 3))
        state = ModelState()
        first = [stream_step(causal_model, f, None, state) for f in u]
        state.reset()
        again = [stream_step(causal_model, f, None, state) for f in u]
        np.testing.assert_array_equal(first, again)

    def test_state_size_constant(self, causal_model):
        cfg = causal_model.config
        state = ModelState()
        frames = np.random.default_rng(8).standard_normal((50, 6, 3))
        sizes = []
        for i, f in enumerate(frames):
            stream_step(causal_model, f, i / 30.0, state)
            sizes.append(state.nbytes)
        per_joint = 2 * cfg.n_blocks * (cfg.d_m // cfg.k_temporal) * (cfg.state_dim // 2)
        assert state.complex_count == 6 * per_joint
        assert len(set(sizes)) == 1 and sizes[0] == 16 * 6 * per_joint

    def test_bidirectional_rejected(self, bi_model):
        with pytest.raises(ModeError):
            stream_step(bi_model, np.zeros((4, 3)), 0.0, ModelState())

    def test_non_monotone_timestamp(self, causal_model):
        state = ModelState()
        stream_step(causal_model, np.zeros((4, 3)), 1.0, state)
        with pytest.raises(ValueError):
            stream_step(causal_model, np.zeros((4, 3)), 1.0, state)
        with pytest.raises(ValueError):
            stream_step(causal_model, np.zeros((4, 3)), 0.5, state)

    def test_joint_count_change_rejected(self, causal_model):
        state = ModelState()
        stream_step(causal_model, np.zeros((4, 3)), None, state)
        with pytest.raises(ValueError):
            stream_step(causal_model, np.zeros((5, 3)), None, state)

    def test_timestamp_gap_rescales_delta(self, causal_model):
        # frames arriving every 2/fps seconds step like forward() with a doubled delta
        u = np.random.default_rng(9).standard_normal((1, 8, 4, 3))
        _, pose = forward(causal_model, u, delta_scale=2.0)
        state = ModelState(last_timestamp=-2 / 30.0)
        got = np.stack([stream_step(causal_model, u[0, f], 2 * f / 30.0, state) for f in range(8)])
        assert np.max(np.abs(got - pose[0])) <= 1e-5
        nominal = forward(causal_model, u)[1][0]
        assert np.max(np.abs(got - nominal)) > 1e-6
