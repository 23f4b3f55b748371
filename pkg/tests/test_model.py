import numpy as np
import pytest

from adpgcn.errors import ConfigError, LabelLongerThanInput, ShapeMismatch
from adpgcn.gradcheck import finite_difference_check
from adpgcn.layers import MultiHeadAttention
from adpgcn.model import Embedding, Forecaster, GcnConfig, ModelConfig
from adpgcn.tensor import Tensor, mean, mul, no_grad

from oracles import attention_loop_ref


def tiny_config(**overrides):
    base = dict(
        n_dims=4, seq_len=16, pred_len=4, label_len=8,
        d_model=16, n_heads=2, d_ff=24, dropout=0.0,
        gcn=GcnConfig(hidden=4, diffusion_steps=2, embed_dim=3, depth=2),
    )
    base.update(overrides)
    return ModelConfig(**base)


def random_batch(cfg, batch=2, seed=0):
    rng = np.random.default_rng(seed)
    total = cfg.label_len + cfg.pred_len
    return {
        "x_enc": rng.normal(size=(batch, cfg.seq_len, cfg.n_dims)),
        "marks_enc": rng.uniform(-0.5, 0.5, size=(batch, cfg.seq_len, 4)),
        "x_dec_known": rng.normal(size=(batch, cfg.label_len, cfg.n_dims)),
        "marks_dec": rng.uniform(-0.5, 0.5, size=(batch, total, 4)),
        "y": rng.normal(size=(batch, cfg.pred_len, cfg.n_dims)),
    }


class TestModelConfig:
    def test_label_len_default_short_sequence(self):
        cfg = ModelConfig(n_dims=3, seq_len=48, pred_len=24)
        assert cfg.label_len == 24

    def test_label_len_default_long_sequence(self):
        cfg = ModelConfig(n_dims=3, seq_len=96, pred_len=24)
        assert cfg.label_len == 48

    def test_rejects_bad_pred_len(self):
        with pytest.raises(ConfigError, match="pred_len"):
            ModelConfig(n_dims=3, seq_len=48, pred_len=0)

    def test_rejects_label_longer_than_input(self):
        with pytest.raises(LabelLongerThanInput):
            ModelConfig(n_dims=3, seq_len=48, pred_len=24, label_len=64)

    def test_rejects_indivisible_heads(self):
        with pytest.raises(ConfigError, match="n_heads"):
            ModelConfig(n_dims=3, seq_len=48, pred_len=24, d_model=30, n_heads=4)

    def test_round_trips_through_dict(self):
        cfg = tiny_config()
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestEmbedding:
    def test_zero_inputs_give_positional_encoding(self):
        rng = np.random.default_rng(0)
        emb = Embedding(3, 8, max_len=10, rate=0.0, rng=rng)
        out = emb(Tensor(np.zeros((2, 5, 3))), Tensor(np.zeros((2, 5, 4))),
                  training=False, rng=None)
        np.testing.assert_allclose(out.data[0], emb.positions[:5], atol=1e-15)
        np.testing.assert_allclose(out.data[1], emb.positions[:5], atol=1e-15)

    def test_output_shape(self):
        rng = np.random.default_rng(1)
        emb = Embedding(7, 64, max_len=32, rate=0.0, rng=rng)
        out = emb(Tensor(np.ones((2, 24, 7))), Tensor(np.zeros((2, 24, 4))),
                  training=False, rng=None)
        assert out.shape == (2, 24, 64)

    def test_value_projection_is_linear(self):
        rng = np.random.default_rng(2)
        emb = Embedding(3, 8, max_len=10, rate=0.0, rng=rng)
        marks = Tensor(np.zeros((1, 4, 4)))
        x = np.random.default_rng(3).normal(size=(1, 4, 3))
        zero = emb(Tensor(np.zeros((1, 4, 3))), marks, False, None).data
        single = emb(Tensor(x), marks, False, None).data - zero
        double = emb(Tensor(2 * x), marks, False, None).data - zero
        np.testing.assert_allclose(double, 2 * single, atol=1e-12)

    def test_mark_shape_mismatch(self):
        rng = np.random.default_rng(4)
        emb = Embedding(3, 8, max_len=10, rate=0.0, rng=rng)
        with pytest.raises(ShapeMismatch):
            emb(Tensor(np.zeros((1, 4, 3))), Tensor(np.zeros((1, 5, 4))), False, None)


class TestAttention:
    def test_single_position(self):
        rng = np.random.default_rng(5)
        attn = MultiHeadAttention(8, 2, rng)
        x = Tensor(rng.normal(size=(1, 1, 8)))
        out = attn(x, x, x)
        # one key: softmax weight is exactly 1, so output = Wo(Wv(x))
        expected = attn.wo(attn.wv(x)).data
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_identical_keys_average_values(self):
        rng = np.random.default_rng(6)
        attn = MultiHeadAttention(4, 1, rng)
        queries = Tensor(rng.normal(size=(1, 3, 4)))
        keys = Tensor(np.tile(rng.normal(size=(1, 1, 4)), (1, 5, 1)))
        values = Tensor(rng.normal(size=(1, 5, 4)))
        out = attn(queries, keys, values)
        avg = Tensor(np.tile(values.data.mean(axis=1, keepdims=True), (1, 5, 1)))
        expected = attn(queries, keys, avg)
        np.testing.assert_allclose(out.data, expected.data, atol=1e-12)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(7)
        attn = MultiHeadAttention(4, 1, rng)
        x = rng.normal(size=(1, 3, 4))
        out = attn(Tensor(x), Tensor(x), Tensor(x)).data
        q = x[0] @ attn.wq.w.data + attn.wq.b.data
        k = x[0] @ attn.wk.w.data + attn.wk.b.data
        v = x[0] @ attn.wv.w.data + attn.wv.b.data
        mixed = attention_loop_ref(q, k, v)
        expected = mixed @ attn.wo.w.data + attn.wo.b.data
        np.testing.assert_allclose(out[0], expected, atol=1e-10)

    def test_causal_matches_loop_oracle(self):
        rng = np.random.default_rng(8)
        attn = MultiHeadAttention(4, 1, rng)
        x = rng.normal(size=(1, 5, 4))
        out = attn(Tensor(x), Tensor(x), Tensor(x), causal=True).data
        q = x[0] @ attn.wq.w.data + attn.wq.b.data
        k = x[0] @ attn.wk.w.data + attn.wk.b.data
        v = x[0] @ attn.wv.w.data + attn.wv.b.data
        expected = attention_loop_ref(q, k, v, causal=True) @ attn.wo.w.data \
            + attn.wo.b.data
        np.testing.assert_allclose(out[0], expected, atol=1e-10)


class TestEncoder:
    def test_output_length_arithmetic(self):
        cfg = ModelConfig(n_dims=3, seq_len=48, pred_len=24, d_model=32,
                          n_heads=4, dropout=0.0)
        model = Forecaster(cfg, seed=0)
        batch = random_batch(cfg, batch=2, seed=1)
        out = model.encode(Tensor(batch["x_enc"]), Tensor(batch["marks_enc"]))
        assert out.shape == (2, 48 // 4 + 24 // 2, 32)

    def test_all_zero_input_is_deterministic_nonzero(self):
        cfg = tiny_config()
        model = Forecaster(cfg, seed=0)
        x = Tensor(np.zeros((1, cfg.seq_len, cfg.n_dims)))
        marks = Tensor(np.zeros((1, cfg.seq_len, 4)))
        out1 = model.encode(x, marks).data
        out2 = model.encode(x, marks).data
        np.testing.assert_array_equal(out1, out2)
        assert np.any(out1 != 0)

    def test_wrong_length_rejected(self):
        cfg = tiny_config()
        model = Forecaster(cfg, seed=0)
        with pytest.raises(ShapeMismatch):
            model.encode(Tensor(np.zeros((1, cfg.seq_len + 4, cfg.n_dims))),
                         Tensor(np.zeros((1, cfg.seq_len + 4, 4))))


class TestDecoder:
    def test_output_shape(self):
        cfg = tiny_config()
        model = Forecaster(cfg, seed=0)
        batch = random_batch(cfg)
        out = model.forward_batch(batch)
        assert out.shape == (2, cfg.pred_len, cfg.n_dims)

    def test_zero_pad_region_is_exactly_zero(self):
        cfg = tiny_config()
        model = Forecaster(cfg, seed=0)
        known = Tensor(np.random.default_rng(0).normal(size=(2, cfg.label_len, cfg.n_dims)))
        assembled = model.assemble_decoder_input(known).data
        np.testing.assert_array_equal(
            assembled[:, cfg.label_len:], np.zeros((2, cfg.pred_len, cfg.n_dims))
        )
        np.testing.assert_array_equal(assembled[:, :cfg.label_len], known.data)

    def test_dead_attention_ignores_encoder_and_inputs(self):
        cfg = tiny_config(use_gcn=False)
        model = Forecaster(cfg, seed=0)
        # kill every path that could carry batch-dependent signal
        for layer in model.dec_layers:
            for attn in (layer.self_attn, layer.cross_attn):
                for lin in (attn.wq, attn.wk, attn.wv, attn.wo):
                    lin.w.data = np.zeros_like(lin.w.data)
                    lin.b.data = np.zeros_like(lin.b.data)
            for lin in (layer.ffn.lin1, layer.ffn.lin2):
                lin.w.data = np.zeros_like(lin.w.data)
                lin.b.data = np.zeros_like(lin.b.data)
        model.dec_embed.value.w.data = np.zeros_like(model.dec_embed.value.w.data)
        model.dec_embed.time.w.data = np.zeros_like(model.dec_embed.time.w.data)
        batch = random_batch(cfg, batch=3, seed=2)
        enc_out = model.encode(Tensor(batch["x_enc"]), Tensor(batch["marks_enc"]))
        out = model.decode(Tensor(batch["x_dec_known"]), Tensor(batch["marks_dec"]),
                           enc_out).data
        # every batch item collapses onto the same bias-driven trajectory
        np.testing.assert_allclose(out[0], out[1], atol=1e-12)
        np.testing.assert_allclose(out[0], out[2], atol=1e-12)

    def test_causality_of_self_attention(self):
        cfg = tiny_config(use_gcn=False)
        model = Forecaster(cfg, seed=0)
        batch = random_batch(cfg, batch=1, seed=3)
        enc_out = model.encode(Tensor(batch["x_enc"]), Tensor(batch["marks_enc"]))
        assembled = model.assemble_decoder_input(Tensor(batch["x_dec_known"]))
        marks = Tensor(batch["marks_dec"])
        base = model.decode_assembled(assembled, marks, enc_out).data

        total = cfg.label_len + cfg.pred_len
        h = model.dec_embed(assembled, marks, False, None)
        h = model.dec_layers[0](h, enc_out, False, None)
        base_first_layer = h.data

        for j in range(1, total):
            perturbed = assembled.data.copy()
            perturbed[0, j] += 1.0
            hp = model.dec_embed(Tensor(perturbed), marks, False, None)
            hp = model.dec_layers[0](hp, enc_out, False, None)
            np.testing.assert_allclose(
                hp.data[0, :j], base_first_layer[0, :j], atol=1e-12,
                err_msg=f"position {j} leaked backwards",
            )
        assert base.shape == (1, cfg.pred_len, cfg.n_dims)


class TestForecaster:
    def test_eval_forward_is_deterministic(self):
        cfg = tiny_config(dropout=0.1)
        model = Forecaster(cfg, seed=0)
        model.eval_mode()
        batch = random_batch(cfg)
        a = model.forward_batch(batch).data
        b = model.forward_batch(batch).data
        np.testing.assert_array_equal(a, b)

    def test_one_shot_decoding_ignores_future_truth(self):
        cfg = tiny_config()
        model = Forecaster(cfg, seed=0)
        batch = random_batch(cfg)
        out1 = model.forward_batch(batch).data
        batch["y"] = batch["y"] + 100.0
        out2 = model.forward_batch(batch).data
        np.testing.assert_array_equal(out1, out2)

    def test_every_parameter_group_receives_gradient(self):
        cfg = tiny_config()
        model = Forecaster(cfg, seed=1)
        model.train_mode()
        batch = random_batch(cfg, seed=4)
        pred = model.forward_batch(batch)
        diff = pred - Tensor(batch["y"])
        mean(mul(diff, diff)).backward()
        for name, p in model.parameters().items():
            assert p.grad is not None and np.any(p.grad != 0), name

    def test_k0_leaves_embeddings_without_gradient(self):
        cfg = tiny_config(gcn=GcnConfig(hidden=4, diffusion_steps=0, embed_dim=3, depth=2))
        model = Forecaster(cfg, seed=1)
        batch = random_batch(cfg, seed=5)
        pred = model.forward_batch(batch)
        mean(pred).backward()
        assert model.adjacency.e1.grad is None
        assert model.adjacency.e2.grad is None

    def test_use_gcn_toggle_changes_output(self):
        cfg_on = tiny_config()
        cfg_off = tiny_config(use_gcn=False)
        batch = random_batch(cfg_on, seed=6)
        out_on = Forecaster(cfg_on, seed=0).forward_batch(batch).data
        out_off = Forecaster(cfg_off, seed=0).forward_batch(batch).data
        assert np.max(np.abs(out_on - out_off)) > 1e-8

    def test_ablation_shares_host_initialization(self):
        on = Forecaster(tiny_config(), seed=3)
        off = Forecaster(tiny_config(use_gcn=False), seed=3)
        off_params = off.parameters()
        gcn_keys = [k for k in on.parameters() if "gcn" in k or "adjacency" in k]
        assert gcn_keys and not [k for k in off_params if "gcn" in k or "adjacency" in k]
        for name, p in off_params.items():
            np.testing.assert_array_equal(p.data, on.parameters()[name].data)

    def test_shape_invariance_grid(self):
        for n_dims in (1, 3):
            for seq_len, pred_len in ((8, 2), (16, 6)):
                cfg = ModelConfig(
                    n_dims=n_dims, seq_len=seq_len, pred_len=pred_len,
                    label_len=seq_len // 2, d_model=8, n_heads=2, d_ff=8,
                    dropout=0.0, gcn=GcnConfig(hidden=2, diffusion_steps=1,
                                               embed_dim=2, depth=2),
                )
                model = Forecaster(cfg, seed=0)
                batch = random_batch(cfg, batch=2, seed=7)
                out = model.forward_batch(batch)
                assert out.shape == (2, pred_len, n_dims)

    def test_gradient_audit_tiny_config(self):
        cfg = tiny_config()
        model = Forecaster(cfg, seed=2)
        batch = random_batch(cfg, batch=1, seed=8)
        params = model.parameters()
        target = batch["y"]

        def loss():
            pred = model.forward_batch(batch)
            diff = pred - Tensor(target)
            return mean(mul(diff, diff))

        sample = dict(list(params.items())[::7])  # spot audit over param groups
        err = finite_difference_check(
            loss, list(sample.values()), max_coords=3,
            rng=np.random.default_rng(0),
        )
        assert err < 1e-3

    def test_state_dict_round_trip(self):
        cfg = tiny_config()
        model = Forecaster(cfg, seed=0)
        state = model.state_dict()
        other = Forecaster(cfg, seed=99)
        other.load_state_dict(state)
        batch = random_batch(cfg, seed=9)
        with no_grad():
            a = model.forward_batch(batch).data
            b = other.forward_batch(batch).data
        np.testing.assert_array_equal(a, b)

    def test_dropout_draws_do_not_affect_eval(self):
        cfg = tiny_config(dropout=0.2)
        model = Forecaster(cfg, seed=0)
        batch = random_batch(cfg, seed=10)
        model.train_mode()
        train_out = model.forward_batch(batch).data
        model.eval_mode()
        eval_out1 = model.forward_batch(batch).data
        eval_out2 = model.forward_batch(batch).data
        np.testing.assert_array_equal(eval_out1, eval_out2)
        assert np.max(np.abs(train_out - eval_out1)) > 0
