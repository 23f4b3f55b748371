"""The host forecaster: attention encoder-decoder with optional GCN blocks.

Layout mirrors the stacked-replica encoder of the underlying architecture at
desk scale: a 3-layer main stack with length-halving max pooling after layers
1 and 2, an auxiliary 1-layer stack fed the second half of the embedded input
(pooled once), outputs concatenated along the length axis. The decoder input
is the last label_len known steps followed by pred_len zeros; all pred_len
steps are emitted in a single forward pass.

When use_gcn is set, one GcnBlock is applied to the raw encoder input and one
to the assembled decoder input, both sharing a single AdaptiveAdjacency but
not layer weights. Host parameters are drawn from an RNG stream independent
of the GCN stream, so toggling use_gcn never changes the host init.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, LabelLongerThanInput, ShapeMismatch
from .graph import AdaptiveAdjacency, GcnBlock
from .layers import (
    FeedForward,
    Linear,
    LayerNorm,
    MultiHeadAttention,
    collect_parameters,
    sinusoidal_positions,
)
from .tensor import Tensor, concat_axis, dropout, max_pool_len, slice_axis

N_TIME_FEATURES = 4


@dataclass
class GcnConfig:
    hidden: int = 16
    diffusion_steps: int = 2
    embed_dim: int = 10
    depth: int = 2
    init_scale: float = 1.0


@dataclass
class ModelConfig:
    n_dims: int
    seq_len: int
    pred_len: int
    label_len: int = None
    d_model: int = 32
    n_heads: int = 4
    d_ff: int = 64
    enc_layers_main: int = 3
    enc_layers_aux: int = 1
    dec_layers: int = 2
    dropout: float = 0.05
    attention: str = "full"
    use_gcn: bool = True
    gcn: GcnConfig = field(default_factory=GcnConfig)

    def __post_init__(self):
        if isinstance(self.gcn, dict):
            self.gcn = GcnConfig(**self.gcn)
        if self.label_len is None:
            self.label_len = 48 if self.seq_len >= 96 else self.seq_len // 2
        self.validate()

    def validate(self):
        if self.n_dims < 1:
            raise ConfigError(f"n_dims must be >= 1, got {self.n_dims}")
        if self.pred_len < 1:
            raise ConfigError(f"pred_len must be >= 1, got {self.pred_len}")
        if self.label_len < 1:
            raise ConfigError(f"label_len must be >= 1, got {self.label_len}")
        if self.label_len > self.seq_len:
            raise LabelLongerThanInput(
                f"label_len {self.label_len} > seq_len {self.seq_len}"
            )
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.attention != "full":
            raise ConfigError(f"unsupported attention kind {self.attention!r}")
        # main stack halves the length after every layer but the last; the aux
        # stack halves its half-length view once more
        divisor = max(2 ** (self.enc_layers_main - 1), 4)
        if self.seq_len % divisor != 0:
            raise ConfigError(
                f"seq_len {self.seq_len} must be divisible by {divisor} "
                f"for the encoder pooling plan"
            )

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class EncoderLayer:
    def __init__(self, cfg, rng):
        self.attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, rng)
        self.norm1 = LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.d_ff, rng)
        self.norm2 = LayerNorm(cfg.d_model)
        self.rate = cfg.dropout

    def __call__(self, x, training, rng):
        x = self.norm1(x + dropout(self.attn(x, x, x), self.rate, rng, training))
        return self.norm2(x + dropout(self.ffn(x), self.rate, rng, training))

    def parameters(self):
        return collect_parameters(
            {"attn": self.attn, "norm1": self.norm1, "ffn": self.ffn, "norm2": self.norm2}
        )


class DecoderLayer:
    def __init__(self, cfg, rng):
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, rng)
        self.norm1 = LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, rng)
        self.norm2 = LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.d_ff, rng)
        self.norm3 = LayerNorm(cfg.d_model)
        self.rate = cfg.dropout

    def __call__(self, x, enc_out, training, rng):
        x = self.norm1(
            x + dropout(self.self_attn(x, x, x, causal=True), self.rate, rng, training)
        )
        x = self.norm2(
            x + dropout(self.cross_attn(x, enc_out, enc_out), self.rate, rng, training)
        )
        return self.norm3(x + dropout(self.ffn(x), self.rate, rng, training))

    def parameters(self):
        return collect_parameters(
            {
                "self_attn": self.self_attn,
                "norm1": self.norm1,
                "cross_attn": self.cross_attn,
                "norm2": self.norm2,
                "ffn": self.ffn,
                "norm3": self.norm3,
            }
        )


class Embedding:
    """value projection + fixed sinusoidal positions + calendar projection."""

    def __init__(self, n_dims, d_model, max_len, rate, rng):
        self.value = Linear(n_dims, d_model, rng, bias=False)
        self.time = Linear(N_TIME_FEATURES, d_model, rng, bias=False)
        self.positions = sinusoidal_positions(max_len, d_model)
        self.rate = rate

    def __call__(self, x, marks, training, rng):
        length = x.shape[1]
        if marks.shape[:2] != x.shape[:2]:
            raise ShapeMismatch(
                f"marks shape {marks.shape} does not match values {x.shape}"
            )
        out = self.value(x) + self.time(marks) + Tensor(self.positions[:length])
        return dropout(out, self.rate, rng, training)

    def parameters(self):
        return collect_parameters({"value": self.value, "time": self.time})


class Forecaster:
    def __init__(self, config, seed=0):
        self.config = config
        self.seed = seed
        self.training = False
        host_ss, gcn_ss, drop_ss = np.random.SeedSequence(seed).spawn(3)
        rng = np.random.default_rng(host_ss)
        self._dropout_rng = np.random.default_rng(drop_ss)

        cfg = config
        max_len = max(cfg.seq_len, cfg.label_len + cfg.pred_len)
        self.enc_embed = Embedding(cfg.n_dims, cfg.d_model, max_len, cfg.dropout, rng)
        self.dec_embed = Embedding(cfg.n_dims, cfg.d_model, max_len, cfg.dropout, rng)
        self.enc_main = [EncoderLayer(cfg, rng) for _ in range(cfg.enc_layers_main)]
        self.enc_aux = [EncoderLayer(cfg, rng) for _ in range(cfg.enc_layers_aux)]
        self.enc_norm_main = LayerNorm(cfg.d_model)
        self.enc_norm_aux = LayerNorm(cfg.d_model)
        self.dec_layers = [DecoderLayer(cfg, rng) for _ in range(cfg.dec_layers)]
        self.dec_norm = LayerNorm(cfg.d_model)
        self.proj = Linear(cfg.d_model, cfg.n_dims, rng)

        if cfg.use_gcn:
            gcn_rng = np.random.default_rng(gcn_ss)
            self.adjacency = AdaptiveAdjacency(cfg.n_dims, cfg.gcn.embed_dim, gcn_rng)
            self.enc_gcn = GcnBlock(
                self.adjacency, cfg.gcn.hidden, cfg.gcn.diffusion_steps,
                cfg.gcn.depth, gcn_rng, init_scale=cfg.gcn.init_scale,
            )
            self.dec_gcn = GcnBlock(
                self.adjacency, cfg.gcn.hidden, cfg.gcn.diffusion_steps,
                cfg.gcn.depth, gcn_rng, init_scale=cfg.gcn.init_scale,
            )
        else:
            self.adjacency = None
            self.enc_gcn = None
            self.dec_gcn = None

    # --- mode ------------------------------------------------------------------

    def train_mode(self, flag=True):
        self.training = flag
        return self

    def eval_mode(self):
        return self.train_mode(False)

    # --- forward pieces -----------------------------------------------------------

    def encode(self, x_enc, marks_enc):
        """x_enc: Tensor (B, seq_len, N) raw (normalized) values."""
        cfg = self.config
        if x_enc.shape[1] != cfg.seq_len:
            raise ShapeMismatch(
                f"encoder input length {x_enc.shape[1]}, expected {cfg.seq_len}"
            )
        rng = self._dropout_rng
        if cfg.use_gcn:
            x_enc = self.enc_gcn(x_enc)
        e = self.enc_embed(x_enc, marks_enc, self.training, rng)

        h = e
        for i, layer in enumerate(self.enc_main):
            h = layer(h, self.training, rng)
            if i + 1 < len(self.enc_main):
                h = max_pool_len(h, axis=1)
        h = self.enc_norm_main(h)

        a = slice_axis(e, 1, cfg.seq_len // 2, cfg.seq_len)
        for layer in self.enc_aux:
            a = layer(a, self.training, rng)
        a = max_pool_len(a, axis=1)
        a = self.enc_norm_aux(a)

        return concat_axis([h, a], axis=1)

    def assemble_decoder_input(self, x_dec_known):
        """Known label steps followed by pred_len zeros along time."""
        cfg = self.config
        if x_dec_known.shape[1] > cfg.seq_len:
            raise LabelLongerThanInput(
                f"label region {x_dec_known.shape[1]} exceeds seq_len {cfg.seq_len}"
            )
        if x_dec_known.shape[1] != cfg.label_len:
            raise ShapeMismatch(
                f"label region {x_dec_known.shape[1]}, expected {cfg.label_len}"
            )
        batch = x_dec_known.shape[0]
        pad = Tensor(np.zeros((batch, cfg.pred_len, cfg.n_dims)))
        return concat_axis([x_dec_known, pad], axis=1)

    def decode_assembled(self, x_dec_full, marks_dec, enc_out):
        cfg = self.config
        rng = self._dropout_rng
        if cfg.use_gcn:
            x_dec_full = self.dec_gcn(x_dec_full)
        h = self.dec_embed(x_dec_full, marks_dec, self.training, rng)
        for layer in self.dec_layers:
            h = layer(h, enc_out, self.training, rng)
        out = self.proj(self.dec_norm(h))
        total = cfg.label_len + cfg.pred_len
        return slice_axis(out, 1, cfg.label_len, total)

    def decode(self, x_dec_known, marks_dec, enc_out):
        return self.decode_assembled(
            self.assemble_decoder_input(x_dec_known), marks_dec, enc_out
        )

    def forward(self, x_enc, marks_enc, x_dec_known, marks_dec):
        """One-shot prediction of all pred_len steps, shape (B, pred_len, N)."""
        as_tensor = lambda v: v if isinstance(v, Tensor) else Tensor(v)
        enc_out = self.encode(as_tensor(x_enc), as_tensor(marks_enc))
        return self.decode(as_tensor(x_dec_known), as_tensor(marks_dec), enc_out)

    def forward_batch(self, batch):
        return self.forward(
            batch["x_enc"], batch["marks_enc"], batch["x_dec_known"], batch["marks_dec"]
        )

    # --- parameters ------------------------------------------------------------------

    def parameters(self):
        components = {
            "enc_embed": self.enc_embed,
            "dec_embed": self.dec_embed,
        }
        for i, layer in enumerate(self.enc_main):
            components[f"enc_main.{i}"] = layer
        for i, layer in enumerate(self.enc_aux):
            components[f"enc_aux.{i}"] = layer
        components["enc_norm_main"] = self.enc_norm_main
        components["enc_norm_aux"] = self.enc_norm_aux
        for i, layer in enumerate(self.dec_layers):
            components[f"dec.{i}"] = layer
        components["dec_norm"] = self.dec_norm
        components["proj"] = self.proj
        if self.config.use_gcn:
            components["adjacency"] = self.adjacency
            components["enc_gcn"] = self.enc_gcn
            components["dec_gcn"] = self.dec_gcn
        return collect_parameters(components)

    def zero_grad(self):
        for p in self.parameters().values():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def load_state_dict(self, state):
        params = self.parameters()
        if set(state) != set(params):
            missing = set(params) ^ set(state)
            raise ConfigError(f"parameter names do not match: {sorted(missing)[:5]}")
        for name, p in params.items():
            arr = np.ascontiguousarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ShapeMismatch(
                    f"{name}: stored shape {arr.shape} vs model {p.data.shape}"
                )
            p.data = arr
