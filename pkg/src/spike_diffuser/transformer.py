"""Spiking transformer variants for noise prediction.

Three architectures share every block primitive:

* sdpt: spiking encoder over the conditioning tokens plus a plain spiking
  decoder (self-attention, cross-attention, feed-forward), no modulation.
* sdit: encoder-only spiking stack over the action tokens; conditioning
  enters solely through shift/scale/gate modulation of each self-attention
  and feed-forward sub-block.
* stmdp: spiking encoder over conditioning tokens; decoder whose
  cross-attention and feed-forward sub-blocks are modulation-wrapped while
  its self-attention stays plain.

Every spiking sub-block follows the same scheme: direct-encode its input
over t_steps, run the LIF recurrence, apply the dense maps to the spike
features per step (time folded into the batch axis), and rate-decode back
to one feature map.  Blocks are pre-norm residual; modulated blocks compute
h + gate * Block(shift + (1 + scale) * LN(h)) with the modulation triple
produced by a per-layer zero-initialized linear map of the conditioning
vector, so every modulated block starts as an exact identity.

Tensors are batched: [B, s, d_model] token streams, [B] integer timesteps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import ndgrad as ng
from . import snn
from .errors import ConfigError
from .ndgrad import ContractError, DimensionError, Tensor

VARIANTS = ("sdpt", "sdit", "stmdp")


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "stmdp"
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    d_ff: int = 256
    t_steps: int = 8
    action_dim: int = 2
    obs_dim: int = 7
    n_obs: int = 2
    horizon: int = 16
    sampler: str = "ddpm"
    lif: snn.LifParams = field(default_factory=snn.LifParams)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.sampler not in ("ddpm", "ddim"):
            raise ConfigError(f"unknown sampler {self.sampler!r}")
        dims = (self.d_model, self.n_heads, self.n_enc_layers, self.n_dec_layers,
                self.d_ff, self.t_steps, self.action_dim, self.obs_dim,
                self.n_obs, self.horizon)
        if any(v < 1 for v in dims):
            raise ConfigError("all model dimensions must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.d_model % 2 != 0:
            raise ConfigError("d_model must be even for the sinusoidal embedding")
        if self.lif.t_steps != self.t_steps:
            object.__setattr__(self, "lif", replace(self.lif, t_steps=self.t_steps))


@dataclass
class ModelWeights:
    config: ModelConfig
    params: dict[str, Tensor]

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]


@dataclass
class CondEmbedding:
    """Timestep embedding, per-observation embeddings, and their join.

    cond_vec (t_embed plus mean-pooled c_embed) feeds the modulation maps.
    """

    t_embed: Tensor      # [B, d]
    c_embed: Tensor      # [B, n_obs, d]
    combined: Tensor     # [B, 1 + n_obs, d]
    cond_vec: Tensor     # [B, d]


@dataclass
class Memory:
    m: Tensor  # [B, s_mem, d]


# ---------------------------------------------------------------------------
# initialization

def _normal(rng, shape, std=0.02):
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def _zeros(shape):
    return Tensor(np.zeros(shape), requires_grad=True)


def _ones(shape):
    return Tensor(np.ones(shape), requires_grad=True)


def _init_ln(p, pfx, d):
    p[f"{pfx}.g"] = _ones((d,))
    p[f"{pfx}.b"] = _zeros((d,))


def _init_attn(p, rng, pfx, d):
    for name in ("wq", "wk", "wv", "wo"):
        p[f"{pfx}.{name}"] = _normal(rng, (d, d))


def _init_ffn(p, rng, pfx, d, d_ff):
    p[f"{pfx}.w1"] = _normal(rng, (d, d_ff))
    p[f"{pfx}.b1"] = _zeros((d_ff,))
    p[f"{pfx}.w2"] = _normal(rng, (d_ff, d))
    p[f"{pfx}.b2"] = _zeros((d,))


def build_variant(config: ModelConfig, seed: int) -> ModelWeights:
    """Create deterministically seeded weights for one architecture.

    Modulation maps (where the variant has them) start at exactly zero, so
    every modulated sub-block begins as an identity.
    """
    rng = np.random.default_rng(seed)
    d, d_ff = config.d_model, config.d_ff
    p: dict[str, Tensor] = {}

    # input maps get a wider init than the residual-stream maps: they lift
    # 2- and 5-wide signals into d_model, and tokens whose content starts
    # far below the position code train an order of magnitude slower
    p["obs_proj.w"] = _normal(rng, (config.obs_dim, d), std=0.2)
    p["obs_proj.b"] = _zeros((d,))
    p["t_mlp.w1"] = _normal(rng, (d, d))
    p["t_mlp.b1"] = _zeros((d,))
    p["t_mlp.w2"] = _normal(rng, (d, d))
    p["t_mlp.b2"] = _zeros((d,))
    p["act_embed.w"] = _normal(rng, (config.action_dim, d), std=0.2)
    p["act_embed.b"] = _zeros((d,))

    if config.variant == "sdit":
        # encoder-only stack over action tokens, every sub-block modulated
        for i in range(config.n_enc_layers):
            _init_ln(p, f"enc.{i}.ln1", d)
            _init_attn(p, rng, f"enc.{i}.ssa", d)
            _init_ln(p, f"enc.{i}.ln2", d)
            _init_ffn(p, rng, f"enc.{i}.ffn", d, d_ff)
            p[f"enc.{i}.mod.w"] = _zeros((d, 6 * d))
            p[f"enc.{i}.mod.b"] = _zeros((6 * d,))
    else:
        for i in range(config.n_enc_layers):
            _init_ln(p, f"enc.{i}.ln1", d)
            _init_attn(p, rng, f"enc.{i}.ssa", d)
            _init_ln(p, f"enc.{i}.ln2", d)
            _init_ffn(p, rng, f"enc.{i}.ffn", d, d_ff)
        for i in range(config.n_dec_layers):
            _init_ln(p, f"dec.{i}.ln1", d)
            _init_attn(p, rng, f"dec.{i}.ssa", d)
            _init_ln(p, f"dec.{i}.ln2", d)
            _init_attn(p, rng, f"dec.{i}.xattn", d)
            _init_ln(p, f"dec.{i}.ln3", d)
            _init_ffn(p, rng, f"dec.{i}.ffn", d, d_ff)
            if config.variant == "stmdp":
                p[f"dec.{i}.mod.w"] = _zeros((d, 6 * d))
                p[f"dec.{i}.mod.b"] = _zeros((6 * d,))

    _init_ln(p, "head.ln", d)
    p["head.w"] = _normal(rng, (d, config.action_dim))
    p["head.b"] = _zeros((config.action_dim,))
    return ModelWeights(config=config, params=p)


# ---------------------------------------------------------------------------
# primitive blocks

def _linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Apply [d_in, d_out] weights to the last axis of x."""
    lead = x.data.shape[:-1]
    flat = ng.matmul(ng.reshape(x, (-1, x.data.shape[-1])), w)
    if b is not None:
        flat = ng.add_bias(flat, b)
    return ng.reshape(flat, lead + (w.data.shape[1],))


POS_SCALE = 0.1  # keeps position visible without drowning the token content


@lru_cache(maxsize=8)
def _pos_table(s: int, d: int) -> np.ndarray:
    """Fixed sinusoidal position codes, [s, d], same family as the step embed.

    Fixed rather than learned: a learned table starting near zero loses the
    race against the growing content embeddings and the tokens stay
    position-blind, which shows up as order-scrambled action chunks.  The
    amplitude is deliberately a fraction of the content embedding scale; at
    full amplitude the imbalance just flips and training slows down.
    """
    half = d // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = np.arange(s, dtype=np.float64)[:, None] * freqs[None, :]
    table = POS_SCALE * np.concatenate([np.sin(ang), np.cos(ang)], axis=1)
    table.setflags(write=False)
    return table


def _add_positions(tok: Tensor) -> Tensor:
    b, s, d = tok.data.shape
    pos = ng.repeat_leading(Tensor(_pos_table(s, d)), b)
    return ng.add(tok, pos)


def timestep_embed(ts, weights: ModelWeights, smooth: bool = False) -> Tensor:
    """Sinusoidal encoding of integer steps, refined by a two-layer MLP.

    ts is a [B] integer array; any non-negative step is embeddable (range
    policing against t_diff belongs to the sampler).
    """
    ts = np.asarray(ts)
    if ts.ndim != 1:
        raise ContractError("timestep_embed expects a 1-D step array")
    if np.any(ts < 0):
        raise ContractError("diffusion steps must be non-negative")
    d = weights.config.d_model
    half = d // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = ts[:, None].astype(np.float64) * freqs[None, :]
    table = Tensor(np.concatenate([np.sin(ang), np.cos(ang)], axis=1))
    h = ng.gelu(_linear(table, weights["t_mlp.w1"], weights["t_mlp.b1"]))
    return _linear(h, weights["t_mlp.w2"], weights["t_mlp.b2"])


def build_cond(obs: Tensor, ts, weights: ModelWeights,
               smooth: bool = False) -> CondEmbedding:
    """Embed an observation window [B, n_obs, obs_dim] and steps [B]."""
    cfg = weights.config
    if obs.data.ndim != 3 or obs.data.shape[1:] != (cfg.n_obs, cfg.obs_dim):
        raise DimensionError(
            f"observation window must be [B, {cfg.n_obs}, {cfg.obs_dim}], "
            f"got {obs.data.shape}")
    t_embed = timestep_embed(ts, weights, smooth)
    c_embed = _linear(obs, weights["obs_proj.w"], weights["obs_proj.b"])
    b = obs.data.shape[0]
    combined = _add_positions(ng.concat(
        [ng.reshape(t_embed, (b, 1, cfg.d_model)), c_embed], axis=1))
    cond_vec = ng.add(t_embed, ng.mean_axis(c_embed, 1))
    return CondEmbedding(t_embed=t_embed, c_embed=c_embed, combined=combined,
                         cond_vec=cond_vec)


def _spike_seq(x: Tensor, cfg: ModelConfig, smooth: bool) -> Tensor:
    """Direct-encode [B, s, d] over t_steps and run the LIF recurrence."""
    return snn.lif_unroll(snn.direct_encode(x, cfg.lif.t_steps), cfg.lif,
                          smooth=smooth)


def _heads_split(x: Tensor, t_b: int, s: int, h: int, dh: int) -> Tensor:
    # [T*B, s, h*dh] -> [T*B*h, s, dh]
    x = ng.reshape(x, (t_b, s, h, dh))
    x = ng.permute(x, (0, 2, 1, 3))
    return ng.reshape(x, (t_b * h, s, dh))


def _attention(spikes_q: Tensor, spikes_kv: Tensor, weights: ModelWeights,
               pfx: str) -> Tensor:
    """Multi-head softmax attention on spike features, per spiking step.

    Inputs are [T, B, s, d] spike trains; the step axis is folded into the
    batch for the dense maps and restored before rate decoding.
    """
    cfg = weights.config
    T, b, sq, d = spikes_q.data.shape
    sk = spikes_kv.data.shape[2]
    h = cfg.n_heads
    dh = d // h

    q2 = ng.matmul(ng.reshape(spikes_q, (T * b * sq, d)), weights[f"{pfx}.wq"])
    k2 = ng.matmul(ng.reshape(spikes_kv, (T * b * sk, d)), weights[f"{pfx}.wk"])
    v2 = ng.matmul(ng.reshape(spikes_kv, (T * b * sk, d)), weights[f"{pfx}.wv"])

    q = _heads_split(ng.reshape(q2, (T * b, sq, d)), T * b, sq, h, dh)
    k = _heads_split(ng.reshape(k2, (T * b, sk, d)), T * b, sk, h, dh)
    v = _heads_split(ng.reshape(v2, (T * b, sk, d)), T * b, sk, h, dh)

    logits = ng.scale(ng.bmm(q, ng.permute(k, (0, 2, 1))), 1.0 / np.sqrt(dh))
    ctx = ng.bmm(ng.softmax(logits), v)  # [T*B*h, sq, dh]

    ctx = ng.reshape(ctx, (T * b, h, sq, dh))
    ctx = ng.permute(ctx, (0, 2, 1, 3))
    out = ng.matmul(ng.reshape(ctx, (T * b * sq, d)), weights[f"{pfx}.wo"])
    return ng.reshape(out, (T, b, sq, d))


def spiking_self_attention(x: Tensor, weights: ModelWeights, pfx: str,
                           smooth: bool = False) -> Tensor:
    """LIF-activate x, attend within it, rate-decode.  [B,s,d] -> [B,s,d]."""
    spikes = _spike_seq(x, weights.config, smooth)
    return snn.rate_decode(_attention(spikes, spikes, weights, pfx))


def spiking_cross_attention(x: Tensor, memory: Memory, weights: ModelWeights,
                            pfx: str, smooth: bool = False) -> Tensor:
    """Queries from x's spikes, keys/values from the memory's spikes."""
    if memory.m.data.shape[-1] != x.data.shape[-1]:
        raise DimensionError(
            f"memory width {memory.m.data.shape[-1]} != query width "
            f"{x.data.shape[-1]}")
    cfg = weights.config
    sq = _spike_seq(x, cfg, smooth)
    sm = _spike_seq(memory.m, cfg, smooth)
    return snn.rate_decode(_attention(sq, sm, weights, pfx))


def spiking_ffn(x: Tensor, weights: ModelWeights, pfx: str,
                smooth: bool = False) -> Tensor:
    """LIF-activate, then a two-layer gelu MLP per step, rate-decoded."""
    cfg = weights.config
    spikes = _spike_seq(x, cfg, smooth)
    T, b, s, d = spikes.data.shape
    flat = ng.reshape(spikes, (T * b * s, d))
    h = ng.gelu(ng.add_bias(ng.matmul(flat, weights[f"{pfx}.w1"]),
                            weights[f"{pfx}.b1"]))
    out = ng.add_bias(ng.matmul(h, weights[f"{pfx}.w2"]), weights[f"{pfx}.b2"])
    return snn.rate_decode(ng.reshape(out, (T, b, s, d)))


# ---------------------------------------------------------------------------
# residual wrappers

def _ln(x: Tensor, weights: ModelWeights, pfx: str) -> Tensor:
    return ng.layer_norm(x, weights[f"{pfx}.g"], weights[f"{pfx}.b"])


def _bcast_tokens(v: Tensor, s: int) -> Tensor:
    # [B, d] -> [B, s, d]
    b, d = v.data.shape
    return ng.tile_axis(ng.reshape(v, (b, 1, d)), 1, s)


def modulation_triples(cond_vec: Tensor, weights: ModelWeights, pfx: str):
    """Six [B, d] vectors: (shift, scale, gate) for two sub-blocks."""
    b = cond_vec.data.shape[0]
    d = weights.config.d_model
    mod = _linear(cond_vec, weights[f"{pfx}.w"], weights[f"{pfx}.b"])
    mod = ng.permute(ng.reshape(mod, (b, 6, d)), (1, 0, 2))
    return [ng.take_leading(mod, i) for i in range(6)]


def modulate(h: Tensor, sub_block, shift: Tensor, scale: Tensor,
             gate: Tensor) -> Tensor:
    """h + gate * sub_block(shift + (1 + scale) * LN-input).

    The layer norm is the caller's: sub_block receives the already-normed
    tensor through the closure; this wrapper owns only the affine steps.
    """
    s = h.data.shape[1]
    one_plus = ng.add(ng.Tensor(np.ones(())), scale)
    inner = ng.add(_bcast_tokens(shift, s),
                   ng.mul(_bcast_tokens(one_plus, s), sub_block.normed))
    return ng.add(h, ng.mul(_bcast_tokens(gate, s), sub_block.fn(inner)))


class _SubBlock:
    """Pairs a normed input with the function the modulation wraps."""

    def __init__(self, normed: Tensor, fn):
        self.normed = normed
        self.fn = fn


def _residual(h: Tensor, out: Tensor) -> Tensor:
    return ng.add(h, out)


# ---------------------------------------------------------------------------
# stacks

def encoder_forward(cond: CondEmbedding, weights: ModelWeights,
                    smooth: bool = False) -> Memory:
    """Plain spiking encoder over the combined conditioning tokens."""
    h = cond.combined
    for i in range(weights.config.n_enc_layers):
        h = _residual(h, spiking_self_attention(
            _ln(h, weights, f"enc.{i}.ln1"), weights, f"enc.{i}.ssa", smooth))
        h = _residual(h, spiking_ffn(
            _ln(h, weights, f"enc.{i}.ln2"), weights, f"enc.{i}.ffn", smooth))
    return Memory(m=h)


def _action_tokens(x_noisy: Tensor, weights: ModelWeights) -> Tensor:
    cfg = weights.config
    if x_noisy.data.ndim != 3 or x_noisy.data.shape[1:] != (cfg.horizon,
                                                            cfg.action_dim):
        raise DimensionError(
            f"noisy actions must be [B, {cfg.horizon}, {cfg.action_dim}], "
            f"got {x_noisy.data.shape}")
    tok = _linear(x_noisy, weights["act_embed.w"], weights["act_embed.b"])
    return _add_positions(tok)


def smd_decoder_forward(memory: Memory, x_noisy: Tensor, cond: CondEmbedding,
                        weights: ModelWeights, smooth: bool = False) -> Tensor:
    """Decoder with modulated cross-attention and FFN (stmdp's shape).

    Self-attention stays unmodulated; each layer derives its six modulation
    vectors from the conditioning vector.
    """
    cfg = weights.config
    h = _action_tokens(x_noisy, weights)
    modulated = cfg.variant == "stmdp"
    for i in range(cfg.n_dec_layers):
        h = _residual(h, spiking_self_attention(
            _ln(h, weights, f"dec.{i}.ln1"), weights, f"dec.{i}.ssa", smooth))
        if modulated:
            sh_x, sc_x, g_x, sh_f, sc_f, g_f = modulation_triples(
                cond.cond_vec, weights, f"dec.{i}.mod")
            h = modulate(
                h,
                _SubBlock(_ln(h, weights, f"dec.{i}.ln2"),
                          lambda z, i=i: spiking_cross_attention(
                              z, memory, weights, f"dec.{i}.xattn", smooth)),
                sh_x, sc_x, g_x)
            h = modulate(
                h,
                _SubBlock(_ln(h, weights, f"dec.{i}.ln3"),
                          lambda z, i=i: spiking_ffn(
                              z, weights, f"dec.{i}.ffn", smooth)),
                sh_f, sc_f, g_f)
        else:
            h = _residual(h, spiking_cross_attention(
                _ln(h, weights, f"dec.{i}.ln2"), memory, weights,
                f"dec.{i}.xattn", smooth))
            h = _residual(h, spiking_ffn(
                _ln(h, weights, f"dec.{i}.ln3"), weights, f"dec.{i}.ffn",
                smooth))
    return _head(h, weights)


def _head(h: Tensor, weights: ModelWeights) -> Tensor:
    return _linear(_ln(h, weights, "head.ln"), weights["head.w"],
                   weights["head.b"])


def _sdit_forward(cond: CondEmbedding, x_noisy: Tensor, weights: ModelWeights,
                  smooth: bool = False) -> Tensor:
    """Encoder-only stack, both sub-blocks modulated (DIT placement)."""
    cfg = weights.config
    h = _action_tokens(x_noisy, weights)
    for i in range(cfg.n_enc_layers):
        sh_a, sc_a, g_a, sh_f, sc_f, g_f = modulation_triples(
            cond.cond_vec, weights, f"enc.{i}.mod")
        h = modulate(
            h,
            _SubBlock(_ln(h, weights, f"enc.{i}.ln1"),
                      lambda z, i=i: spiking_self_attention(
                          z, weights, f"enc.{i}.ssa", smooth)),
            sh_a, sc_a, g_a)
        h = modulate(
            h,
            _SubBlock(_ln(h, weights, f"enc.{i}.ln2"),
                      lambda z, i=i: spiking_ffn(
                          z, weights, f"enc.{i}.ffn", smooth)),
            sh_f, sc_f, g_f)
    return _head(h, weights)


def predict_noise(weights: ModelWeights, obs: Tensor, ts, x_noisy: Tensor,
                  smooth: bool = False) -> Tensor:
    """Full model: (obs window, steps, noisy actions) -> noise estimate.

    Uniform across variants: [B, n_obs, obs_dim] x [B] x [B, horizon,
    action_dim] -> [B, horizon, action_dim].
    """
    cond = build_cond(obs, ts, weights, smooth)
    if weights.config.variant == "sdit":
        return _sdit_forward(cond, x_noisy, weights, smooth)
    memory = encoder_forward(cond, weights, smooth)
    return smd_decoder_forward(memory, x_noisy, cond, weights, smooth)


def make_model_fn(weights: ModelWeights, obs: Tensor, smooth: bool = False):
    """Adapt fixed observations to the (x_t, ts, cond) sampler interface."""

    def model(x_t, ts, cond):
        return predict_noise(weights, obs, ts, x_t, smooth)

    return model
