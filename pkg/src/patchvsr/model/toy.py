"""Small DiT-style video denoiser with a patch condition branch and a global
context branch.

Tokens are latent pixels: a ``(F, h, w, C)`` latent becomes ``(F, h*w, D)``.
Every base block runs spatial self-attention, cross-attention (fixed null
text tokens, plus global context tokens through a gated branch that shares
the query projection), temporal self-attention and a feed-forward layer.
All base linears carry LoRA deltas. Timestep and micro-conditions enter
through adaptive layer-norm modulation.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .attention import attention, lora_apply
from .conditioning import ConditioningBundle, MicroCondition
from .weights import ModelWeights

LN_EPS = 1e-6


def silu(x):
    return x / (1.0 + np.exp(-x))


def gelu(x):
    return 0.5 * x * (1.0 + np.tanh(0.7978845608028654 * (x + 0.044715 * x**3)))


def layer_norm(x):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS)


def sinusoidal(value: float, dim: int, max_period: float = 10000.0) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    args = value * freqs
    return np.concatenate([np.cos(args), np.sin(args)])


def position_embedding(frames: int, h: int, w: int, dim: int) -> np.ndarray:
    """Fixed sin/cos embedding of (row, col) plus frame index, ``(F, h*w, dim)``."""
    half = dim // 2
    rows = np.stack([sinusoidal(r, half) for r in range(h)])
    cols = np.stack([sinusoidal(c, half) for c in range(w)])
    spatial = np.concatenate(
        [np.repeat(rows, w, axis=0), np.tile(cols, (h, 1))], axis=-1
    )
    temporal = np.stack([sinusoidal(f, dim) for f in range(frames)])
    return spatial[None, :, :] + temporal[:, None, :]


def _linear(p: ModelWeights, name: str, x, lora: bool = False):
    if lora:
        y = lora_apply(p[name + ".w"], p[name + ".lora_a"], p[name + ".lora_b"], x)
    else:
        y = x @ p[name + ".w"].T
    if name + ".b" in p:
        y = y + p[name + ".b"]
    return y


def _split_heads(x, heads):
    *lead, n, d = x.shape
    return np.swapaxes(x.reshape(*lead, n, heads, d // heads), -2, -3)


def _merge_heads(x):
    x = np.swapaxes(x, -2, -3)
    *lead, n, heads, dh = x.shape
    return x.reshape(*lead, n, heads * dh)


def _mha(q, k, v, heads):
    return _merge_heads(attention(_split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads)))


def _self_attention(p, name, x, heads, lora):
    q = _linear(p, name + ".q", x, lora)
    k = _linear(p, name + ".k", x, lora)
    v = _linear(p, name + ".v", x, lora)
    return _linear(p, name + ".o", _mha(q, k, v, heads), lora)


def transformer_block(p: ModelWeights, prefix: str, x, c, *, context=None, lora=False):
    """One block on tokens ``x`` of shape ``(F, N, D)``.

    ``context`` (``(F, M, D)``) switches on the gated global cross-attention;
    ``lora`` switches on the low-rank deltas. With both off this is exactly
    the bare base block.
    """
    heads = p.config.heads
    mod = _linear(p, prefix + ".ada", silu(c))
    shift1, scale1, gate1, shift2, scale2, gate2 = np.split(mod, 6)

    y = layer_norm(x) * (1.0 + scale1) + shift1
    x = x + gate1 * _self_attention(p, prefix + ".ssa", y, heads, lora)

    y = layer_norm(x)
    q = _linear(p, prefix + ".sca.q", y, lora)
    text = p["base.null_text"]
    k_t = _linear(p, prefix + ".sca.k", text, lora)
    v_t = _linear(p, prefix + ".sca.v", text, lora)
    cross = _linear(p, prefix + ".sca.o", _mha(q, k_t, v_t, heads), lora)
    if context is not None:
        k_g = _linear(p, prefix + ".gca.k", context)
        v_g = _linear(p, prefix + ".gca.v", context)
        glob = _linear(p, prefix + ".gca.o", _mha(q, k_g, v_g, heads))
        cross = cross + p[prefix + ".gca.gate"] * glob
    x = x + cross

    y = np.swapaxes(layer_norm(x), 0, 1)
    x = x + np.swapaxes(_self_attention(p, prefix + ".tsa", y, heads, lora), 0, 1)

    y = layer_norm(x) * (1.0 + scale2) + shift2
    hidden = gelu(_linear(p, prefix + ".ffn.fc1", y, lora))
    return x + gate2 * _linear(p, prefix + ".ffn.fc2", hidden, lora)


def time_embedding(p: ModelWeights, t: float) -> np.ndarray:
    e = sinusoidal(1000.0 * t, p.config.width)
    return _linear(p, "base.time.fc2", silu(_linear(p, "base.time.fc1", e)))


def micro_embed(p: ModelWeights, noise_t_disc, scale_factor, crop_origin) -> np.ndarray:
    """Embed the noise level, upscale factor and crop location into one
    vector of the modulation width."""
    MicroCondition(noise_t_disc, scale_factor, tuple(crop_origin)).validate()
    fd = p.config.freq_dim
    feats = np.concatenate([
        sinusoidal(float(noise_t_disc), fd),
        sinusoidal(250.0 * scale_factor, fd),
        sinusoidal(float(crop_origin[0]), fd),
        sinusoidal(float(crop_origin[1]), fd),
    ])
    return _linear(p, "micro.proj", feats)


def _tokens(p, prefix, latent):
    frames, h, w, ch = latent.shape
    x = _linear(p, prefix + ".embed", latent.reshape(frames, h * w, ch))
    return x + position_embedding(frames, h, w, p.config.width)


def _check_latent(p, latent, what):
    if latent.ndim != 4 or latent.shape[-1] != p.config.latent_channels:
        raise ShapeError(f"{what}: expected (F, h, w, {p.config.latent_channels}), got {latent.shape}")


def patch_branch_features(p: ModelWeights, patch_latent_noised, t: float) -> list[np.ndarray]:
    """Per-base-block additive features from the noised input patch."""
    _check_latent(p, patch_latent_noised, "patch latent")
    c = time_embedding(p, t)
    x = _tokens(p, "patch", patch_latent_noised)
    feats = []
    for j in range(p.config.depth):
        x = transformer_block(p, f"patch.blocks.{j}", x, c)
        feats.append(_linear(p, f"patch.out.{j}", x))
    return feats


def global_encode(p: ModelWeights, global_latent_noised, location_mask) -> np.ndarray:
    """Context tokens ``(F, h*w/4, D)`` from the global latent and the mask."""
    _check_latent(p, global_latent_noised, "global latent")
    frames, gh, gw, _ = global_latent_noised.shape
    if location_mask.shape != (gh, gw):
        raise ShapeError(f"mask {location_mask.shape} does not match global latent {(gh, gw)}")
    if gh % 2 or gw % 2:
        raise ShapeError(f"global latent dims must be even for 2x2 merging, got {(gh, gw)}")
    mask = np.broadcast_to(location_mask[None, :, :, None], (frames, gh, gw, 1))
    x = _tokens(p, "global", np.concatenate([global_latent_noised, mask], axis=-1))
    c = np.zeros(p.config.width)
    x = transformer_block(p, "global.blocks.0", x, c)
    D = p.config.width
    x = x.reshape(frames, gh // 2, 2, gw // 2, 2, D).transpose(0, 1, 3, 2, 4, 5)
    x = _linear(p, "global.merge", x.reshape(frames, (gh // 2) * (gw // 2), 4 * D))
    for j in range(1, p.config.depth):
        x = transformer_block(p, f"global.blocks.{j}", x, c)
    return x


def _output(p, x, c, shape):
    shift, scale = np.split(_linear(p, "base.final.ada", silu(c)), 2)
    y = layer_norm(x) * (1.0 + scale) + shift
    return _linear(p, "base.final.out", y).reshape(shape)


def base_forward(p: ModelWeights, z_t, t: float) -> np.ndarray:
    """The bare base model: no LoRA, no branches, no micro-conditions."""
    _check_latent(p, z_t, "z_t")
    c = time_embedding(p, t)
    x = _tokens(p, "base", z_t)
    for i in range(p.config.depth):
        x = transformer_block(p, f"base.blocks.{i}", x, c)
    return _output(p, x, c, z_t.shape)


def toy_denoiser_predict(p: ModelWeights, z_t, t: float, cond: ConditioningBundle) -> np.ndarray:
    _check_latent(p, z_t, "z_t")
    if cond.patch_latent_noised.shape != z_t.shape:
        raise ShapeError(f"patch latent {cond.patch_latent_noised.shape} does not match z_t {z_t.shape}")
    micro = cond.micro
    memb = micro_embed(p, micro.noise_t_disc, micro.scale_factor, micro.crop_origin)
    c = time_embedding(p, t) + _linear(p, "micro.mod", silu(memb))

    feats = patch_branch_features(p, cond.patch_latent_noised, t)
    if cond.conditional:
        context = global_encode(p, cond.global_latent_noised, cond.location_mask)
    else:
        null = p["global.null_tokens"]
        context = np.broadcast_to(null, (z_t.shape[0],) + null.shape)

    x = _tokens(p, "base", z_t)
    for i in range(p.config.depth):
        x = transformer_block(p, f"base.blocks.{i}", x, c, context=context, lora=True)
        x = x + feats[i]
    return _output(p, x, c, z_t.shape)


class ToyDenoiser:
    def __init__(self, weights: ModelWeights):
        self.weights = weights

    def predict(self, z_t, t, cond):
        return toy_denoiser_predict(self.weights, z_t, t, cond)
