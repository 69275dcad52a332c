"""Named invariant checks run by ``patchvsr selftest``.

Each check raises on failure. They are deliberately smaller than the pytest
suite so the whole set runs in a few seconds.
"""

from __future__ import annotations

import tempfile
import traceback
from pathlib import Path
from typing import Callable

import numpy as np

from . import bench, codec, schedule, tiling
from .demo import procedural_video, smooth_field
from .errors import SnapshotError
from .model import (
    ConditioningBundle,
    MicroCondition,
    ModelWeights,
    attention_weights,
    base_forward,
    global_encode,
    lora_apply,
    oracle_velocity,
    toy_denoiser_predict,
)
from .pipeline import PipelineConfig, naive_stitch_run, run_patchvsr
from .tiling import bicubic_resize

CHECKS: list[tuple[str, Callable[[], None]]] = []


def check(name):
    def register(fn):
        CHECKS.append((name, fn))
        return fn
    return register


def _rng(seed=0):
    return np.random.default_rng(seed)


@check("schedule.grid_endpoints_monotone")
def _grid():
    for n in (1, 2, 7, 50, 333, 1000):
        for s in (1.0, 3.0, 5.0, 20.0):
            ts = schedule.make_time_grid(n, s)
            assert ts[0] == 1.0 and ts[-1] == 0.0 and len(ts) == n + 1
            assert np.all(np.diff(ts) < 0)


@check("schedule.shift1_uniform")
def _uniform():
    ts = schedule.make_time_grid(8, 1.0)
    assert np.allclose(ts, 1.0 - np.arange(9) / 8, atol=1e-15, rtol=0)


@check("schedule.forward_variance")
def _variance():
    z0 = schedule.gaussian_noise((100_000,), 1, 1)
    eps = schedule.gaussian_noise((100_000,), 1, 2)
    for t in (0.15, 0.25, 0.5):
        var = schedule.forward_diffuse(z0, t, eps).var()
        assert abs(var - ((1 - t) ** 2 + t ** 2)) < 0.02, (t, var)


@check("schedule.noise_determinism")
def _noise_det():
    a = schedule.gaussian_noise((3, 5, 7), 11, 4)
    b = schedule.gaussian_noise((3, 5, 7), 11, 4)
    c = schedule.gaussian_noise((3, 5, 7), 11, 5)
    assert a.tobytes() == b.tobytes() and not np.array_equal(a, c)


@check("schedule.noise_moments")
def _noise_stats():
    x = schedule.gaussian_noise((1_000_000,), 0, 0)
    assert abs(x.mean()) < 0.01 and abs(x.var() - 1.0) < 0.01


@check("schedule.cfg_identities")
def _cfg():
    v = _rng().standard_normal((2, 3))
    for s in (0.0, 1.0, 5.0, 7.5):
        assert np.array_equal(schedule.cfg_combine(v, v, s), v)
    u = _rng(1).standard_normal((2, 3))
    assert np.array_equal(schedule.cfg_combine(u, v, 1.0), v)


@check("schedule.straight_path_exactness")
def _straight():
    rng = _rng(2)
    z0, eps = rng.standard_normal((2, 4, 4, 3)), rng.standard_normal((2, 4, 4, 3))
    for n, s in ((1, 1.0), (13, 5.0), (50, 5.0)):
        z = eps
        ts = schedule.make_time_grid(n, s)
        for a, b in zip(ts[:-1], ts[1:]):
            z = schedule.euler_step(z, oracle_velocity(z0, z, a), a, b)
        assert np.abs(z - z0).max() <= 1e-9


@check("tiling.partition_counts")
def _counts():
    for r in range(1, 5):
        for c in range(1, 5):
            g = tiling.partition((1, 8 * r, 8 * c, 1), (8, 8))
            nh = sum(p.role == tiling.AUX_HORIZONTAL for p in g.aux)
            nv = sum(p.role == tiling.AUX_VERTICAL for p in g.aux)
            assert len(g.base) == r * c and nh == r * (c - 1) and nv == (r - 1) * c


@check("tiling.coverage")
def _coverage():
    g = tiling.partition((1, 24, 32, 1), (8, 8))
    base = np.zeros((24, 32))
    total = np.zeros((24, 32))
    for p in g.patches:
        if p.role == tiling.BASE:
            base[p.rows, p.cols] += 1
        total[p.rows, p.cols] += 1
    assert np.all(base == 1) and np.all(total >= 1)


@check("tiling.fusion_normalization")
def _normalization():
    g = tiling.partition((2, 16, 24, 3), (8, 8))
    contribs = [(p, np.full((2, 8, 8, 3), 0.7), tiling.weight_map_for(p, 5.0)) for p in g.patches]
    assert np.array_equal(tiling.fuse(contribs, g.canvas), np.full(g.canvas, 0.7))


@check("tiling.fusion_linearity")
def _linearity():
    rng = _rng(3)
    g = tiling.partition((1, 16, 16, 2), (8, 8))
    ws = [tiling.weight_map_for(p, 5.0) for p in g.patches]
    xs = [rng.standard_normal((1, 8, 8, 2)) for _ in g.patches]
    ys = [rng.standard_normal((1, 8, 8, 2)) for _ in g.patches]
    lhs = tiling.fuse([(p, 2.0 * x - 0.5 * y, w) for p, x, y, w in zip(g.patches, xs, ys, ws)], g.canvas)
    rhs = 2.0 * tiling.fuse(list(zip(g.patches, xs, ws)), g.canvas) - 0.5 * tiling.fuse(list(zip(g.patches, ys, ws)), g.canvas)
    assert np.abs(lhs - rhs).max() <= 1e-9


@check("tiling.mask_partition")
def _masks():
    g = tiling.partition((1, 48, 48, 1), (16, 16))
    masks = [tiling.location_mask(g, p.index, (20, 20)) for p in g.base]
    assert np.array_equal(sum(masks), np.ones((20, 20)))


@check("tiling.aux_ramp")
def _ramp():
    w = tiling.aux_weight_map((8, 512), "horizontal", 5.0)
    assert w[0, 0] == 0 and w[0, -1] == 0 and w[0, 255] == 5.0 and w[0, 256] == 5.0
    assert abs(w[0, 128] - 2.5) <= 5.0 / 255


@check("tiling.bicubic_identities")
def _bicubic():
    rng = _rng(4)
    x = rng.random((9, 11, 2))
    assert np.array_equal(bicubic_resize(x, (9, 11)), x)
    assert np.allclose(bicubic_resize(np.full((6, 6, 1), 0.3), (13, 17)), 0.3, atol=1e-14, rtol=0)
    ramp = np.broadcast_to(np.arange(16.0)[None, :, None], (8, 16, 1))
    up = bicubic_resize(ramp, (8, 32))[0, 4:-4, 0]
    assert np.abs(up - ((np.arange(32) + 0.5) / 2 - 0.5)[4:-4]).max() <= 1e-6


@check("tiling.pad_crop_roundtrip")
def _pad():
    x = _rng(5).random((1, 10, 6, 3))
    padded, rec = tiling.pad_to_multiple(x, (8, 8))
    assert padded.shape == (1, 16, 8, 3) and np.array_equal(rec.apply(padded), x)


@check("codec.roundtrip")
def _codec_rt():
    x = _rng(6).random((2, 8, 6, 3))
    assert np.abs(codec.haar_decode(codec.haar_encode(x), clamp=False) - x).max() <= 1e-12


@check("codec.energy")
def _codec_energy():
    x = _rng(7).random((2, 8, 6, 3))
    e0, e1 = (x ** 2).sum(), (codec.haar_encode(x) ** 2).sum()
    assert abs(e1 - e0) / e0 <= 1e-9


@check("codec.linearity")
def _codec_lin():
    rng = _rng(8)
    x, y = rng.random((1, 4, 4, 3)), rng.random((1, 4, 4, 3))
    lhs = codec.haar_encode(0.3 * x + 1.7 * y)
    rhs = 0.3 * codec.haar_encode(x) + 1.7 * codec.haar_encode(y)
    assert np.abs(lhs - rhs).max() <= 1e-12


@check("codec.hand_block")
def _codec_hand():
    block = np.array([[1.0, 2.0], [3.0, 4.0]])
    video = np.repeat(block[None, :, :, None], 3, axis=-1)
    lat = codec.haar_encode(video)[0, 0, 0]
    assert np.array_equal(lat[0::3], [5.0, -1.0, -2.0, 0.0])


@check("model.attention_rows")
def _attn():
    rng = _rng(9)
    w = attention_weights(rng.standard_normal((3, 5, 4)), rng.standard_normal((3, 7, 4)) * 10)
    assert np.abs(w.sum(-1) - 1).max() <= 1e-6


@check("model.oracle_consistency")
def _oracle():
    rng = _rng(10)
    z0, eps = rng.standard_normal((1, 4, 4, 2)), rng.standard_normal((1, 4, 4, 2))
    for t in (1e-3, 0.15, 0.5, 1.0):
        v = oracle_velocity(z0, schedule.forward_diffuse(z0, t, eps), t)
        assert np.abs(v - (z0 - eps)).max() <= 1e-9


@check("model.lora_zero_delta")
def _lora():
    rng = _rng(11)
    W, A, x = rng.standard_normal((5, 4)), rng.standard_normal((2, 4)), rng.standard_normal((3, 4))
    assert np.array_equal(lora_apply(W, A, np.zeros((5, 2)), x), x @ W.T)


def _bundle(rng, shape=(2, 8, 8, 12), scale=2.0, mask=None):
    mask = np.zeros(shape[1:3]) if mask is None else mask
    return ConditioningBundle(
        rng.standard_normal(shape), rng.standard_normal(shape), mask, MicroCondition(250, scale, (0, 0))
    )


@check("model.adapter_vanishing")
def _vanish():
    w = ModelWeights.init(seed=1)
    rng = _rng(12)
    for _ in range(5):
        z = rng.standard_normal((2, 8, 8, 12))
        t = float(rng.random())
        assert toy_denoiser_predict(w, z, t, _bundle(rng)).tobytes() == base_forward(w, z, t).tobytes()


@check("model.global_token_quarter")
def _quarter():
    w = ModelWeights.init(seed=1)
    tokens = global_encode(w, np.zeros((1, 16, 16, 12)), np.zeros((16, 16)))
    assert tokens.shape[1] == 64 and np.all(np.isfinite(tokens))


@check("model.conditioning_sensitivity")
def _sensitivity():
    w = ModelWeights.init(seed=1, zero_adapters=False)
    rng = _rng(13)
    z = rng.standard_normal((2, 8, 8, 12))
    cond = _bundle(rng, scale=1.0)
    base = toy_denoiser_predict(w, z, 0.4, cond)
    mask = cond.location_mask.copy()
    mask[3, 3] = 1.0
    flipped = ConditioningBundle(cond.patch_latent_noised, cond.global_latent_noised, mask, cond.micro)
    scaled = ConditioningBundle(cond.patch_latent_noised, cond.global_latent_noised, cond.location_mask,
                                MicroCondition(250, 4.0, (0, 0)))
    assert np.abs(toy_denoiser_predict(w, z, 0.4, flipped) - base).max() > 0
    assert np.abs(toy_denoiser_predict(w, z, 0.4, scaled) - base).max() > 0


def check_weights_file(path) -> None:
    try:
        ModelWeights.load(path)
    except SnapshotError as exc:
        raise AssertionError(f"weights snapshot {path}: {exc}") from exc


@check("model.weights_snapshot")
def _snapshot():
    if _WEIGHTS_PATH is not None:
        check_weights_file(_WEIGHTS_PATH)
        return
    w = ModelWeights.init(seed=3)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "w.bin"
        w.save(path)
        assert ModelWeights.load(path).equal(w)


@check("pipeline.oracle_recovery")
def _recovery():
    ref = procedural_video(2, 32, 32, seed=1)
    video = bicubic_resize(ref, (16, 16))
    for steps, shift in ((1, 1.0), (10, 5.0)):
        cfg = PipelineConfig(schedule.SamplerConfig(num_steps=steps, shift=shift), upscale_factor=2.0, patch_size=(16, 16))
        out, _ = run_patchvsr(video, ref, cfg)
        assert 255 * np.abs(out - ref).max() <= 1e-4


@check("pipeline.step_fuse_commutation")
def _commute():
    rng = _rng(14)
    g = tiling.partition((1, 16, 16, 2), (8, 8))
    ws = [tiling.weight_map_for(p, 5.0) for p in g.patches]
    zs = [rng.standard_normal((1, 8, 8, 2)) for _ in g.patches]
    vs = [rng.standard_normal((1, 8, 8, 2)) for _ in g.patches]
    a = tiling.fuse([(p, schedule.euler_step(z, v, 0.6, 0.2), w) for p, z, v, w in zip(g.patches, zs, vs, ws)], g.canvas)
    b = schedule.euler_step(tiling.fuse(list(zip(g.patches, zs, ws)), g.canvas),
                            tiling.fuse(list(zip(g.patches, vs, ws)), g.canvas), 0.6, 0.2)
    assert np.abs(a - b).max() <= 1e-9


@check("pipeline.determinism")
def _determinism():
    ref = procedural_video(2, 32, 32, seed=2)
    video = bicubic_resize(ref, (16, 16))
    cfg = PipelineConfig(schedule.SamplerConfig(num_steps=4), amplitude=0.1, model_kind="stochastic_oracle", patch_size=(16, 16))
    a, _ = run_patchvsr(video, ref, cfg)
    b, _ = run_patchvsr(video, ref, PipelineConfig(cfg.sampler, amplitude=0.1, model_kind="stochastic_oracle",
                                                   patch_size=(16, 16), workers=3))
    assert a.tobytes() == b.tobytes()


@check("pipeline.seam_reduction")
def _seams():
    ref = smooth_field(4, 128, 128, seed=0)
    video = bicubic_resize(ref, (64, 64))
    cfg = PipelineConfig(schedule.SamplerConfig(seed=0), amplitude=0.1, model_kind="stochastic_oracle", patch_size=(64, 64))
    _, joint = run_patchvsr(video, ref, cfg)
    _, naive = naive_stitch_run(video, ref, cfg)
    assert joint.seam_index <= 0.5 * naive.seam_index, (joint.seam_index, naive.seam_index)


@check("bench.token_identity")
def _tokens():
    for m in (1, 7, 256):
        for k in (1, 4, 9, 16):
            r = bench.token_cost(k * m, m)
            assert r.patched_cost == k * (r.n_tokens // k) ** 2 == r.n_tokens * m


@check("bench.measured_ratio")
def _measured():
    for r in bench.measure_attention_ops([(256, 64), (576, 64)], dim=8):
        assert r.rel_error <= 0.05 and r.full_ops > 0 and r.patched_ops > 0


@check("cli.ppm_roundtrip")
def _ppm():
    from .frames import read_frames_u8, write_frames

    data = _rng(15).integers(0, 256, size=(2, 5, 7, 3), dtype=np.uint8)
    with tempfile.TemporaryDirectory() as tmp:
        write_frames(tmp, data)
        assert np.array_equal(read_frames_u8(tmp), data)


_WEIGHTS_PATH = None


def run_all(weights_path=None, out=print) -> bool:
    global _WEIGHTS_PATH
    _WEIGHTS_PATH = weights_path
    ok = True
    try:
        for name, fn in CHECKS:
            try:
                fn()
            except Exception as exc:  # report every failure, keep going
                ok = False
                reason = str(exc) or type(exc).__name__
                out(f"FAIL {name}: {reason}")
                if not isinstance(exc, AssertionError):
                    out(traceback.format_exc().rstrip())
            else:
                out(f"PASS {name}")
    finally:
        _WEIGHTS_PATH = None
    out(f"{sum(1 for _ in CHECKS)} checks, {'all passed' if ok else 'FAILURES'}")
    return ok
