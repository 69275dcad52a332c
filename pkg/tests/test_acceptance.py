"""Acceptance criteria, one test each. Every test prints a single PASS/FAIL line."""

import json
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from patchvsr.bench import measure_attention_ops, token_cost
from patchvsr.cli import main
from patchvsr.codec import haar_decode, haar_encode
from patchvsr.demo import procedural_video, smooth_field
from patchvsr.frames import write_frames
from patchvsr.model import ConditioningBundle, MicroCondition, ModelWeights, base_forward, toy_denoiser_predict
from patchvsr.pipeline import PipelineConfig, naive_stitch_run, run_patchvsr, seam_index
from patchvsr.schedule import SamplerConfig, cfg_combine, euler_step, forward_diffuse, gaussian_noise, make_time_grid
from patchvsr.tiling import (
    AUX_HORIZONTAL,
    AUX_VERTICAL,
    bicubic_resize,
    fuse,
    partition,
    weight_map_for,
)


def verdict(label, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} {label}" + (f": {detail}" if detail else "")
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_1_straight_path_exactness():
    ref = procedural_video(4, 192, 192, seed=11)
    video = bicubic_resize(ref, (96, 96))
    worst_err, worst_time, fails = 0.0, 0.0, []
    for patch in (192, 96, 64):
        for steps in (1, 50):
            for shift in (1.0, 5.0):
                cfg = PipelineConfig(SamplerConfig(num_steps=steps, shift=shift), upscale_factor=2.0,
                                     patch_size=(patch, patch))
                start = time.perf_counter()
                out, report = run_patchvsr(video, ref, cfg)
                elapsed = time.perf_counter() - start
                err = 255.0 * float(np.abs(out - ref).max())
                worst_err, worst_time = max(worst_err, err), max(worst_time, elapsed)
                if err > 1e-4 or elapsed > 10.0:
                    fails.append((report.grid, steps, shift, err, elapsed))
    verdict("1 straight-path exactness", not fails,
            f"max err {worst_err:.2e} (8-bit), slowest {worst_time:.2f}s" + (f", failing {fails}" if fails else ""))


def test_2_joint_modulation_seam_reduction():
    start = time.perf_counter()
    rows, ok = [], True
    for seed in (0, 1, 2):
        ref = smooth_field(4, 128, 128, seed=seed)
        video = bicubic_resize(ref, (64, 64))
        cfg = PipelineConfig(SamplerConfig(seed=seed), upscale_factor=2.0, amplitude=0.1,
                             model_kind="stochastic_oracle", patch_size=(64, 64))
        _, joint = run_patchvsr(video, ref, cfg)
        _, naive = naive_stitch_run(video, ref, cfg)
        baseline = seam_index(haar_encode(ref), partition((4, 64, 64, 12), (32, 32)))
        ok &= joint.grid == (2, 2)
        ok &= joint.seam_index <= 0.5 * naive.seam_index
        ok &= joint.seam_index <= 1.5 * baseline
        rows.append(f"seed {seed}: joint {joint.seam_index:.3f} naive {naive.seam_index:.3f} baseline {baseline:.3f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed <= 30.0
    verdict("2 joint-modulation seam reduction", ok, "; ".join(rows) + f"; {elapsed:.1f}s")


def test_3_token_cost():
    start = time.perf_counter()
    pairs = [(k * 256, 256) for k in (1, 4, 9, 16)]
    identity = all(token_cost(n, m).patched_cost == (n // m) * (n // (n // m)) ** 2 == n * m
                   for n in range(1, 300) for m in range(1, n + 1) if n % m == 0)
    reports = measure_attention_ops(pairs)
    elapsed = time.perf_counter() - start
    ok = identity and all(r.rel_error <= 0.05 for r in reports) and elapsed <= 60.0
    detail = ", ".join(f"n/m={r.ratio:g} measured {r.measured_ratio:.4f}" for r in reports)
    verdict("3 token-cost claim", ok, f"{detail}; {elapsed:.1f}s")


def test_4_adapter_vanishing():
    w = ModelWeights.init(seed=0)
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(100):
        frames = int(rng.choice([1, 2, 4]))
        side = int(rng.choice([4, 8]))
        z = rng.standard_normal((frames, side, side, 12))
        t = float(rng.random())
        gside = int(rng.choice([4, 8]))
        mask = (rng.random((gside, gside)) < 0.5).astype(float)
        cond = ConditioningBundle(
            rng.standard_normal(z.shape), rng.standard_normal((frames, gside, gside, 12)), mask,
            MicroCondition(int(rng.integers(0, 1001)), float(rng.uniform(1, 4)),
                           (int(rng.integers(0, 64)), int(rng.integers(0, 64)))),
            conditional=bool(rng.random() < 0.8),
        )
        if toy_denoiser_predict(w, z, t, cond).tobytes() != base_forward(w, z, t).tobytes():
            mismatches += 1
    verdict("4 adapter-vanishing equivalence", mismatches == 0, f"{mismatches}/100 mismatches")


def test_5_fusion_suite():
    rng = np.random.default_rng(5)
    worst_lin = worst_comm = 0.0
    ok = True
    for r in range(1, 5):
        for c in range(1, 5):
            p = int(rng.choice([4, 6, 8]))
            bw = float(rng.uniform(0.5, 10))
            g = partition((2, r * p, c * p, 3), (p, p))
            ws = [weight_map_for(s, bw) for s in g.patches]
            # coverage and counts
            base_cov = np.zeros((r * p, c * p))
            total = np.zeros_like(base_cov)
            for s, w in zip(g.patches, ws):
                if s in g.base:
                    base_cov[s.rows, s.cols] += 1
                total[s.rows, s.cols] += w
            ok &= bool(np.all(base_cov == 1) and np.all(total >= 1))
            ok &= sum(s.role == AUX_HORIZONTAL for s in g.aux) == r * (c - 1)
            ok &= sum(s.role == AUX_VERTICAL for s in g.aux) == (r - 1) * c
            # normalization
            const = float(rng.uniform(-10, 10))
            scaled = [w * float(rng.uniform(0.2, 3)) for w in ws]
            ok &= bool(np.all(fuse([(s, np.full((2, p, p, 3), const), w) for s, w in zip(g.patches, scaled)], g.canvas) == const))
            # linearity
            xs = [rng.standard_normal((2, p, p, 3)) for _ in g.patches]
            ys = [rng.standard_normal((2, p, p, 3)) for _ in g.patches]
            a, b = rng.uniform(-3, 3, 2)
            lhs = fuse([(s, a * x + b * y, w) for s, x, y, w in zip(g.patches, xs, ys, ws)], g.canvas)
            rhs = a * fuse(list(zip(g.patches, xs, ws)), g.canvas) + b * fuse(list(zip(g.patches, ys, ws)), g.canvas)
            worst_lin = max(worst_lin, float(np.abs(lhs - rhs).max()))
            # step/fuse commutation
            t_from, t_to = sorted(rng.random(2))[::-1]
            stepped = fuse([(s, euler_step(x, y, t_from, t_to), w) for s, x, y, w in zip(g.patches, xs, ys, ws)], g.canvas)
            fused = euler_step(fuse(list(zip(g.patches, xs, ws)), g.canvas), fuse(list(zip(g.patches, ys, ws)), g.canvas),
                               t_from, t_to)
            worst_comm = max(worst_comm, float(np.abs(stepped - fused).max()))
    ok &= worst_lin <= 1e-9 and worst_comm <= 1e-9
    verdict("5 fusion suite", ok, f"linearity {worst_lin:.1e}, commutation {worst_comm:.1e}")


def test_6_schedule_suite():
    ok = True
    for n in range(1, 1001):
        for shift in (1.0, 2.5, 5.0, 20.0):
            grid = make_time_grid(n, shift)
            ok &= grid[0] == 1.0 and grid[-1] == 0.0 and bool(np.all(np.diff(grid) < 0))
        ok &= bool(np.allclose(make_time_grid(n, 1.0), 1 - np.arange(n + 1) / n, rtol=0, atol=1e-15))
    devs = []
    z0 = gaussian_noise((100_000,), 6, 1)
    eps = gaussian_noise((100_000,), 6, 2)
    for t in (0.15, 0.25, 0.5):
        devs.append(abs(forward_diffuse(z0, t, eps).var() - ((1 - t) ** 2 + t ** 2)))
    ok &= max(devs) < 0.02
    verdict("6 schedule suite", ok, "variance deviations " + ", ".join(f"{d:.4f}" for d in devs))


def test_7_codec_suite():
    rng = np.random.default_rng(7)
    worst_rt = worst_energy = 0.0
    for _ in range(20):
        f, h, w = rng.integers(1, 5), 2 * rng.integers(1, 33), 2 * rng.integers(1, 33)
        x = rng.random((f, h, w, 3))
        lat = haar_encode(x)
        worst_rt = max(worst_rt, float(np.abs(haar_decode(lat, clamp=False) - x).max()))
        e = float(np.sum(x * x))
        worst_energy = max(worst_energy, abs(float(np.sum(lat * lat)) - e) / e)
    block = np.zeros((1, 2, 2, 3))
    block[0, :, :, 0] = [[1, 2], [3, 4]]
    hand = haar_encode(block)[0, 0, 0, [0, 3, 6, 9]].tolist() == [5.0, -1.0, -2.0, 0.0]
    ok = worst_rt <= 1e-12 and worst_energy <= 1e-9 and hand
    verdict("7 codec suite", ok, f"roundtrip {worst_rt:.1e}, energy {worst_energy:.1e}, hand block {hand}")


def _upscale(tmp, name, cfg_path, workers, extra=()):
    out = tmp / name
    code = main(["upscale", "--input", str(tmp / "in"), "--output", str(out), "--config", str(cfg_path),
                 "--workers", str(workers), "--no-figures", *extra])
    assert code == 0
    return [p.read_bytes() for p in sorted(out.glob("frame_*.ppm"))]


def test_8_determinism(tmp_path):
    ref = procedural_video(4, 64, 64, seed=8)
    write_frames(tmp_path / "in", bicubic_resize(ref, (32, 32)))
    ok, details = True, []
    configs = {
        "stochastic": {"sampler": {"num_steps": 10, "seed": 3}, "model_kind": "stochastic_oracle",
                       "amplitude": 0.1, "patch_size": [32, 32]},
        "toy": {"sampler": {"num_steps": 2, "seed": 3, "cfg_scale": 3.0}, "model_kind": "toy_denoiser",
                "patch_size": [32, 32]},
    }
    weights = tmp_path / "w.bin"
    ModelWeights.init(seed=3, zero_adapters=False).save(weights)
    for name, doc in configs.items():
        cfg_path = tmp_path / f"{name}.json"
        cfg_path.write_text(json.dumps(doc))
        extra = ("--weights", str(weights)) if name == "toy" else ()
        a = _upscale(tmp_path, f"{name}_a", cfg_path, 1, extra)
        b = _upscale(tmp_path, f"{name}_b", cfg_path, 1, extra)
        c = _upscale(tmp_path, f"{name}_c", cfg_path, 4, extra)
        same = len(a) == 4 and a == b == c
        ok &= same
        details.append(f"{name} {'identical' if same else 'differs'}")
    verdict("8 determinism", ok, ", ".join(details))


def test_9_conditioning_sensitivity():
    w = ModelWeights.init(seed=9, zero_adapters=False)
    rng = np.random.default_rng(9)
    z = rng.standard_normal((2, 8, 8, 12))
    mask = np.zeros((8, 8))
    mask[:4, :4] = 1.0
    cond = ConditioningBundle(rng.standard_normal(z.shape), rng.standard_normal(z.shape), mask,
                              MicroCondition(250, 1.0, (0, 0)))
    base = toy_denoiser_predict(w, z, 0.6, cond)
    flipped_mask = mask.copy()
    flipped_mask[5, 6] = 1.0
    flipped = ConditioningBundle(cond.patch_latent_noised, cond.global_latent_noised, flipped_mask, cond.micro)
    scaled = ConditioningBundle(cond.patch_latent_noised, cond.global_latent_noised, mask,
                                MicroCondition(250, 4.0, (0, 0)))
    d_mask = float(np.abs(toy_denoiser_predict(w, z, 0.6, flipped) - base).max())
    d_scale = float(np.abs(toy_denoiser_predict(w, z, 0.6, scaled) - base).max())
    v_uncond = toy_denoiser_predict(w, z, 0.6, cond.unconditional())
    identity = cfg_combine(v_uncond, base, 1.0).tobytes() == base.tobytes()
    ok = d_mask > 0 and d_scale > 0 and identity
    verdict("9 conditioning sensitivity", ok, f"mask flip {d_mask:.2e}, scale 1->4 {d_scale:.2e}, cfg identity {identity}")
