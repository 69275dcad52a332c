"""End-to-end patch-wise super-resolution.

The upscaled video is encoded once into a canvas latent. Sampling keeps a
single shared canvas: at every step each patch (base and auxiliary) is cut
out, stepped with its own velocity, and the stepped patches are fused back
with base weight 1 and triangular auxiliary ramps. The naive baseline
denoises base patches independently and concatenates the results.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .codec import haar_decode, haar_encode
from .errors import InvalidConfigError, InvalidInputError, ShapeError
from .model import (
    ConditioningBundle,
    MicroCondition,
    ModelWeights,
    OracleModel,
    StochasticOracleModel,
    ToyDenoiser,
)
from .schedule import (
    STREAM_CANVAS,
    STREAM_GLOBAL_COND,
    STREAM_NAIVE,
    STREAM_PATCH_COND,
    SamplerConfig,
    cfg_combine,
    discrete_to_continuous_t,
    euler_step,
    forward_diffuse,
    gaussian_noise,
    make_time_grid,
    noise_stream,
)
from .tiling import (
    CropRecord,
    PatchGrid,
    bicubic_resize,
    fuse,
    location_mask,
    pad_to_multiple,
    partition,
    weight_map_for,
)

MODEL_KINDS = ("oracle", "stochastic_oracle", "toy_denoiser")


@dataclass(frozen=True)
class PipelineConfig:
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    upscale_factor: float = 2.0
    amplitude: float = 0.0
    model_kind: str = "oracle"
    joint_modulation: bool = True
    aux_enabled: bool = True
    patch_size: tuple[int, int] = (64, 64)
    workers: int = 1

    def __post_init__(self):
        if not 1.0 <= self.upscale_factor <= 4.0:
            raise InvalidConfigError(f"upscale_factor must be in [1, 4], got {self.upscale_factor}")
        if self.amplitude < 0:
            raise InvalidConfigError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.model_kind not in MODEL_KINDS:
            raise InvalidConfigError(f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        h, w = self.patch_size
        # pixel patches halve in the latent and must stay even with room for a ramp
        if h % 4 or w % 4 or h < 8 or w < 8:
            raise InvalidConfigError(f"patch_size must be multiples of 4 and >= 8, got {self.patch_size}")
        if self.workers < 1:
            raise InvalidConfigError(f"workers must be >= 1, got {self.workers}")

    @property
    def latent_patch(self) -> tuple[int, int]:
        return (self.patch_size[0] // 2, self.patch_size[1] // 2)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["patch_size"] = list(self.patch_size)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise InvalidConfigError("pipeline config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "sampler" in kwargs:
            sampler = kwargs["sampler"]
            if not isinstance(sampler, dict):
                raise InvalidConfigError("'sampler' must be an object")
            sknown = {f.name for f in dataclasses.fields(SamplerConfig)}
            bad = set(sampler) - sknown
            if bad:
                raise InvalidConfigError(f"unknown sampler keys: {sorted(bad)}")
            kwargs["sampler"] = SamplerConfig(**sampler)
        if "patch_size" in kwargs:
            ps = kwargs["patch_size"]
            if isinstance(ps, int):
                ps = [ps, ps]
            if not (isinstance(ps, (list, tuple)) and len(ps) == 2 and all(isinstance(v, int) for v in ps)):
                raise InvalidConfigError("'patch_size' must be an integer or a pair of integers")
            kwargs["patch_size"] = tuple(ps)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise InvalidConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


@dataclass
class RunReport:
    mode: str
    seam_index: float
    wall_time: float
    step_times: list[float] = field(default_factory=list)
    psnr_vs_reference: Optional[float] = None
    grid: tuple[int, int] = (1, 1)
    output_shape: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        psnr_value = d["psnr_vs_reference"]
        if psnr_value is not None and math.isinf(psnr_value):
            d["psnr_vs_reference"] = "inf"
        d["grid"] = list(self.grid)
        d["output_shape"] = list(self.output_shape)
        return d


@dataclass
class PreparedInputs:
    upscaled: np.ndarray            # padded pixel canvas
    canvas_latent: np.ndarray       # encoded padded canvas
    grid: PatchGrid
    global_latent: np.ndarray
    masks: list[np.ndarray]
    crop: CropRecord


def upscaled_dims(height: int, width: int, k: float) -> tuple[int, int]:
    return math.floor(height * k), math.floor(width * k)


def prepare_inputs(video: np.ndarray, k: float, patch_size: Sequence[int], aux_enabled: bool = True) -> PreparedInputs:
    """Upscale, pad, encode and partition; also build the global latent and
    one location mask per patch."""
    if video.ndim != 4 or video.shape[-1] != 3:
        raise InvalidInputError(f"expected an (F, H, W, 3) video, got {video.shape}")
    if not 1.0 <= k <= 4.0:
        raise InvalidConfigError(f"upscale factor must be in [1, 4], got {k}")
    frames, height, width, _ = video.shape
    if min(height, width) < 4 or frames < 1:
        raise InvalidInputError(f"video too small: {video.shape}")
    ph, pw = (int(d) for d in patch_size)
    th, tw = upscaled_dims(height, width, k)
    if min(th, tw) < 4:
        raise InvalidInputError(f"upscaled size {th}x{tw} is degenerate")
    up = bicubic_resize(video, (th, tw))
    padded, crop = pad_to_multiple(up, (ph, pw))
    canvas_latent = haar_encode(padded)
    grid = partition(canvas_latent.shape, (ph // 2, pw // 2))
    if not aux_enabled:
        grid = grid.without_aux()
    global_latent = haar_encode(bicubic_resize(padded, (ph, pw)))
    gdims = global_latent.shape[1:3]
    masks = [location_mask(grid, spec.index, gdims) for spec in grid.patches]
    return PreparedInputs(padded, canvas_latent, grid, global_latent, masks, crop)


def noise_augment_condition(latent: np.ndarray, t_disc: int, seed: int, stream: int) -> np.ndarray:
    t = discrete_to_continuous_t(t_disc)
    return forward_diffuse(latent, t, gaussian_noise(latent.shape, seed, stream))


def build_conditions(prep: PreparedInputs, config: PipelineConfig) -> list[ConditioningBundle]:
    s = config.sampler
    global_noised = noise_augment_condition(
        prep.global_latent, s.global_noise_t, s.seed, noise_stream(STREAM_GLOBAL_COND)
    )
    conds = []
    for spec, mask in zip(prep.grid.patches, prep.masks):
        patch_noised = noise_augment_condition(
            spec.extract(prep.canvas_latent), s.patch_noise_t, s.seed,
            noise_stream(STREAM_PATCH_COND, spec.index),
        )
        micro = MicroCondition(
            noise_t_disc=s.patch_noise_t,
            scale_factor=config.upscale_factor,
            crop_origin=(2 * spec.origin[0], 2 * spec.origin[1]),
        )
        conds.append(ConditioningBundle(patch_noised, global_noised, mask, micro, True, spec))
    return conds


def guided_velocity(model, z, t, cond, config: PipelineConfig):
    if config.model_kind != "toy_denoiser":
        return model.predict(z, t, cond)
    v_cond = model.predict(z, t, cond)
    if config.sampler.cfg_scale == 1.0:
        return v_cond
    v_uncond = model.predict(z, t, cond.unconditional())
    return cfg_combine(v_uncond, v_cond, config.sampler.cfg_scale)


def _map(pool, fn, items):
    if pool is None:
        return [fn(item) for item in items]
    return list(pool.map(fn, items))


def denoise_canvas(model, grid: PatchGrid, conds: Sequence[ConditioningBundle], config: PipelineConfig,
                   step_times: list | None = None) -> np.ndarray:
    """Joint-modulation sampling on one shared canvas latent."""
    s = config.sampler
    ts = make_time_grid(s.num_steps, s.shift)
    patches = grid.patches
    if len(conds) != len(patches):
        raise ShapeError(f"{len(conds)} conditioning bundles for {len(patches)} patches")
    weights = [weight_map_for(spec, s.blend_weight) for spec in patches]
    canvas = gaussian_noise(grid.canvas, s.seed, noise_stream(STREAM_CANVAS))

    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for t_from, t_to in zip(ts[:-1], ts[1:]):
            start = time.perf_counter()

            def step_patch(i, canvas=canvas, t_from=t_from, t_to=t_to):
                z = patches[i].extract(canvas)
                v = guided_velocity(model, z, t_from, conds[i], config)
                return euler_step(z, v, t_from, t_to)

            stepped = _map(pool, step_patch, range(len(patches)))
            canvas = fuse(zip(patches, stepped, weights), grid.canvas)
            if step_times is not None:
                step_times.append(time.perf_counter() - start)
    finally:
        if pool is not None:
            pool.shutdown()
    return canvas


def denoise_independent(model, grid: PatchGrid, conds: Sequence[ConditioningBundle], config: PipelineConfig,
                        step_times: list | None = None) -> np.ndarray:
    """Naive baseline: every base patch gets its own noise and trajectory;
    the final latents are concatenated without blending."""
    s = config.sampler
    ts = make_time_grid(s.num_steps, s.shift)
    base = grid.base
    latents = [gaussian_noise((grid.canvas[0], *spec.size, grid.canvas[3]), s.seed,
                              noise_stream(STREAM_NAIVE, spec.index)) for spec in base]
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for t_from, t_to in zip(ts[:-1], ts[1:]):
            start = time.perf_counter()

            def step_patch(i, latents=latents, t_from=t_from, t_to=t_to):
                v = guided_velocity(model, latents[i], t_from, conds[i], config)
                return euler_step(latents[i], v, t_from, t_to)

            latents = _map(pool, step_patch, range(len(base)))
            if step_times is not None:
                step_times.append(time.perf_counter() - start)
    finally:
        if pool is not None:
            pool.shutdown()
    canvas = np.zeros(grid.canvas, dtype=np.float64)
    for spec, z in zip(base, latents):
        canvas[:, spec.rows, spec.cols, :] = z
    return canvas


def make_model(config: PipelineConfig, target_canvas: np.ndarray, weights: ModelWeights | None = None):
    if config.model_kind == "oracle":
        return OracleModel(target_canvas)
    if config.model_kind == "stochastic_oracle":
        return StochasticOracleModel(target_canvas, config.sampler.seed, config.amplitude)
    return ToyDenoiser(weights if weights is not None else ModelWeights.init(seed=config.sampler.seed))


def quantize(video: np.ndarray) -> np.ndarray:
    """Round-half-away-from-zero of ``255 * v`` after clamping to [0, 1]."""
    return np.floor(255.0 * np.clip(video, 0.0, 1.0) + 0.5).astype(np.uint8)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB with peak 1.0; identical inputs give ``math.inf``."""
    if a.shape != b.shape:
        raise ShapeError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def seam_index(canvas: np.ndarray, grid: PatchGrid) -> float:
    """Mean absolute neighbour difference across base-patch seams divided by
    the same statistic over all other neighbour pairs.

    ``canvas`` may be the latent canvas or any uniformly scaled version of it
    (for instance the decoded, uncropped pixel canvas).
    """
    _, height, width, _ = canvas.shape
    gh, gw = grid.canvas[1], grid.canvas[2]
    if height % gh or width % gw or height // gh != width // gw:
        raise ShapeError(f"canvas {height}x{width} is not a uniform scaling of grid canvas {gh}x{gw}")
    scale = height // gh
    ph, pw = grid.patch_size[0] * scale, grid.patch_size[1] * scale

    dx = np.abs(np.diff(canvas, axis=2))  # pair (c, c+1) sits at index c
    dy = np.abs(np.diff(canvas, axis=1))
    seam_cols = np.zeros(width - 1, dtype=bool)
    seam_cols[np.arange(pw, width, pw) - 1] = True
    seam_rows = np.zeros(height - 1, dtype=bool)
    seam_rows[np.arange(ph, height, ph) - 1] = True

    boundary_sum = dx[:, :, seam_cols].sum() + dy[:, seam_rows].sum()
    boundary_n = dx[:, :, seam_cols].size + dy[:, seam_rows].size
    interior_sum = dx[:, :, ~seam_cols].sum() + dy[:, ~seam_rows].sum()
    interior_n = dx[:, :, ~seam_cols].size + dy[:, ~seam_rows].size
    if boundary_n == 0 or boundary_sum == 0:
        return 0.0
    interior = interior_sum / interior_n if interior_n else 0.0
    if interior == 0:
        return math.inf
    return float((boundary_sum / boundary_n) / interior)


def _target_canvas(prep: PreparedInputs, reference: np.ndarray | None, out_dims) -> np.ndarray:
    if reference is None:
        return prep.canvas_latent
    if reference.shape != (prep.upscaled.shape[0], *out_dims, 3):
        raise ShapeError(f"reference {reference.shape} does not match output {(prep.upscaled.shape[0], *out_dims, 3)}")
    padded, _ = pad_to_multiple(reference, (prep.grid.patch_size[0] * 2, prep.grid.patch_size[1] * 2))
    return haar_encode(padded)


def _run(video, reference, config: PipelineConfig, weights, naive: bool):
    start = time.perf_counter()
    prep = prepare_inputs(video, config.upscale_factor, config.patch_size, aux_enabled=config.aux_enabled and not naive)
    out_dims = (prep.crop.height, prep.crop.width)
    target = _target_canvas(prep, reference, out_dims)
    model = make_model(config, target, weights)
    conds = build_conditions(prep, config)
    step_times: list[float] = []
    if naive:
        latent = denoise_independent(model, prep.grid, conds, config, step_times)
    else:
        latent = denoise_canvas(model, prep.grid, conds, config, step_times)
    output = prep.crop.apply(haar_decode(latent))
    report = RunReport(
        mode="naive" if naive else "joint",
        seam_index=seam_index(latent, prep.grid),
        wall_time=0.0,
        step_times=step_times,
        grid=(prep.grid.n_rows, prep.grid.n_cols),
        output_shape=output.shape,
    )
    if reference is not None:
        report.psnr_vs_reference = psnr(quantize(output) / 255.0, quantize(reference) / 255.0)
    report.wall_time = time.perf_counter() - start
    return output, report, latent, prep


def run_patchvsr(video, reference=None, config: PipelineConfig | None = None, weights: ModelWeights | None = None):
    """Returns ``(output video, RunReport)``.

    PSNR is measured on 8-bit quantised frames, i.e. on what gets written.
    ``joint_modulation=False`` falls back to the naive stitching baseline.
    """
    config = config or PipelineConfig()
    output, report, _, _ = _run(video, reference, config, weights, naive=not config.joint_modulation)
    return output, report


def naive_stitch_run(video, reference=None, config: PipelineConfig | None = None, weights: ModelWeights | None = None):
    config = config or PipelineConfig()
    output, report, _, _ = _run(video, reference, config, weights, naive=True)
    return output, report


def run_detailed(video, reference, config: PipelineConfig, weights=None, naive=False):
    """Like :func:`run_patchvsr` but also returns the final latent and the
    prepared inputs."""
    return _run(video, reference, config, weights, naive)
