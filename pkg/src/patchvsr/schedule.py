"""Rectified-flow schedule: forward process, shifted time grid, Euler stepping
and classifier-free guidance.

Velocity convention: a velocity field predicts ``z0 - eps``, so that sampling
runs from t=1 (noise) to t=0 (data) with ``z_next = z + v * (t_from - t_to)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, InvalidStepError, ShapeError

# SplitMix64 constants (Steele, Lea & Flood 2014).
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_MUL_1 = 0xBF58476D1CE4E5B9
MIX_MUL_2 = 0x94D049BB133111EB
STREAM_SALT = 0xD1B54A32D192ED03
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SamplerConfig:
    num_steps: int = 50
    shift: float = 5.0
    cfg_scale: float = 5.0
    patch_noise_t: int = 250
    global_noise_t: int = 150
    blend_weight: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.num_steps, (int, np.integer)) or self.num_steps < 1:
            raise InvalidConfigError(f"num_steps must be a positive integer, got {self.num_steps!r}")
        if self.shift < 1:
            raise InvalidConfigError(f"shift must be >= 1, got {self.shift}")
        if self.cfg_scale < 0:
            raise InvalidConfigError(f"cfg_scale must be >= 0, got {self.cfg_scale}")
        for name in ("patch_noise_t", "global_noise_t"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= value <= 1000:
                raise InvalidConfigError(f"{name} must be an integer in [0, 1000], got {value!r}")
        if self.blend_weight <= 0:
            raise InvalidConfigError(f"blend_weight must be > 0, got {self.blend_weight}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed <= _MASK64:
            raise InvalidConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


def make_time_grid(num_steps: int, shift: float = 1.0) -> np.ndarray:
    """Decreasing grid ``t_0 = 1 > ... > t_n = 0`` with the timestep shift
    ``t = s*u / (1 + (s-1)*u)`` applied to the uniform grid ``u``.
    """
    if num_steps < 1:
        raise InvalidConfigError(f"num_steps must be >= 1, got {num_steps}")
    if shift < 1:
        raise InvalidConfigError(f"shift must be >= 1, got {shift}")
    u = 1.0 - np.arange(num_steps + 1, dtype=np.float64) / num_steps
    ts = shift * u / (1.0 + (shift - 1.0) * u)
    ts[0], ts[-1] = 1.0, 0.0
    return ts


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def forward_diffuse(z0: np.ndarray, t: float, noise: np.ndarray) -> np.ndarray:
    _check_same_shape(z0, noise, "forward_diffuse")
    if not 0.0 <= t <= 1.0:
        raise InvalidConfigError(f"t must lie in [0, 1], got {t}")
    if t == 0.0:
        return np.array(z0, dtype=np.float64, copy=True)
    if t == 1.0:
        return np.array(noise, dtype=np.float64, copy=True)
    return (1.0 - t) * z0 + t * noise


def discrete_to_continuous_t(t_disc: int) -> float:
    """Map a discrete noise level (1000 = pure noise) to continuous time."""
    if not 0 <= t_disc <= 1000:
        raise InvalidConfigError(f"discrete timestep must be in [0, 1000], got {t_disc}")
    return t_disc / 1000.0


def euler_step(z: np.ndarray, v: np.ndarray, t_from: float, t_to: float) -> np.ndarray:
    _check_same_shape(z, v, "euler_step")
    if t_from < t_to:
        raise InvalidStepError(f"Euler step must move toward t=0: {t_from} -> {t_to}")
    return z + v * (t_from - t_to)


def cfg_combine(v_uncond: np.ndarray, v_cond: np.ndarray, scale: float) -> np.ndarray:
    _check_same_shape(v_uncond, v_cond, "cfg_combine")
    if scale == 1.0:
        return np.array(v_cond, copy=True)
    return v_uncond + scale * (v_cond - v_uncond)


def _mix64(x: np.ndarray) -> np.ndarray:
    x = (x ^ (x >> np.uint64(30))) * np.uint64(MIX_MUL_1)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(MIX_MUL_2)
    return x ^ (x >> np.uint64(31))


def _stream_key(seed: int, stream_id: int) -> np.uint64:
    s = np.array([(stream_id ^ STREAM_SALT) & _MASK64], dtype=np.uint64)
    s = _mix64(s + np.uint64(GOLDEN_GAMMA))
    k = _mix64(np.array([seed & _MASK64], dtype=np.uint64) ^ s)
    return k[0]


def uniform_bits(n: int, seed: int, stream_id: int) -> np.ndarray:
    """Counter-based SplitMix64 output: element i depends only on (seed, stream, i)."""
    key = _stream_key(seed, stream_id)
    counters = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(key + counters * np.uint64(GOLDEN_GAMMA))


def gaussian_noise(shape, seed: int, stream_id: int = 0) -> np.ndarray:
    """Standard-normal field keyed by ``(seed, stream_id)`` via Box-Muller."""
    shape = tuple(int(s) for s in shape)
    if any(s < 0 for s in shape):
        raise ShapeError(f"invalid shape {shape}")
    n = int(np.prod(shape, dtype=np.int64))
    pairs = (n + 1) // 2
    bits = uniform_bits(2 * pairs, seed, stream_id)
    # 53-bit mantissa uniforms; u1 in (0, 1] keeps the log finite
    u = ((bits >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = r * np.cos(2.0 * np.pi * u2)
    out[1::2] = r * np.sin(2.0 * np.pi * u2)
    return out[:n].reshape(shape)


# Stream purposes; the patch index goes into the low 32 bits.
STREAM_CANVAS = 1
STREAM_PATCH_COND = 2
STREAM_GLOBAL_COND = 3
STREAM_NAIVE = 4
STREAM_PERTURB = 5


def noise_stream(purpose: int, index: int = 0) -> int:
    return (purpose << 32) | (index & 0xFFFFFFFF)
