"""Analytic velocity oracles.

Along a straight rectified-flow path the exact velocity towards a known
target is ``(target - z_t) / t``, which equals ``z0 - eps``.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from ..schedule import STREAM_PERTURB, gaussian_noise, noise_stream
from .conditioning import ConditioningBundle

T_MIN = 1e-4


def oracle_velocity(target: np.ndarray, z_t: np.ndarray, t: float) -> np.ndarray:
    return (target - z_t) / max(t, T_MIN)


def smooth_perturbation(shape, seed: int, stream: int, sigma: float | None = None) -> np.ndarray:
    """Spatially smooth Gaussian field with unit root-mean-square.

    White noise is blurred over the two spatial axes of a
    ``(frames, height, width, channels)`` shape and renormalised. The default
    blur width is 1/16 of the shorter spatial side.
    """
    noise = gaussian_noise(shape, seed, stream)
    if sigma is None:
        sigma = max(1.0, min(shape[1], shape[2]) / 16.0)
    field = gaussian_filter(noise, sigma=sigma, axes=(1, 2), mode="reflect")
    rms = np.sqrt(np.mean(field * field))
    return field / rms if rms > 0 else field


def stochastic_oracle_velocity(target, z_t, t, seed, amplitude, stream=0, sigma=None):
    """Oracle velocity plus a fixed smooth perturbation of RMS ``amplitude``.

    The perturbation depends on ``(seed, stream)`` only, so one patch keeps
    "hallucinating" the same deviation at every step.
    """
    v = oracle_velocity(target, z_t, t)
    if amplitude == 0:
        return v
    return v + amplitude * smooth_perturbation(z_t.shape, seed, stream, sigma)


class OracleModel:
    """Velocity model steering every patch towards the matching region of a
    known target canvas."""

    def __init__(self, target_canvas: np.ndarray):
        self.target = target_canvas

    def patch_target(self, cond: ConditioningBundle) -> np.ndarray:
        if cond.patch is None:
            return self.target
        return cond.patch.extract(self.target)

    def predict(self, z_t, t, cond):
        return oracle_velocity(self.patch_target(cond), z_t, t)


class StochasticOracleModel(OracleModel):
    def __init__(self, target_canvas, seed: int, amplitude: float, sigma: float | None = None):
        super().__init__(target_canvas)
        self.seed = seed
        self.amplitude = amplitude
        self.sigma = sigma

    def predict(self, z_t, t, cond):
        index = cond.patch.index if cond.patch is not None else 0
        return stochastic_oracle_velocity(
            self.patch_target(cond), z_t, t, self.seed, self.amplitude,
            stream=noise_stream(STREAM_PERTURB, index), sigma=self.sigma,
        )
