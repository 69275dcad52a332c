"""Single-level orthonormal 2D Haar transform used as an exactly invertible
stand-in for a video autoencoder.

Latent channel layout is band-major: ``[LL_rgb, LH_rgb, HL_rgb, HH_rgb]``,
i.e. channel ``band * 3 + colour``.
"""

from __future__ import annotations

import numpy as np

from .errors import CodecError

BANDS = ("LL", "LH", "HL", "HH")
LATENT_CHANNELS = 12


def haar_encode(video: np.ndarray) -> np.ndarray:
    if video.ndim != 4 or video.shape[-1] != 3:
        raise CodecError(f"expected (F, H, W, 3) video, got {video.shape}")
    _, height, width, _ = video.shape
    if height % 2 or width % 2:
        raise CodecError(f"frame dims must be even, got {height}x{width}")
    a = video[:, 0::2, 0::2, :]
    b = video[:, 0::2, 1::2, :]
    c = video[:, 1::2, 0::2, :]
    d = video[:, 1::2, 1::2, :]
    ll = (a + b + c + d) / 2.0
    lh = (a - b + c - d) / 2.0
    hl = (a + b - c - d) / 2.0
    hh = (a - b - c + d) / 2.0
    return np.concatenate([ll, lh, hl, hh], axis=-1)


def haar_decode(latent: np.ndarray, clamp: bool = True) -> np.ndarray:
    if latent.ndim != 4 or latent.shape[-1] != LATENT_CHANNELS:
        raise CodecError(f"expected (F, h, w, {LATENT_CHANNELS}) latent, got {latent.shape}")
    frames, h, w, _ = latent.shape
    ll, lh, hl, hh = (latent[..., 3 * i:3 * i + 3] for i in range(4))
    video = np.empty((frames, 2 * h, 2 * w, 3), dtype=np.float64)
    video[:, 0::2, 0::2, :] = (ll + lh + hl + hh) / 2.0
    video[:, 0::2, 1::2, :] = (ll - lh + hl - hh) / 2.0
    video[:, 1::2, 0::2, :] = (ll + lh - hl - hh) / 2.0
    video[:, 1::2, 1::2, :] = (ll - lh - hl + hh) / 2.0
    if clamp:
        np.clip(video, 0.0, 1.0, out=video)
    return video
