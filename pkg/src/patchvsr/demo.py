"""Procedural test videos: drifting sinusoidal gratings with moving polygons."""

from __future__ import annotations

import numpy as np


def _polygon_mask(yy, xx, cy, cx, radius, sides, angle):
    theta = np.arctan2(yy - cy, xx - cx) - angle
    r = np.hypot(yy - cy, xx - cx)
    sector = 2.0 * np.pi / sides
    # distance from centre to the polygon edge along theta
    edge = radius * np.cos(np.pi / sides) / np.cos((theta % sector) - sector / 2.0)
    return r <= edge


def procedural_video(frames: int = 4, height: int = 128, width: int = 128, seed: int = 0,
                     shapes: int = 3, smooth: bool = False) -> np.ndarray:
    """Seeded ``(F, H, W, 3)`` video with values in [0, 1].

    ``smooth=True`` drops the hard-edged polygons and keeps only low
    frequency gratings.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(height) + 0.5, np.arange(width) + 0.5, indexing="ij")
    freqs = rng.uniform(0.5, 2.0, size=(3, 2)) * 2.0 * np.pi / max(height, width)
    phases = rng.uniform(0, 2 * np.pi, size=3)
    speeds = rng.uniform(0.1, 0.4, size=3)
    polys = [
        dict(
            c=rng.uniform(0.2, 0.8, 2) * (height, width),
            vel=rng.uniform(-2.0, 2.0, 2),
            radius=rng.uniform(0.08, 0.2) * min(height, width),
            sides=int(rng.integers(3, 7)),
            spin=rng.uniform(-0.2, 0.2),
            colour=rng.uniform(0.1, 0.9, 3),
        )
        for _ in range(shapes)
    ]
    video = np.empty((frames, height, width, 3))
    for f in range(frames):
        for ch in range(3):
            arg = freqs[ch, 0] * yy + freqs[ch, 1] * xx + phases[ch] + speeds[ch] * f
            video[f, :, :, ch] = 0.5 + 0.3 * np.sin(arg)
        if smooth:
            continue
        for p in polys:
            cy, cx = p["c"] + f * p["vel"]
            mask = _polygon_mask(yy, xx, cy, cx, p["radius"], p["sides"], p["spin"] * f)
            video[f][mask] = p["colour"]
    return np.clip(video, 0.0, 1.0)


def smooth_field(frames: int = 4, height: int = 128, width: int = 128, seed: int = 0,
                 contrast: float = 0.25) -> np.ndarray:
    """Low-contrast, low-frequency video around mid-grey."""
    video = procedural_video(frames, height, width, seed, smooth=True)
    return 0.5 + contrast * (video - 0.5)
