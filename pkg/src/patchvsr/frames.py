"""Frame sequences stored as binary PPM files ``frame_0000.ppm, ...``."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .pipeline import quantize

FRAME_RE = re.compile(r"^frame_(\d{4,})\.ppm$")


class FrameIOError(OSError):
    pass


def frame_name(index: int) -> str:
    return f"frame_{index:04d}.ppm"


def write_frames(directory, video: np.ndarray) -> list[Path]:
    """Write a float video in [0, 1] (or uint8) as P6 files with maxval 255."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data = video if video.dtype == np.uint8 else quantize(video)
    paths = []
    for i, frame in enumerate(data):
        path = directory / frame_name(i)
        Image.fromarray(np.ascontiguousarray(frame)).save(path, format="PPM")
        paths.append(path)
    return paths


def read_frames_u8(directory) -> np.ndarray:
    directory = Path(directory)
    if not directory.is_dir():
        raise FrameIOError(f"{directory} is not a directory")
    indexed = {}
    for entry in directory.iterdir():
        match = FRAME_RE.match(entry.name)
        if match:
            indexed[int(match.group(1))] = entry
    if not indexed:
        raise FrameIOError(f"no frame_NNNN.ppm files in {directory}")
    if sorted(indexed) != list(range(len(indexed))):
        raise FrameIOError(f"frame indices in {directory} are not contiguous from 0")
    frames = []
    for i in range(len(indexed)):
        try:
            with Image.open(indexed[i]) as img:
                if img.format != "PPM" or img.mode != "RGB":
                    raise FrameIOError(f"{indexed[i]} is not an RGB PPM")
                frames.append(np.asarray(img, dtype=np.uint8))
        except (OSError, ValueError) as exc:
            if isinstance(exc, FrameIOError):
                raise
            raise FrameIOError(f"cannot read {indexed[i]}: {exc}") from exc
    if len({f.shape for f in frames}) != 1:
        raise FrameIOError(f"frames in {directory} have differing dimensions")
    return np.stack(frames)


def read_frames(directory) -> np.ndarray:
    return read_frames_u8(directory).astype(np.float64) / 255.0
