"""Patch geometry, blending weights, weighted fusion, location masks and
bicubic resampling.

Canvases are ``(frames, height, width, channels)`` arrays. Base patches tile
the canvas without overlap; auxiliary patches straddle the seam between two
neighbouring base patches with 50% overlap on each side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    CoverageError,
    GeometryError,
    InvalidConfigError,
    PatchIndexError,
    ShapeError,
)

BASE = "base"
AUX_HORIZONTAL = "aux_horizontal"
AUX_VERTICAL = "aux_vertical"
ROLES = (BASE, AUX_HORIZONTAL, AUX_VERTICAL)


@dataclass(frozen=True)
class PatchSpec:
    origin: tuple[int, int]
    size: tuple[int, int]
    role: str
    index: int

    @property
    def rows(self) -> slice:
        return slice(self.origin[0], self.origin[0] + self.size[0])

    @property
    def cols(self) -> slice:
        return slice(self.origin[1], self.origin[1] + self.size[1])

    def extract(self, canvas: np.ndarray) -> np.ndarray:
        return canvas[:, self.rows, self.cols, :]


@dataclass(frozen=True)
class PatchGrid:
    canvas: tuple[int, int, int, int]
    patch_size: tuple[int, int]
    base: list[PatchSpec] = field(default_factory=list)
    aux: list[PatchSpec] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return self.canvas[1] // self.patch_size[0]

    @property
    def n_cols(self) -> int:
        return self.canvas[2] // self.patch_size[1]

    @property
    def patches(self) -> list[PatchSpec]:
        return self.base + self.aux

    def __len__(self) -> int:
        return len(self.base) + len(self.aux)

    def patch(self, index: int) -> PatchSpec:
        patches = self.patches
        if not 0 <= index < len(patches):
            raise PatchIndexError(f"patch index {index} out of range for {len(patches)} patches")
        return patches[index]

    def without_aux(self) -> "PatchGrid":
        return PatchGrid(self.canvas, self.patch_size, list(self.base), [])


def partition(canvas_dims: Sequence[int], patch_size: Sequence[int]) -> PatchGrid:
    """Split a canvas into base patches plus horizontal/vertical bridging patches.

    Patches are numbered base first (row-major), then horizontal auxiliaries,
    then vertical auxiliaries.
    """
    frames, height, width, channels = (int(d) for d in canvas_dims)
    h, w = (int(d) for d in patch_size)
    if h <= 0 or w <= 0 or h % 2 or w % 2:
        raise GeometryError(f"patch dims must be positive and even, got {(h, w)}")
    if height % h or width % w:
        raise GeometryError(f"canvas {height}x{width} is not divisible by patch {h}x{w}")
    rows, cols = height // h, width // w

    base = [
        PatchSpec((r * h, c * w), (h, w), BASE, r * cols + c)
        for r in range(rows)
        for c in range(cols)
    ]
    aux = []
    idx = len(base)
    for r in range(rows):
        for c in range(cols - 1):
            aux.append(PatchSpec((r * h, c * w + w // 2), (h, w), AUX_HORIZONTAL, idx))
            idx += 1
    for r in range(rows - 1):
        for c in range(cols):
            aux.append(PatchSpec((r * h + h // 2, c * w), (h, w), AUX_VERTICAL, idx))
            idx += 1
    return PatchGrid((frames, height, width, channels), (h, w), base, aux)


def linear_ramp(length: int, peak: float) -> np.ndarray:
    """Symmetric triangle over ``length`` (even) pixels.

    The two pixels adjacent to the centre line take ``peak``; the first and
    last pixels take 0.
    """
    half = length // 2
    dist = np.abs(np.arange(length) + 0.5 - half) - 0.5
    return peak * (1.0 - dist / (half - 1))


def aux_weight_map(patch_size: Sequence[int], orientation: str, blend_weight: float) -> np.ndarray:
    h, w = (int(d) for d in patch_size)
    if blend_weight <= 0:
        raise InvalidConfigError(f"blend_weight must be > 0, got {blend_weight}")
    if orientation in ("horizontal", AUX_HORIZONTAL):
        if w % 2 or w < 4:
            raise InvalidConfigError(f"ramp axis must be even and >= 4, got width {w}")
        return np.broadcast_to(linear_ramp(w, blend_weight)[None, :], (h, w)).copy()
    if orientation in ("vertical", AUX_VERTICAL):
        if h % 2 or h < 4:
            raise InvalidConfigError(f"ramp axis must be even and >= 4, got height {h}")
        return np.broadcast_to(linear_ramp(h, blend_weight)[:, None], (h, w)).copy()
    raise InvalidConfigError(f"unknown orientation {orientation!r}")


def base_weight_map(patch_size: Sequence[int]) -> np.ndarray:
    return np.ones(tuple(patch_size), dtype=np.float64)


def weight_map_for(patch: PatchSpec, blend_weight: float) -> np.ndarray:
    if patch.role == BASE:
        return base_weight_map(patch.size)
    return aux_weight_map(patch.size, patch.role, blend_weight)


def fuse(contributions, canvas_dims: Sequence[int]) -> np.ndarray:
    """Per-pixel weighted mean of patch contributions.

    ``contributions`` is an iterable of ``(PatchSpec, values, weight_map)``.
    Accumulation runs in patch-index order so the result does not depend on
    the order the contributions were produced in.

    The mean is taken as ``ref + sum(w * (v - ref)) / sum(w)`` with ``ref``
    the first covering contribution, so agreeing values fuse bit-exactly.
    """
    frames, height, width, channels = (int(d) for d in canvas_dims)
    items = sorted(contributions, key=lambda c: c[0].index)
    ref = np.zeros((frames, height, width, channels), dtype=np.float64)
    seen = np.zeros((height, width), dtype=bool)
    for spec, values, weights in items:
        (r, c), (h, w) = spec.origin, spec.size
        if r < 0 or c < 0 or r + h > height or c + w > width:
            raise GeometryError(f"patch {spec.index} at {spec.origin} size {spec.size} leaves the canvas")
        if values.shape != (frames, h, w, channels):
            raise ShapeError(f"patch {spec.index}: values {values.shape} do not match footprint")
        if weights.shape != (h, w):
            raise ShapeError(f"patch {spec.index}: weight map {weights.shape} does not match {(h, w)}")
        fresh = ~seen[r:r + h, c:c + w]
        if fresh.any():
            np.copyto(ref[:, r:r + h, c:c + w, :], values, where=fresh[None, :, :, None])
            seen[r:r + h, c:c + w] = True

    num = np.zeros_like(ref)
    den = np.zeros((height, width), dtype=np.float64)
    for spec, values, weights in items:
        rows, cols = spec.rows, spec.cols
        num[:, rows, cols, :] += weights[None, :, :, None] * (values - ref[:, rows, cols, :])
        den[rows, cols] += weights
    if not np.all(den > 0):
        bad = np.argwhere(den <= 0)[0]
        raise CoverageError(f"canvas pixel {tuple(bad)} has no positive weight")
    return ref + num / den[None, :, :, None]


def _scale_edge(x: int, src: int, dst: int) -> int:
    # round half up, so shared edges land on the same pixel for both neighbours
    return math.floor(x * dst / src + 0.5)


def location_mask(grid: PatchGrid, patch_index: int, global_dims: Sequence[int]) -> np.ndarray:
    """Binary footprint of one patch rescaled to the global frame size."""
    spec = grid.patch(patch_index)
    gh, gw = (int(d) for d in global_dims)
    _, height, width, _ = grid.canvas
    r0 = _scale_edge(spec.origin[0], height, gh)
    r1 = max(_scale_edge(spec.origin[0] + spec.size[0], height, gh), r0 + 1)
    c0 = _scale_edge(spec.origin[1], width, gw)
    c1 = max(_scale_edge(spec.origin[1] + spec.size[1], width, gw), c0 + 1)
    mask = np.zeros((gh, gw), dtype=np.float64)
    mask[r0:min(r1, gh), c0:min(c1, gw)] = 1.0
    return mask


def cubic_kernel(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    x = np.abs(x)
    x2, x3 = x * x, x * x * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def resize_matrix(n_in: int, n_out: int, a: float = -0.5) -> np.ndarray:
    """Dense ``(n_out, n_in)`` cubic-convolution operator with clamped edges."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(np.int64)
    frac = src - base
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    for tap in range(-1, 3):
        idx = np.clip(base + tap, 0, n_in - 1)
        np.add.at(mat, (rows, idx), cubic_kernel(frac - tap, a))
    return mat


def bicubic_resize(frame: np.ndarray, new_dims: Sequence[int]) -> np.ndarray:
    """Resize ``(..., H, W, C)`` to ``(..., new_H, new_W, C)``."""
    if frame.ndim < 3:
        raise ShapeError(f"expected (..., H, W, C), got shape {frame.shape}")
    height, width = frame.shape[-3], frame.shape[-2]
    new_h, new_w = (int(d) for d in new_dims)
    if min(height, width, new_h, new_w) < 4:
        raise InvalidConfigError(f"bicubic resize needs dims >= 4: {(height, width)} -> {(new_h, new_w)}")
    if (new_h, new_w) == (height, width):
        return np.array(frame, dtype=np.float64, copy=True)
    rmat = resize_matrix(height, new_h)
    cmat = resize_matrix(width, new_w)
    out = np.einsum("ih,...hwc->...iwc", rmat, frame)
    return np.einsum("jw,...iwc->...ijc", cmat, out)


@dataclass(frozen=True)
class CropRecord:
    height: int
    width: int

    def apply(self, canvas: np.ndarray) -> np.ndarray:
        return canvas[:, : self.height, : self.width, :]


def pad_to_multiple(canvas: np.ndarray, patch_size: Sequence[int]) -> tuple[np.ndarray, CropRecord]:
    """Reflect-pad bottom/right edges up to the next multiple of the patch size."""
    h, w = (int(d) for d in patch_size)
    height, width = canvas.shape[1], canvas.shape[2]
    pad_h = -height % h
    pad_w = -width % w
    record = CropRecord(height, width)
    if pad_h == 0 and pad_w == 0:
        return canvas, record
    # numpy's reflect mode repeats the reflection when the pad exceeds the size
    mode = "reflect" if min(height, width) > 1 else "edge"
    padded = np.pad(canvas, ((0, 0), (0, pad_h), (0, pad_w), (0, 0)), mode=mode)
    return padded, record
