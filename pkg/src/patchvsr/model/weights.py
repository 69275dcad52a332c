"""Toy denoiser parameters, deterministic initialisation and snapshot files.

Snapshot layout (all integers little-endian)::

    magic        8 bytes   b"PVSRWTS1"
    count        uint32    number of entries
    per entry:
      name_len   uint32
      name       name_len bytes, UTF-8
      ndim       uint32
      dims       ndim x uint64
      data       prod(dims) x float64 (little-endian, C order)
    crc32        uint32    zlib.crc32 of every preceding byte

The model hyper-parameters travel as the entry ``"config"``.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from ..errors import SnapshotError

MAGIC = b"PVSRWTS1"


@dataclass(frozen=True)
class ToyConfig:
    latent_channels: int = 12
    width: int = 32
    heads: int = 2
    depth: int = 2
    lora_rank: int = 4
    ffn_mult: int = 2
    null_text_tokens: int = 4
    null_global_tokens: int = 4
    freq_dim: int = 16

    @property
    def head_dim(self) -> int:
        return self.width // self.heads


ATTN_PROJ = ("q", "k", "v", "o")


def _block_specs(prefix: str, cfg: ToyConfig, with_gca: bool, with_lora: bool):
    D, H, r = cfg.width, cfg.width * cfg.ffn_mult, cfg.lora_rank
    specs = [
        (f"{prefix}.ada.w", (6 * D, D), "normal"),
        (f"{prefix}.ada.b", (6 * D,), "bias"),
    ]
    linears = [(f"{prefix}.{part}.{p}", D, D) for part in ("ssa", "sca", "tsa") for p in ATTN_PROJ]
    linears += [(f"{prefix}.ffn.fc1", H, D), (f"{prefix}.ffn.fc2", D, H)]
    for name, out_dim, in_dim in linears:
        specs.append((f"{name}.w", (out_dim, in_dim), "normal"))
        if with_lora:
            specs.append((f"{name}.lora_a", (r, in_dim), "normal"))
            specs.append((f"{name}.lora_b", (out_dim, r), "adapter"))
    specs += [(f"{prefix}.ffn.fc1.b", (H,), "zero"), (f"{prefix}.ffn.fc2.b", (D,), "zero")]
    if with_gca:
        specs += [(f"{prefix}.gca.{p}.w", (D, D), "normal") for p in ("k", "v", "o")]
        specs.append((f"{prefix}.gca.gate", (D,), "adapter"))
    return specs


def param_specs(cfg: ToyConfig):
    """Ordered ``(name, shape, kind)`` list; order fixes the random draws.

    ``kind`` is ``normal`` (fan-in scaled), ``bias``, ``zero``, ``adapter``
    (zero unless adapters are randomised) or ``copy:<name>``.
    """
    D, C, fd = cfg.width, cfg.latent_channels, cfg.freq_dim
    specs = [
        ("base.embed.w", (D, C), "normal"),
        ("base.embed.b", (D,), "zero"),
        ("base.time.fc1.w", (D, D), "normal"),
        ("base.time.fc1.b", (D,), "zero"),
        ("base.time.fc2.w", (D, D), "normal"),
        ("base.time.fc2.b", (D,), "zero"),
        ("base.null_text", (cfg.null_text_tokens, D), "token"),
        ("base.final.ada.w", (2 * D, D), "normal"),
        ("base.final.ada.b", (2 * D,), "bias"),
        ("base.final.out.w", (C, D), "normal"),
        ("base.final.out.b", (C,), "zero"),
        ("micro.proj.w", (D, 4 * fd), "normal"),
        ("micro.proj.b", (D,), "zero"),
        ("micro.mod.w", (D, D), "adapter"),
        ("micro.mod.b", (D,), "adapter"),
    ]
    for i in range(cfg.depth):
        specs += _block_specs(f"base.blocks.{i}", cfg, with_gca=True, with_lora=True)

    # branch blocks start from base blocks picked at equal intervals
    picks = np.linspace(0, cfg.depth - 1, cfg.depth).round().astype(int)
    specs += [("patch.embed.w", (D, C), "copy:base.embed.w"), ("patch.embed.b", (D,), "zero")]
    for j, src in enumerate(picks):
        for name, shape, _ in _block_specs(f"base.blocks.{src}", cfg, with_gca=False, with_lora=False):
            specs.append((name.replace(f"base.blocks.{src}", f"patch.blocks.{j}"), shape, f"copy:{name}"))
        specs += [(f"patch.out.{j}.w", (D, D), "adapter"), (f"patch.out.{j}.b", (D,), "adapter")]

    specs += [
        ("global.embed.w", (D, C + 1), "normal"),
        ("global.embed.b", (D,), "zero"),
        ("global.merge.w", (D, 4 * D), "normal"),
        ("global.merge.b", (D,), "zero"),
        ("global.null_tokens", (cfg.null_global_tokens, D), "token"),
    ]
    for j, src in enumerate(picks):
        for name, shape, _ in _block_specs(f"base.blocks.{src}", cfg, with_gca=False, with_lora=False):
            specs.append((name.replace(f"base.blocks.{src}", f"global.blocks.{j}"), shape, f"copy:{name}"))
    return specs


class ModelWeights:
    """Immutable bag of named float64 arrays plus the model config."""

    def __init__(self, config: ToyConfig, params: dict[str, np.ndarray]):
        self.config = config
        self._params = {k: np.ascontiguousarray(v, dtype=np.float64) for k, v in params.items()}
        for v in self._params.values():
            v.flags.writeable = False

    @classmethod
    def init(cls, config: ToyConfig | None = None, seed: int = 0, zero_adapters: bool = True) -> "ModelWeights":
        config = config or ToyConfig()
        rng = np.random.default_rng([seed, 0])
        adapter_rng = np.random.default_rng([seed, 1])
        params: dict[str, np.ndarray] = {}
        for name, shape, kind in param_specs(config):
            if kind == "normal":
                params[name] = rng.standard_normal(shape) / np.sqrt(shape[-1])
            elif kind == "bias":
                params[name] = 0.5 * rng.standard_normal(shape)
            elif kind == "token":
                params[name] = rng.standard_normal(shape)
            elif kind == "zero":
                params[name] = np.zeros(shape)
            elif kind == "adapter":
                if zero_adapters:
                    params[name] = np.zeros(shape)
                else:
                    params[name] = adapter_rng.standard_normal(shape) / np.sqrt(shape[-1])
            elif kind.startswith("copy:"):
                params[name] = params[kind[5:]].copy()
            else:
                raise ValueError(kind)
        return cls(config, params)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def adapter_names(self) -> list[str]:
        return [name for name, _, kind in param_specs(self.config) if kind == "adapter"]

    def replace(self, updates: dict[str, np.ndarray]) -> "ModelWeights":
        params = dict(self._params)
        for name, value in updates.items():
            if name not in params:
                raise KeyError(name)
            if np.shape(value) != params[name].shape:
                raise ValueError(f"{name}: shape {np.shape(value)} != {params[name].shape}")
            params[name] = value
        return ModelWeights(self.config, params)

    def equal(self, other: "ModelWeights") -> bool:
        return (
            self.config == other.config
            and self.names() == other.names()
            and all(np.array_equal(self[n], other[n]) for n in self.names())
        )

    # snapshot I/O

    def to_bytes(self) -> bytes:
        entries = [("config", np.array(astuple(self.config), dtype=np.float64))]
        entries += list(self._params.items())
        chunks = [MAGIC, struct.pack("<I", len(entries))]
        for name, arr in entries:
            raw = name.encode("utf-8")
            chunks.append(struct.pack("<I", len(raw)) + raw)
            chunks.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
            chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        body = b"".join(chunks)
        return body + struct.pack("<I", zlib.crc32(body))

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelWeights":
        if len(data) < len(MAGIC) + 8 or data[: len(MAGIC)] != MAGIC:
            raise SnapshotError("bad magic bytes")
        body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
        if zlib.crc32(body) != crc:
            raise SnapshotError("checksum mismatch")
        pos = len(MAGIC)

        def take(n):
            nonlocal pos
            if pos + n > len(body):
                raise SnapshotError("truncated snapshot")
            chunk = body[pos:pos + n]
            pos += n
            return chunk

        (count,) = struct.unpack("<I", take(4))
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", take(4))
            name = take(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", take(4))
            dims = struct.unpack(f"<{ndim}Q", take(8 * ndim))
            n = int(np.prod(dims, dtype=np.int64))
            arrays[name] = np.frombuffer(take(8 * n), dtype="<f8").reshape(dims).astype(np.float64)
        if pos != len(body):
            raise SnapshotError("trailing bytes after last entry")
        if "config" not in arrays:
            raise SnapshotError("missing config entry")
        raw_cfg = arrays.pop("config")
        if raw_cfg.shape != (len(fields(ToyConfig)),):
            raise SnapshotError("config entry has the wrong length")
        config = ToyConfig(*(int(v) for v in raw_cfg))
        expected = {name: shape for name, shape, _ in param_specs(config)}
        if set(arrays) != set(expected):
            raise SnapshotError("parameter names do not match the config")
        for name, shape in expected.items():
            if arrays[name].shape != tuple(shape):
                raise SnapshotError(f"{name}: shape {arrays[name].shape} != {shape}")
        return cls(config, {name: arrays[name] for name in expected})

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelWeights":
        return cls.from_bytes(Path(path).read_bytes())
