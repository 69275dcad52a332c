"""Token-cost model for full-sequence versus per-patch attention.

With ``n`` tokens split into ``k = n / m`` patches of ``m`` tokens, the
pairwise token interactions drop from ``n**2`` to ``k * (n/k)**2 = n * m``.
The measured side runs the real attention kernel under a MAC counter.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidConfigError
from .model.attention import MacCounter, attention

CSV_FIELDS = ("n", "m", "full_cost", "patched_cost", "ratio", "measured_ratio", "rel_error")


@dataclass
class CostReport:
    n_tokens: int
    m_patch_tokens: int
    full_cost: int
    patched_cost: int
    ratio: float
    measured_ratio: float = float("nan")
    rel_error: float = float("nan")
    full_ops: int = 0
    patched_ops: int = 0

    @property
    def patch_count(self) -> int:
        return self.n_tokens // self.m_patch_tokens

    def csv_row(self) -> dict:
        return {
            "n": self.n_tokens,
            "m": self.m_patch_tokens,
            "full_cost": self.full_cost,
            "patched_cost": self.patched_cost,
            "ratio": repr(self.ratio),
            "measured_ratio": repr(self.measured_ratio),
            "rel_error": repr(self.rel_error),
        }


def token_cost(n: int, m: int) -> CostReport:
    if m < 1 or n < 1:
        raise InvalidConfigError(f"token counts must be positive, got n={n}, m={m}")
    if n % m:
        raise InvalidConfigError(f"patch tokens m={m} must divide n={n}")
    k = n // m
    patched = k * (n // k) ** 2
    return CostReport(n, m, full_cost=n * n, patched_cost=patched, ratio=n / m)


def _count_attention(tokens: int, batches: int, dim: int, rng) -> int:
    counter = MacCounter()
    q = rng.standard_normal((batches, tokens, dim))
    k = rng.standard_normal((batches, tokens, dim))
    v = rng.standard_normal((batches, tokens, dim))
    attention(q, k, v, counter)
    return counter.macs


def measure_attention_ops(pairs: Iterable[Sequence[int]], trials: int = 1, dim: int = 32, seed: int = 0) -> list[CostReport]:
    """Run instrumented attention for every ``(n, m)`` pair.

    The full run attends over ``n`` tokens once; the patched run attends over
    ``n/m`` independent groups of ``m`` tokens. Counts are summed over trials.
    """
    rng = np.random.default_rng(seed)
    reports = []
    for n, m in pairs:
        report = token_cost(int(n), int(m))
        full = sum(_count_attention(report.n_tokens, 1, dim, rng) for _ in range(trials))
        patched = sum(_count_attention(report.m_patch_tokens, report.patch_count, dim, rng) for _ in range(trials))
        report.full_ops, report.patched_ops = full, patched
        report.measured_ratio = full / patched
        report.rel_error = abs(report.measured_ratio - report.ratio) / report.ratio
        reports.append(report)
    return reports


def write_csv(reports: Sequence[CostReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for r in reports:
            writer.writerow(r.csv_row())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def as_dicts(reports: Sequence[CostReport]) -> list[dict]:
    return [asdict(r) for r in reports]
