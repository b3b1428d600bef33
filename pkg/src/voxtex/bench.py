"""Timing of the naive and incremental window-histogram engines.

Only the compiled kernels are timed. Binning and padding run once per radius
outside the timer, so the measured cost is the counting work and not Python
overhead. Radii are timed round-robin and an exponent is fitted per round;
the reported exponent is the median over rounds. On a shared machine the
speed drifts over seconds, which barely changes the ratios within a round.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .features import _kernels

MODES = ("naive", "incremental")


@dataclass(frozen=True)
class BenchRow:
    radius: int
    seconds: float
    per_voxel: float


@dataclass(frozen=True)
class BenchResult:
    mode: str
    size: int
    bins: int
    rows: tuple[BenchRow, ...]
    round_exponents: tuple[float, ...] = ()

    @property
    def exponent(self) -> float:
        if self.round_exponents:
            return float(np.median(self.round_exponents))
        return fit_exponent([r.radius for r in self.rows], [r.per_voxel for r in self.rows])

    def table(self) -> str:
        lines = [f"mode={self.mode} size={self.size}^3 bins={self.bins}",
                 f"{'r':>4} {'seconds':>10} {'ns/voxel':>12}"]
        for row in self.rows:
            lines.append(f"{row.radius:>4} {row.seconds:>10.4f} {1e9 * row.per_voxel:>12.1f}")
        if len(self.rows) >= 2:
            lines.append(f"fitted exponent: {self.exponent:.3f} "
                         f"(median of {max(1, len(self.round_exponents))} rounds)")
        return "\n".join(lines) + "\n"


def fit_exponent(radii: Sequence[float], times: Sequence[float]) -> float:
    """Slope of the least-squares line through ``(log r, log t)``."""
    if len(radii) < 2 or len(radii) != len(times):
        raise ValueError("need at least two (radius, time) pairs of equal length")
    if min(times) <= 0 or min(radii) <= 0:
        raise ValueError("radii and times must be positive")
    slope, _ = np.polyfit(np.log(radii), np.log(times), 1)
    return float(slope)


def bench_histograms(mode: str, radii: Sequence[int], size: int, k: int = 8,
                     repeats: int = 5, seed: int = 0, min_time: float = 1.0) -> BenchResult:
    """Per-voxel kernel time on a random ``size^3`` bin volume for each radius.

    Runs at least ``repeats`` timed rounds and keeps going until ``min_time``
    seconds have been spent. Table times are per-radius medians.
    """
    if mode not in MODES:
        raise ValueError(f"unknown bench mode {mode!r}; expected one of {MODES}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    radii = [int(r) for r in radii]
    rng = np.random.default_rng(seed)
    bins = rng.integers(0, k, size=(size, size, size)).astype(np.uint8)
    kernel = (_kernels.naive_window_hist3d if mode == "naive"
              else _kernels.incremental_window_hist3d)
    out = np.zeros((size, size, size, k), dtype=np.int32)
    padded = {r: np.pad(bins, r, mode="edge") for r in radii}

    def one_round():
        times = []
        for r in radii:
            out[...] = 0
            t0 = time.perf_counter()
            kernel(padded[r], r, out)
            times.append(time.perf_counter() - t0)
        return times

    one_round()  # compile and warm caches
    rounds = []
    while len(rounds) < repeats or sum(map(sum, rounds)) < min_time:
        rounds.append(one_round())
    table = np.median(np.array(rounds), axis=0)
    rows = tuple(BenchRow(r, float(t), float(t) / size ** 3) for r, t in zip(radii, table))
    exps = tuple(fit_exponent(radii, t) for t in rounds) if len(radii) >= 2 else ()
    return BenchResult(mode, size, k, rows, exps)
