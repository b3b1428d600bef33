"""Windowed intensity histograms: a per-voxel enumeration and the slab engine."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..volume import Slab, Volume
from . import _kernels

ALLOWED_BINS = (8, 16, 32)


@dataclass(frozen=True)
class HistogramSpec:
    scale: int
    radius: int
    bins: int

    def __post_init__(self):
        if self.bins not in ALLOWED_BINS:
            raise ValueError(f"bins must be one of {ALLOWED_BINS}, got {self.bins}")
        if self.radius < 1:
            raise ValueError("radius must be at least 1")
        if self.scale < 0:
            raise ValueError("scale must be non-negative")


@dataclass(frozen=True, eq=False)
class Histogram:
    counts: np.ndarray
    normalized: bool = False

    @property
    def k(self) -> int:
        return len(self.counts)

    def normalize(self) -> "Histogram":
        if self.normalized:
            return self
        return Histogram(self.counts / self.counts.sum(), True)

    def __eq__(self, other):
        return (isinstance(other, Histogram) and self.normalized == other.normalized
                and np.array_equal(self.counts, other.counts))


def bin_of(value: int, volume_range: tuple[int, int], k: int) -> int:
    """Linear bin of ``value`` among ``k`` bins spanning ``volume_range`` inclusive."""
    lo, hi = volume_range
    if not lo <= value <= hi:
        raise ValueError(f"value {value} outside intensity range [{lo}, {hi}]")
    return (k * (int(value) - lo)) // (hi - lo + 1)


def bin_array(data: np.ndarray, volume_range: tuple[int, int], k: int) -> np.ndarray:
    lo, hi = volume_range
    b = (k * (data.astype(np.int64) - lo)) // (hi - lo + 1)
    return b.astype(np.uint8)


def neighbourhood_histogram_naive(level: Volume, coord: Sequence[int], r: int, k: int,
                                  volume_range: tuple[int, int] | None = None) -> Histogram:
    """Raw counts over the clamped ``(2r+1)^3`` cube centred at ``coord``."""
    rng = volume_range or level.intensity_range
    nx, ny, nz = level.dims
    x, y, z = coord
    zi = np.clip(np.arange(z - r, z + r + 1), 0, nz - 1)
    yi = np.clip(np.arange(y - r, y + r + 1), 0, ny - 1)
    xi = np.clip(np.arange(x - r, x + r + 1), 0, nx - 1)
    block = np.asarray(level.data)[np.ix_(zi, yi, xi)]
    return Histogram(np.bincount(bin_array(block, rng, k).ravel(), minlength=k).astype(np.int64))


def _padded_bins(block: np.ndarray, r: int, volume_range, k: int) -> np.ndarray:
    """Bin ``block`` and edge-pad x and y by ``r`` (z is padded by the caller)."""
    b = bin_array(block, volume_range, k)
    return np.pad(b, ((0, 0), (r, r), (r, r)), mode="edge")


def slab_histograms_incremental(level: Volume, slab: Slab, r: int, k: int,
                                volume_range: tuple[int, int] | None = None) -> np.ndarray:
    """Raw window counts for every voxel owned by ``slab``.

    Returns an int32 array of shape ``(n_owned, ny, nx, k)``. Reads only the
    slab's slices; raises ``ValueError`` if its margin cannot cover ``r``.
    """
    if slab.volume is not level:
        raise ValueError("slab does not belong to this level")
    rng = volume_range or level.intensity_range
    ny, nx = level.data.shape[1:]
    block = slab.gather(slab.z_lo - r, slab.z_hi + r)
    bins = _padded_bins(block, r, rng, k)
    out = np.zeros((slab.n_owned, ny, nx, k), dtype=np.int32)
    _kernels.incremental_window_hist3d(bins, r, out)
    return out


def volume_histograms_naive(level: Volume, r: int, k: int,
                            volume_range: tuple[int, int] | None = None) -> np.ndarray:
    """Whole-volume counts by full cube enumeration per voxel (benchmark reference path)."""
    rng = volume_range or level.intensity_range
    bins = np.pad(bin_array(np.asarray(level.data), rng, k), r, mode="edge")
    nx, ny, nz = level.dims
    out = np.zeros((nz, ny, nx, k), dtype=np.int32)
    _kernels.naive_window_hist3d(bins, r, out)
    return out


def sparse_histograms(level: Volume, coords: np.ndarray, r: int, k: int,
                      volume_range: tuple[int, int] | None = None) -> np.ndarray:
    """Raw counts at scattered level coordinates, shape ``(len(coords), k)``."""
    lo, hi = volume_range or level.intensity_range
    coords = np.ascontiguousarray(coords, dtype=np.int64).reshape(-1, 3)
    out = np.zeros((len(coords), k), dtype=np.int64)
    _kernels.sparse_hist3d(np.asarray(level.data), coords, r, k, lo, hi, out)
    return out
