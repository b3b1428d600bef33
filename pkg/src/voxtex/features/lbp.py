"""Uniform rotation-invariant LBP codes on three orthogonal planes.

Codes come from the 8-neighbour ring in a plane, thresholded as
``neighbour >= centre``; rings with at most two circular 0/1 transitions
map to their popcount, everything else to 9.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..volume import Volume
from . import _kernels
from .histogram import Histogram

N_CODES = 10
# Plane name -> (first in-plane axis, second in-plane axis), 0=x, 1=y, 2=z.
PLANES = {"xy": (0, 1), "yz": (1, 2), "xz": (0, 2)}
PLANE_ORDER = ("xy", "yz", "xz")
RING = _kernels.RING


@dataclass(frozen=True)
class LbpSpec:
    scale: int
    radius: int

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("radius must be at least 1")
        if self.scale < 0:
            raise ValueError("scale must be non-negative")


def transitions(pattern: int) -> int:
    rotated = ((pattern >> 1) | ((pattern & 1) << 7)) & 0xFF
    return bin(pattern ^ rotated).count("1")


def pattern_code(pattern: int) -> int:
    if transitions(pattern) <= 2:
        return bin(pattern).count("1")
    return 9


CODE_TABLE = np.array([pattern_code(p) for p in range(256)], dtype=np.uint8)


def ring_pattern(patch) -> int:
    """8-bit ring pattern of a 3x3 patch indexed ``[b + 1, a + 1]``."""
    p = np.asarray(patch)
    if p.shape != (3, 3):
        raise ValueError("patch must be 3x3")
    centre = p[1, 1]
    pattern = 0
    for j, (da, db) in enumerate(RING):
        if p[1 + db, 1 + da] >= centre:
            pattern |= 1 << j
    return pattern


def lbp_code(patch) -> int:
    return int(CODE_TABLE[ring_pattern(patch)])


def plane_codes(block: np.ndarray, plane: str) -> np.ndarray:
    """Code of every voxel of a ``(z, y, x)`` block, clamping at the block edges."""
    ax_a, ax_b = PLANES[plane]
    # array axis for coordinate axis c is 2 - c
    arr_a, arr_b = 2 - ax_a, 2 - ax_b
    pad = [(0, 0)] * 3
    pad[arr_a] = (1, 1)
    pad[arr_b] = (1, 1)
    p = np.pad(block, pad, mode="edge")
    shape = block.shape
    centre = p[tuple(slice(1, 1 + n) if i in (arr_a, arr_b) else slice(None)
                     for i, n in enumerate(shape))]
    pattern = np.zeros(shape, dtype=np.uint8)
    for j, (da, db) in enumerate(RING):
        sl = []
        for i, n in enumerate(shape):
            if i == arr_a:
                sl.append(slice(1 + da, 1 + da + n))
            elif i == arr_b:
                sl.append(slice(1 + db, 1 + db + n))
            else:
                sl.append(slice(None))
        pattern |= (p[tuple(sl)] >= centre).astype(np.uint8) << j
    return CODE_TABLE[pattern]


def lbp_plane_histogram(level: Volume, coord: Sequence[int], plane: str, r: int) -> Histogram:
    """Normalised 10-bin code histogram over the clamped in-plane ``(2r+1)^2`` window."""
    ax_a, ax_b = PLANES[plane]
    dims = level.dims
    data = np.asarray(level.data)
    counts = np.zeros(N_CODES, dtype=np.int64)
    for da in range(-r, r + 1):
        for db in range(-r, r + 1):
            q = list(coord)
            q[ax_a] = min(max(q[ax_a] + da, 0), dims[ax_a] - 1)
            q[ax_b] = min(max(q[ax_b] + db, 0), dims[ax_b] - 1)
            patch = np.empty((3, 3), dtype=np.int64)
            for pb in (-1, 0, 1):
                for pa in (-1, 0, 1):
                    n = list(q)
                    n[ax_a] = min(max(n[ax_a] + pa, 0), dims[ax_a] - 1)
                    n[ax_b] = min(max(n[ax_b] + pb, 0), dims[ax_b] - 1)
                    patch[pb + 1, pa + 1] = data[n[2], n[1], n[0]]
            counts[lbp_code(patch)] += 1
    return Histogram(counts).normalize()


def lbp_top_feature(pyramid, coord_at_scale0: Sequence[int], spec: LbpSpec) -> np.ndarray:
    from ..volume import map_coord

    level = pyramid[spec.scale]
    c = map_coord(coord_at_scale0, spec.scale)
    return np.concatenate([lbp_plane_histogram(level, c, plane, spec.radius).counts
                           for plane in PLANE_ORDER])


def slab_code_histograms(level: Volume, block: np.ndarray, z_lo: int, z_hi: int, r: int,
                         plane: str) -> np.ndarray:
    """Raw code counts for level slices ``z_lo..z_hi`` (all x, y).

    ``block`` holds level slices ``z_lo - r - 1 .. z_hi + r + 1`` gathered with
    clamping. Returns int32 of shape ``(n, ny, nx, 10)``.
    """
    nz = level.nz
    n_own = z_hi - z_lo + 1
    ny, nx = block.shape[1:]
    g_lo = z_lo - r - 1
    if plane == "xy":
        codes = plane_codes(block[r + 1:r + 1 + n_own], "xy")
        padded = np.pad(codes, ((0, 0), (r, r), (r, r)), mode="edge")
        out = np.zeros((n_own, ny, nx, N_CODES), dtype=np.int32)
        _kernels.incremental_window_hist2d(padded, r, out)
        return out
    # Codes are valid for distinct clamped slices only; recompute the window
    # rows from those so duplicated edge slices carry the edge code.
    c_lo, c_hi = max(z_lo - r, 0), min(z_hi + r, nz - 1)
    src_idx = np.clip(np.arange(c_lo - 1, c_hi + 2), 0, nz - 1) - g_lo
    codes_all = plane_codes(block[src_idx], plane)[1:-1]  # slices c_lo..c_hi
    win = np.clip(np.arange(z_lo - r, z_hi + r + 1), 0, nz - 1) - c_lo
    codes = codes_all[win]
    pad_xy = ((0, 0), (r, r), (0, 0)) if plane == "yz" else ((0, 0), (0, 0), (r, r))
    codes = np.pad(codes, pad_xy, mode="edge")
    if plane == "yz":
        arr = np.ascontiguousarray(codes.transpose(2, 1, 0))  # (x, y, z)
        out = np.zeros((nx, ny, n_own, N_CODES), dtype=np.int32)
        _kernels.incremental_window_hist2d(arr, r, out)
        return out.transpose(2, 1, 0, 3)
    arr = np.ascontiguousarray(codes.transpose(1, 2, 0))  # (y, x, z)
    out = np.zeros((ny, nx, n_own, N_CODES), dtype=np.int32)
    _kernels.incremental_window_hist2d(arr, r, out)
    return out.transpose(2, 0, 1, 3)


def sparse_lbp_histograms(level: Volume, coords: np.ndarray, r: int) -> np.ndarray:
    """Raw counts for the three planes at scattered level coords, shape ``(n, 30)``."""
    coords = np.ascontiguousarray(coords, dtype=np.int64).reshape(-1, 3)
    data = np.asarray(level.data)
    parts = []
    for plane in PLANE_ORDER:
        ax_a, ax_b = PLANES[plane]
        out = np.zeros((len(coords), N_CODES), dtype=np.int64)
        _kernels.sparse_lbp_plane(data, coords, r, ax_a, ax_b, CODE_TABLE, out)
        parts.append(out)
    return np.concatenate(parts, axis=1)
