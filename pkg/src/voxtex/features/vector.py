"""The concatenated per-voxel feature vector and its batch extractors."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..volume import ScalePyramid, Slab, make_slab, map_coord
from . import histogram as H
from . import lbp as L
from .histogram import HistogramSpec
from .lbp import LbpSpec


@dataclass(frozen=True)
class FeatureSpec:
    hist1: HistogramSpec
    hist2: HistogramSpec
    lbp: LbpSpec

    def __post_init__(self):
        if self.hist1.scale != 0:
            raise ValueError("the short-range histogram is always taken at scale 0")

    @property
    def length(self) -> int:
        return 1 + self.hist1.bins + self.hist2.bins + 3 * L.N_CODES

    @property
    def max_scale(self) -> int:
        return max(self.hist2.scale, self.lbp.scale)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(HistogramSpec(**d["hist1"]), HistogramSpec(**d["hist2"]), LbpSpec(**d["lbp"]))

    @classmethod
    def make(cls, h1_radius, h1_bins, h2_scale, h2_radius, h2_bins, lbp_scale, lbp_radius):
        return cls(HistogramSpec(0, h1_radius, h1_bins),
                   HistogramSpec(h2_scale, h2_radius, h2_bins),
                   LbpSpec(lbp_scale, lbp_radius))


def feature_names(spec: FeatureSpec) -> list[str]:
    names = ["intensity"]
    names += [f"hist1_b{i}" for i in range(spec.hist1.bins)]
    names += [f"hist2_b{i}" for i in range(spec.hist2.bins)]
    names += [f"lbp_{p}_c{i}" for p in L.PLANE_ORDER for i in range(L.N_CODES)]
    return names


def _scale_extent(radius: int, scale: int) -> int:
    """Scale-0 slices needed beyond the owned range to read ``radius`` level slices."""
    return radius * 2 ** scale + 2 ** scale - 1


def required_margin(spec: FeatureSpec) -> int:
    return max(_scale_extent(spec.hist1.radius, 0),
               _scale_extent(spec.hist2.radius, spec.hist2.scale),
               _scale_extent(spec.lbp.radius + 1, spec.lbp.scale))


def _normalised_intensity(values: np.ndarray, volume_range) -> np.ndarray:
    lo, hi = volume_range
    if hi == lo:
        return np.zeros(values.shape, dtype=np.float64)
    return (values.astype(np.float64) - lo) / (hi - lo)


def assemble_feature_vector(pyramid: ScalePyramid, coord: Sequence[int],
                            spec: FeatureSpec) -> np.ndarray:
    """Feature vector of one scale-0 voxel, computed by direct enumeration."""
    base = pyramid[0]
    rng = base.intensity_range
    h1, h2 = spec.hist1, spec.hist2
    centre = _normalised_intensity(np.array([base.value(coord)]), rng)
    hist1 = H.neighbourhood_histogram_naive(base, coord, h1.radius, h1.bins, rng).normalize()
    hist2 = H.neighbourhood_histogram_naive(pyramid[h2.scale], map_coord(coord, h2.scale),
                                            h2.radius, h2.bins, rng).normalize()
    return np.concatenate([centre, hist1.counts, hist2.counts,
                           L.lbp_top_feature(pyramid, coord, spec.lbp)])


def extract_features_at(pyramid: ScalePyramid, coords: np.ndarray,
                        spec: FeatureSpec) -> np.ndarray:
    """Feature rows for scattered scale-0 coordinates ``(n, 3)`` in (x, y, z) order.

    Costs ``O(r^3)`` per coordinate; meant for sampled training sets, not for
    whole slabs.
    """
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    base = pyramid[0]
    rng = base.intensity_range
    h1, h2, lb = spec.hist1, spec.hist2, spec.lbp
    out = np.empty((len(coords), spec.length), dtype=np.float64)
    data = np.asarray(base.data)
    out[:, 0] = _normalised_intensity(data[coords[:, 2], coords[:, 1], coords[:, 0]], rng)
    col = 1
    for hs in (h1, h2):
        counts = H.sparse_histograms(pyramid[hs.scale], coords >> hs.scale, hs.radius, hs.bins, rng)
        out[:, col:col + hs.bins] = counts / float((2 * hs.radius + 1) ** 3)
        col += hs.bins
    counts = L.sparse_lbp_histograms(pyramid[lb.scale], coords >> lb.scale, lb.radius)
    out[:, col:] = counts / float((2 * lb.radius + 1) ** 2)
    return out


def _level_slab(pyramid: ScalePyramid, slab: Slab, scale: int, context: int) -> Slab:
    """The level-``scale`` slab lying under a scale-0 ``slab``."""
    return make_slab(pyramid[scale], slab.z_lo >> scale, slab.z_hi >> scale, context)


def extract_features_slab(pyramid: ScalePyramid, slab: Slab, spec: FeatureSpec,
                          mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Feature rows for the voxels owned by a scale-0 ``slab``.

    ``mask`` (shape ``(n_owned, ny, nx)``, boolean) selects voxels; rows come
    in z, y, x raster order. Returns ``(features, coords)`` with coords in
    (x, y, z) order.
    """
    base = pyramid[0]
    if slab.volume is not base:
        raise ValueError("slab must partition the scale-0 volume of the pyramid")
    need = required_margin(spec)
    if not slab.covers(slab.z_lo - need, slab.z_hi + need):
        raise ValueError(
            f"slab margin ({slab.margin_lo},{slab.margin_hi}) is below the {need} slices "
            f"this feature spec needs")
    rng = base.intensity_range
    ny, nx = base.data.shape[1:]
    if mask is None:
        mask = np.ones((slab.n_owned, ny, nx), dtype=bool)
    elif mask.shape != (slab.n_owned, ny, nx):
        raise ValueError(f"mask shape {mask.shape} does not match slab {(slab.n_owned, ny, nx)}")
    zz, yy, xx = np.nonzero(mask)
    zz = zz + slab.z_lo
    coords = np.stack([xx, yy, zz], axis=1).astype(np.int64)
    out = np.empty((len(coords), spec.length), dtype=np.float64)

    block = slab.read()
    own = block[slab.margin_lo:slab.margin_lo + slab.n_owned]
    out[:, 0] = _normalised_intensity(own[zz - slab.z_lo, yy, xx], rng)
    col = 1
    for hs in (spec.hist1, spec.hist2):
        s = hs.scale
        lslab = _level_slab(pyramid, slab, s, hs.radius)
        counts = H.slab_histograms_incremental(pyramid[s], lslab, hs.radius, hs.bins, rng)
        zl = (zz >> s) - lslab.z_lo
        out[:, col:col + hs.bins] = counts[zl, yy >> s, xx >> s] / float((2 * hs.radius + 1) ** 3)
        col += hs.bins
        del counts
    lb = spec.lbp
    s = lb.scale
    lslab = _level_slab(pyramid, slab, s, lb.radius + 1)
    lblock = lslab.gather(lslab.z_lo - lb.radius - 1, lslab.z_hi + lb.radius + 1)
    zl = (zz >> s) - lslab.z_lo
    pop = float((2 * lb.radius + 1) ** 2)
    for plane in L.PLANE_ORDER:
        counts = L.slab_code_histograms(pyramid[s], lblock, lslab.z_lo, lslab.z_hi,
                                        lb.radius, plane)
        out[:, col:col + L.N_CODES] = counts[zl, yy >> s, xx >> s] / pop
        col += L.N_CODES
        del counts
    return out, coords


def feature_matrix_bytes(n_voxels: int, spec: FeatureSpec) -> int:
    return n_voxels * spec.length * np.dtype(np.float64).itemsize


def dump_features_csv(path, features: np.ndarray, coords: np.ndarray, spec: FeatureSpec) -> None:
    """Debug dump: one row per voxel with x, y, z and every named feature column."""
    header = ",".join(["x", "y", "z"] + feature_names(spec))
    table = np.concatenate([coords.astype(np.float64), features], axis=1)
    fmt = ["%d"] * 3 + ["%.10g"] * features.shape[1]
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt=fmt)
