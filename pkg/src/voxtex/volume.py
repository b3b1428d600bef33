"""Volume containers, raw file I/O, Gaussian scale pyramid and slab partitioning.

Arrays are held as ``(nz, ny, nx)`` so that x varies fastest in memory, which
matches the on-disk layout; public coordinates are always ``(x, y, z)``.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

U16_MAX = 65535
RAW_DTYPES = {"u16le": np.dtype("<u2"), "u8": np.dtype("u1")}
# Slices read per chunk when scanning a file-backed volume.
_SCAN_SLICES = 16


class VolumeFormatError(ValueError):
    """Metadata is malformed or inconsistent."""


class VolumeSizeError(VolumeFormatError):
    """Raw file size disagrees with the metadata dims."""


def _intensity_range(data: np.ndarray) -> tuple[int, int]:
    lo, hi = U16_MAX, 0
    for z0 in range(0, data.shape[0], _SCAN_SLICES):
        chunk = np.asarray(data[z0:z0 + _SCAN_SLICES])
        lo = min(lo, int(chunk.min()))
        hi = max(hi, int(chunk.max()))
    return lo, hi


@dataclass(frozen=True, eq=False)
class Volume:
    """Dense 3D grid of unsigned 16-bit intensities.

    ``data`` may be an in-memory array or a read-only memmap; use
    :meth:`read_slices` for slab access that does not need full residency.
    """

    data: np.ndarray
    intensity_min: int = -1
    intensity_max: int = -1

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {self.data.shape}")
        if self.data.dtype != np.uint16:
            raise TypeError(f"volume data must be uint16, got {self.data.dtype}")
        if min(self.data.shape) < 1:
            raise ValueError("volume dims must be positive")
        if self.intensity_min < 0 or self.intensity_max < 0:
            lo, hi = _intensity_range(self.data)
            object.__setattr__(self, "intensity_min", lo)
            object.__setattr__(self, "intensity_max", hi)
        if self.intensity_min > self.intensity_max:
            raise ValueError("intensity_min exceeds intensity_max")

    @classmethod
    def from_array(cls, array, order: str = "zyx") -> "Volume":
        """Build a volume from any integer array, widening narrow types.

        ``order="xyz"`` accepts arrays indexed ``[x, y, z]``.
        """
        a = np.asarray(array)
        if order == "xyz":
            a = a.transpose(2, 1, 0)
        elif order != "zyx":
            raise ValueError(f"unknown axis order {order!r}")
        if a.dtype.kind == "f":
            raise TypeError("floating point input must be quantised by the caller")
        if a.size and (a.min() < 0 or a.max() > U16_MAX):
            raise ValueError("intensities outside the unsigned 16-bit range")
        return cls(np.ascontiguousarray(a, dtype=np.uint16))

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return nx, ny, nz

    @property
    def nz(self) -> int:
        return self.data.shape[0]

    @property
    def intensity_range(self) -> tuple[int, int]:
        return self.intensity_min, self.intensity_max

    def read_slices(self, z_lo: int, z_hi: int) -> np.ndarray:
        """Return slices ``z_lo..z_hi`` inclusive as an in-memory array."""
        return np.array(self.data[z_lo:z_hi + 1])

    def gather_slices(self, z_lo: int, z_hi: int) -> np.ndarray:
        """Slices ``z_lo..z_hi`` with out-of-range indices clamped to the edge."""
        idx = np.clip(np.arange(z_lo, z_hi + 1), 0, self.nz - 1)
        base = int(idx[0])
        block = self.read_slices(base, int(idx[-1]))
        return block[idx - base]

    def value(self, coord: Sequence[int]) -> int:
        x, y, z = coord
        return int(self.data[z, y, x])


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """One 8-bit label id per voxel; ``label_names[0]`` is the background."""

    data: np.ndarray
    label_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "label_names", tuple(self.label_names))
        if self.data.ndim != 3 or self.data.dtype != np.uint8:
            raise ValueError("label data must be a 3D uint8 array")
        if len(self.label_names) < 2:
            raise ValueError("at least two labels (including background) are required")
        top = max(int(np.asarray(self.data[z0:z0 + _SCAN_SLICES]).max())
                  for z0 in range(0, self.data.shape[0], _SCAN_SLICES))
        if top >= len(self.label_names):
            raise ValueError(f"label id {top} has no name ({len(self.label_names)} names)")

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return nx, ny, nz

    @property
    def n_labels(self) -> int:
        return len(self.label_names)


def _resolve_meta_path(path) -> Path:
    p = Path(path)
    return p if p.suffix == ".json" else p.with_suffix(".json")


def _read_meta(path) -> tuple[Path, dict, Path]:
    meta_path = _resolve_meta_path(path)
    if not meta_path.is_file():
        raise FileNotFoundError(f"metadata file not found: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
        dims = [int(d) for d in meta["dims"]]
        dtype = meta["dtype"]
        raw_name = meta["raw"]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise VolumeFormatError(f"malformed metadata in {meta_path}: {exc}") from exc
    if len(dims) != 3 or min(dims) < 1:
        raise VolumeFormatError(f"dims must be three positive integers, got {dims}")
    if dtype not in RAW_DTYPES:
        raise VolumeFormatError(f"unsupported dtype {dtype!r}")
    raw_path = meta_path.parent / raw_name
    if not raw_path.is_file():
        raise FileNotFoundError(f"raw file not found: {raw_path}")
    nx, ny, nz = dims
    expected = nx * ny * nz * RAW_DTYPES[dtype].itemsize
    actual = raw_path.stat().st_size
    if actual != expected:
        raise VolumeSizeError(
            f"{raw_path} holds {actual} bytes, dims {dims} with {dtype} need {expected}")
    meta["dims"] = dims
    return meta_path, meta, raw_path


def _open_raw(raw_path: Path, dtype: str, dims, mmap: bool) -> np.ndarray:
    nx, ny, nz = dims
    dt = RAW_DTYPES[dtype]
    if mmap:
        return np.memmap(raw_path, dtype=dt, mode="r", shape=(nz, ny, nx))
    return np.fromfile(raw_path, dtype=dt).reshape(nz, ny, nx)


def load_volume(path, mmap: bool = True) -> Volume:
    """Load a ``<name>.json`` / ``<name>.raw`` 16-bit volume pair.

    With ``mmap=True`` (the default) the raw data stays on disk and slabs are
    paged in on demand.
    """
    _, meta, raw_path = _read_meta(path)
    if meta["dtype"] != "u16le":
        raise VolumeFormatError(f"expected dtype u16le for an intensity volume, got {meta['dtype']}")
    data = _open_raw(raw_path, "u16le", meta["dims"], mmap)
    if data.dtype != np.uint16:  # big-endian host
        data = data.astype(np.uint16)
    return Volume(data)


def load_labels(path, mmap: bool = False) -> LabelVolume:
    _, meta, raw_path = _read_meta(path)
    if meta["dtype"] != "u8":
        raise VolumeFormatError(f"expected dtype u8 for a label volume, got {meta['dtype']}")
    names = meta.get("label_names")
    if not names:
        raise VolumeFormatError("label volume metadata lacks label_names")
    return LabelVolume(_open_raw(raw_path, "u8", meta["dims"], mmap), tuple(names))


def _write_pair(path, data: np.ndarray, dtype: str, extra: dict) -> Path:
    meta_path = _resolve_meta_path(path)
    raw_path = meta_path.with_suffix(".raw")
    nz, ny, nx = data.shape
    meta = {"dims": [nx, ny, nz], "dtype": dtype, "raw": raw_path.name, **extra}
    dt = RAW_DTYPES[dtype]
    with open(raw_path, "wb") as fh:
        for z0 in range(0, nz, _SCAN_SLICES):
            fh.write(np.ascontiguousarray(data[z0:z0 + _SCAN_SLICES], dtype=dt).tobytes())
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return meta_path


def save_volume(volume: Volume, path, extra: dict | None = None) -> Path:
    """Write ``volume`` as a metadata + raw pair; returns the metadata path.

    ``extra`` adds provenance keys (such as a seed) to the metadata.
    """
    return _write_pair(path, volume.data, "u16le", dict(extra or {}))


def save_labels(labels: LabelVolume, path, extra: dict | None = None) -> Path:
    return _write_pair(path, labels.data, "u8",
                       {"label_names": list(labels.label_names), **(extra or {})})


def load_slice_stack(directory) -> Volume:
    """Read a directory of equally sized 2D grayscale images as a volume.

    Files are taken in lexicographic order as ascending z. 8-bit images are
    widened to the 16-bit intensity range by value, not rescaled.
    """
    from PIL import Image

    files = sorted(f for f in os.listdir(directory) if not f.startswith("."))
    if not files:
        raise FileNotFoundError(f"no images in {directory}")
    slices = []
    for name in files:
        with Image.open(os.path.join(directory, name)) as im:
            a = np.asarray(im)
        if a.ndim != 2:
            raise VolumeFormatError(f"{name} is not a single-channel image")
        if slices and a.shape != slices[0].shape:
            raise VolumeFormatError(f"{name} has shape {a.shape}, expected {slices[0].shape}")
        slices.append(a)
    return Volume.from_array(np.stack(slices))


# --- scale pyramid ---------------------------------------------------------

# Each step blurs the previous level by one of its own voxels, which is
# sigma = 2**(s-1) in scale-0 voxels for level s.
STEP_SIGMA = 1.0
TRUNCATE = 3.0


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    radius = math.ceil(TRUNCATE * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


@dataclass(frozen=True, eq=False)
class ScalePyramid:
    levels: tuple[Volume, ...]
    blur_sigma_policy: tuple[float, ...] = field(default=())

    @property
    def max_scale(self) -> int:
        return len(self.levels) - 1

    @property
    def base(self) -> Volume:
        return self.levels[0]

    def __getitem__(self, s: int) -> Volume:
        return self.levels[s]


def _blur_decimate(src: Volume) -> np.ndarray:
    """Blur ``src`` by STEP_SIGMA (replicate edges) and keep even indices."""
    weights = gaussian_kernel_1d(STEP_SIGMA)
    radius = len(weights) // 2
    nz = src.nz
    out_nz = (nz + 1) // 2
    ny, nx = src.data.shape[1:]
    out = np.empty((out_nz, (ny + 1) // 2, (nx + 1) // 2), dtype=np.uint16)
    step = _SCAN_SLICES
    for oz0 in range(0, out_nz, step):
        oz1 = min(out_nz, oz0 + step) - 1
        z_lo, z_hi = 2 * oz0 - radius, 2 * oz1 + radius
        block = src.gather_slices(z_lo, z_hi).astype(np.float64)
        for axis in (0, 1, 2):
            block = ndimage.correlate1d(block, weights, axis=axis, mode="nearest")
        kept = block[radius:radius + 2 * (oz1 - oz0) + 1:2, ::2, ::2]
        out[oz0:oz1 + 1] = np.clip(np.rint(kept), 0, U16_MAX).astype(np.uint16)
    return out


def sigma_policy(max_scale: int) -> tuple[float, ...]:
    """Blur sigma behind each level, in scale-0 voxels (0 for the original)."""
    return tuple([0.0] + [STEP_SIGMA * 2.0 ** (s - 1) for s in range(1, max_scale + 1)])


def build_pyramid(volume: Volume, max_scale: int) -> ScalePyramid:
    """Iterated blur-and-halve pyramid; ``levels[0]`` is ``volume`` itself.

    The z axis is processed in chunks with a clamped margin, so level 0 can
    stay on disk.
    """
    if max_scale < 0:
        raise ValueError("max_scale must be non-negative")
    levels = [volume]
    for _ in range(max_scale):
        levels.append(Volume(_blur_decimate(levels[-1])))
    return ScalePyramid(tuple(levels), sigma_policy(max_scale))


def map_coord(coord: Sequence[int], scale: int) -> tuple[int, int, int]:
    x, y, z = coord
    return x >> scale, y >> scale, z >> scale


# --- slabs -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Slab:
    """Owned z range ``[z_lo, z_hi]`` plus up to ``margin`` context slices per side."""

    volume: Volume
    z_lo: int
    z_hi: int
    margin: int
    margin_lo: int
    margin_hi: int

    @property
    def n_owned(self) -> int:
        return self.z_hi - self.z_lo + 1

    @property
    def read_lo(self) -> int:
        return self.z_lo - self.margin_lo

    @property
    def read_hi(self) -> int:
        return self.z_hi + self.margin_hi

    def covers(self, z_lo: int, z_hi: int) -> bool:
        """Whether the clamped range ``[z_lo, z_hi]`` is readable from this slab."""
        nz = self.volume.nz
        return self.read_lo <= max(z_lo, 0) and min(z_hi, nz - 1) <= self.read_hi

    def read(self) -> np.ndarray:
        return self.volume.read_slices(self.read_lo, self.read_hi)

    def gather(self, z_lo: int, z_hi: int) -> np.ndarray:
        """Slices ``z_lo..z_hi`` (global, clamped) using only this slab's data."""
        if not self.covers(z_lo, z_hi):
            raise ValueError(
                f"slab [{self.z_lo},{self.z_hi}] margin ({self.margin_lo},{self.margin_hi}) "
                f"cannot supply slices {z_lo}..{z_hi}")
        block = self.read()
        idx = np.clip(np.arange(z_lo, z_hi + 1), 0, self.volume.nz - 1) - self.read_lo
        return block[idx]


def make_slab(volume: Volume, z_lo: int, z_hi: int, margin: int) -> Slab:
    nz = volume.nz
    if not 0 <= z_lo <= z_hi < nz:
        raise ValueError(f"invalid slab range [{z_lo},{z_hi}] for nz={nz}")
    return Slab(volume, z_lo, z_hi, margin, min(margin, z_lo), min(margin, nz - 1 - z_hi))


def partition_slabs(volume: Volume, target_slices: int, margin: int) -> list[Slab]:
    if target_slices < 1:
        raise ValueError("target_slices must be at least 1")
    if margin < 0:
        raise ValueError("margin must be non-negative")
    nz = volume.nz
    return [make_slab(volume, z0, min(z0 + target_slices, nz) - 1, margin)
            for z0 in range(0, nz, target_slices)]
