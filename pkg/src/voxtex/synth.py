"""Synthetic textured volumes with known labels, for desk-scale end-to-end runs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .volume import U16_MAX, LabelVolume, Volume

TEXTURES = ("constant", "noise", "checkerboard", "ramp")
SHAPES = ("box", "sphere")


@dataclass(frozen=True)
class Texture:
    kind: str
    value: float = 0.0      # constant
    mean: float = 0.0       # noise
    sigma: float = 0.0
    period: int = 4         # checkerboard, full period in voxels
    low: float = 0.0
    high: float = 0.0
    axis: str = "z"         # ramp runs low -> high along this axis

    def __post_init__(self):
        if self.kind not in TEXTURES:
            raise ValueError(f"unknown texture {self.kind!r}; expected one of {TEXTURES}")
        if self.kind == "checkerboard" and (self.period < 2 or self.period % 2):
            raise ValueError("checkerboard period must be an even number >= 2")


@dataclass(frozen=True)
class Region:
    name: str
    texture: Texture
    shape: str = "box"
    lo: tuple = (0, 0, 0)       # box, inclusive (x, y, z)
    hi: tuple = (0, 0, 0)       # box, exclusive
    center: tuple = (0, 0, 0)   # sphere
    radius: float = 0.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown region shape {self.shape!r}")

    def mask(self, dims) -> np.ndarray:
        nx, ny, nz = dims
        z, y, x = np.ogrid[:nz, :ny, :nx]
        if self.shape == "box":
            (x0, y0, z0), (x1, y1, z1) = self.lo, self.hi
            return (x >= x0) & (x < x1) & (y >= y0) & (y < y1) & (z >= z0) & (z < z1)
        cx, cy, cz = self.center
        return (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2 <= self.radius ** 2


@dataclass(frozen=True)
class SyntheticRecipe:
    """Later regions paint over earlier ones; unpainted voxels are background."""

    dims: tuple
    regions: tuple
    background: Texture = field(default_factory=lambda: Texture("constant", value=0))
    seed: int = 0
    min_fraction: float = 0.01

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticRecipe":
        regions = []
        for r in d["regions"]:
            r = dict(r)
            tex = Texture(**r.pop("texture"))
            for key in ("lo", "hi", "center"):
                if key in r:
                    r[key] = tuple(r[key])
            regions.append(Region(texture=tex, **r))
        bg = Texture(**d["background"]) if "background" in d else Texture("constant", value=0)
        return cls(tuple(d["dims"]), tuple(regions), bg, int(d.get("seed", 0)),
                   float(d.get("min_fraction", 0.01)))

    @property
    def label_names(self) -> tuple[str, ...]:
        return ("background",) + tuple(r.name for r in self.regions)


def _paint(tex: Texture, dims, rng: np.random.Generator) -> np.ndarray:
    nx, ny, nz = dims
    shape = (nz, ny, nx)
    if tex.kind == "constant":
        return np.full(shape, tex.value, dtype=np.float64)
    if tex.kind == "noise":
        return rng.normal(tex.mean, tex.sigma, size=shape)
    if tex.kind == "checkerboard":
        half = tex.period // 2
        z, y, x = np.indices(shape)
        odd = ((x // half) + (y // half) + (z // half)) % 2 == 1
        return np.where(odd, tex.high, tex.low).astype(np.float64)
    axis = {"x": 2, "y": 1, "z": 0}[tex.axis]
    n = shape[axis]
    ramp = np.linspace(tex.low, tex.high, n)
    view = [1, 1, 1]
    view[axis] = n
    return np.broadcast_to(ramp.reshape(view), shape).astype(np.float64)


def generate(recipe: SyntheticRecipe) -> tuple[Volume, LabelVolume]:
    dims = tuple(int(d) for d in recipe.dims)
    rng = np.random.default_rng(recipe.seed)
    nx, ny, nz = dims
    values = _paint(recipe.background, dims, rng)
    labels = np.zeros((nz, ny, nx), dtype=np.uint8)
    for i, region in enumerate(recipe.regions, start=1):
        m = region.mask(dims)
        m = np.broadcast_to(m, labels.shape)
        values = np.where(m, _paint(region.texture, dims, rng), values)
        labels[m] = i
    total = labels.size
    for i, name in enumerate(recipe.label_names):
        frac = np.count_nonzero(labels == i) / total
        if frac < recipe.min_fraction:
            raise ValueError(f"label {name!r} covers {frac:.2%} of the volume, "
                             f"below the {recipe.min_fraction:.0%} minimum")
    data = np.clip(np.rint(values), 0, U16_MAX).astype(np.uint16)
    return Volume(data), LabelVolume(labels, recipe.label_names)


def three_texture_recipe(n: int = 128, seed: int = 0) -> SyntheticRecipe:
    """Constant-bright, Gaussian-noise and period-4 checkerboard regions in noisy background."""
    q = n // 16
    return SyntheticRecipe(
        dims=(n, n, n),
        background=Texture("noise", mean=9000, sigma=1500),
        regions=(
            Region("bright", Texture("constant", value=42000), "box",
                   lo=(2 * q, 2 * q, q), hi=(7 * q, 7 * q, 15 * q)),
            Region("noisy", Texture("noise", mean=25000, sigma=5000), "sphere",
                   center=(11.5 * q, 4.5 * q, 8 * q), radius=3.5 * q),
            Region("checker", Texture("checkerboard", period=4, low=17000, high=33000), "box",
                   lo=(3 * q, 9 * q, 2 * q), hi=(14 * q, 14 * q, 14 * q)),
        ),
        seed=seed,
    )
