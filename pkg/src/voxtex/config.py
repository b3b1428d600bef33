"""Pipeline configuration: one YAML file, with command-line flags taking precedence.

Example::

    paths:
      volume: scan.json
      labels: scan_labels.json
      model: model.zip
      output: segmented.json
    classifier: forest
    feature_spec:
      hist1: {scale: 0, radius: 2, bins: 16}
      hist2: {scale: 1, radius: 4, bins: 16}
      lbp: {scale: 0, radius: 2}
    hyperparams: {n_trees: 32}
    slices: {start: 4, stop: 123, count: 20}
    samples_per_label: 2000
    slab_slices: 32
    seed: 0

``slices`` lists the labelled slice indices, either explicitly or as an evenly
spaced ``{start, stop, count}`` range. They are split into train, validation
and test slices.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .evaluation import SliceSplit, split_slices
from .features import FeatureSpec
from .optimizer import SearchConfig

PATH_KEYS = ("volume", "labels", "model", "output", "pyramid", "varset", "trace", "report",
             "truth")


class ConfigError(ValueError):
    pass


def parse_slices(value) -> tuple[int, ...] | None:
    if value is None:
        return None
    if isinstance(value, str):
        value = [int(v) for v in value.replace(",", " ").split()]
    if isinstance(value, dict):
        try:
            zs = np.linspace(value["start"], value["stop"], int(value["count"]))
        except KeyError as exc:
            raise ConfigError(f"slice range needs start, stop and count (missing {exc})") from None
        out = tuple(int(z) for z in np.rint(zs))
    else:
        out = tuple(int(v) for v in value)
    if len(set(out)) != len(out):
        raise ConfigError("labelled slice indices must be distinct")
    return out


@dataclass(frozen=True)
class PipelineConfig:
    paths: dict = field(default_factory=dict)
    classifier: str = "forest"
    feature_spec: FeatureSpec | None = None
    hyperparams: dict = field(default_factory=dict)
    search: SearchConfig = field(default_factory=SearchConfig)
    max_scale: int | None = None
    slices: tuple[int, ...] | None = None
    samples_per_label: int | None = None
    slab_slices: int | None = None
    memory_budget: int | None = None
    threads: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.classifier not in ("forest", "network"):
            raise ConfigError(f"unknown classifier {self.classifier!r}")
        unknown = set(self.paths) - set(PATH_KEYS)
        if unknown:
            raise ConfigError(f"unknown path keys {sorted(unknown)}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.slab_slices is not None and self.slab_slices < 1:
            raise ConfigError("slab_slices must be >= 1")

    def path(self, key: str, must_exist: bool = False) -> Path:
        value = self.paths.get(key)
        if value is None:
            raise ConfigError(f"no {key} path given")
        p = Path(value)
        if must_exist and not p.exists():
            raise FileNotFoundError(f"{key} file not found: {p}")
        return p

    @property
    def pyramid_scale(self) -> int:
        if self.max_scale is not None:
            return self.max_scale
        return self.feature_spec.max_scale if self.feature_spec is not None else 2

    def split(self) -> SliceSplit:
        if not self.slices:
            raise ConfigError("no labelled slices configured")
        return split_slices(self.slices)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        # A best-VarSet file from the optimiser is also a valid config.
        d.pop("varset", None)
        d.pop("validation_accuracy", None)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        if d.get("feature_spec") is not None:
            d["feature_spec"] = FeatureSpec.from_dict(d["feature_spec"])
        if "search" in d:
            d["search"] = SearchConfig(**(d["search"] or {}))
        d["slices"] = parse_slices(d.get("slices"))
        d["paths"] = dict(d.get("paths") or {})
        d["hyperparams"] = dict(d.get("hyperparams") or {})
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "paths": {k: str(v) for k, v in self.paths.items()},
            "classifier": self.classifier,
            "feature_spec": None if self.feature_spec is None else self.feature_spec.to_dict(),
            "hyperparams": dict(self.hyperparams),
            "search": vars(self.search).copy(),
            "max_scale": self.max_scale,
            "slices": None if self.slices is None else list(self.slices),
            "samples_per_label": self.samples_per_label,
            "slab_slices": self.slab_slices,
            "memory_budget": self.memory_budget,
            "threads": self.threads,
            "seed": self.seed,
        }

    def merged(self, other: dict) -> "PipelineConfig":
        """Overlay a partial config dict (e.g. a trained-model or VarSet file)."""
        base = self.to_dict()
        for key, value in other.items():
            if key in ("paths", "hyperparams", "search") and isinstance(value, dict):
                base[key] = {**(base.get(key) or {}), **value}
            else:
                base[key] = value
        return PipelineConfig.from_dict(base)

    def with_overrides(self, **overrides) -> "PipelineConfig":
        """Apply non-``None`` flag values; path keys go into ``paths``."""
        paths = dict(self.paths)
        kw = {}
        for key, value in overrides.items():
            if value is None:
                continue
            if key in PATH_KEYS:
                paths[key] = value
            elif key == "slices":
                kw[key] = parse_slices(value)
            else:
                kw[key] = value
        return replace(self, paths=paths, **kw)


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    with open(p) as fh:
        doc = yaml.safe_load(fh)
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return PipelineConfig.from_dict(doc or {})


def load_yaml(path) -> dict:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return doc or {}
