"""Training and slab-wise segmentation built from the lower-level modules."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .classifiers import (ForestHyperparams, MlpHyperparams, TrainedModel, predict,
                          train_forest, train_mlp)
from .features import FeatureSpec, extract_features_at, extract_features_slab, required_margin
from .features.vector import feature_matrix_bytes
from .optimizer import LabelledSet, labelled_voxels, sample_per_label
from .volume import (LabelVolume, ScalePyramid, Volume, build_pyramid, load_volume,
                     partition_slabs, save_volume, sigma_policy)

log = logging.getLogger(__name__)


def pyramid_paths(prefix, max_scale: int) -> list[Path]:
    prefix = Path(prefix)
    return [prefix.with_name(f"{prefix.name}_s{s}.json") for s in range(max_scale + 1)]


def write_pyramid(pyramid: ScalePyramid, prefix) -> list[Path]:
    paths = pyramid_paths(prefix, pyramid.max_scale)
    for level, path in zip(pyramid.levels, paths):
        save_volume(level, path)
    return paths


def open_pyramid(volume: Volume | str | Path, max_scale: int, prefix=None) -> ScalePyramid:
    """Load stored pyramid levels under ``prefix`` if present, else build them."""
    if prefix is not None:
        paths = pyramid_paths(prefix, max_scale)
        if all(p.is_file() for p in paths):
            levels = tuple(load_volume(p) for p in paths)
            return ScalePyramid(levels, sigma_policy(max_scale))
    if not isinstance(volume, Volume):
        volume = load_volume(volume)
    return build_pyramid(volume, max_scale)


def training_set(labels: LabelVolume, slices: Sequence[int], samples_per_label: int | None,
                 rng: np.random.Generator) -> LabelledSet:
    voxels = labelled_voxels(labels, slices)
    if samples_per_label is None:
        return voxels
    return sample_per_label(voxels, samples_per_label, rng)


def train_model(pyramid: ScalePyramid, labels: LabelVolume, train_slices: Sequence[int],
                spec: FeatureSpec, classifier: str, hyperparams,
                val_slices: Sequence[int] = (), samples_per_label: int | None = None,
                seed: int = 0, threads: int = 1) -> TrainedModel:
    """Fit a classifier on the labelled voxels of ``train_slices``.

    ``samples_per_label`` caps the training voxels drawn per label; ``None``
    uses them all. The network variant also needs ``val_slices`` for early
    stopping.
    """
    if labels.dims != pyramid[0].dims:
        raise ValueError(f"label dims {labels.dims} do not match volume dims {pyramid[0].dims}")
    if spec.max_scale > pyramid.max_scale:
        raise ValueError(f"feature spec needs scale {spec.max_scale}, pyramid has {pyramid.max_scale}")
    rng = np.random.default_rng(seed)
    train = training_set(labels, train_slices, samples_per_label, rng)
    X = extract_features_at(pyramid, train.coords, spec)
    if classifier == "forest":
        hp = hyperparams if isinstance(hyperparams, ForestHyperparams) else ForestHyperparams(
            **{"rng_seed": seed, **(hyperparams or {})})
        return train_forest(X, train.labels, hp, labels.label_names, spec, threads)
    if classifier == "network":
        if not val_slices:
            raise ValueError("the network classifier needs validation slices for early stopping")
        val = training_set(labels, val_slices, samples_per_label, rng)
        Xv = extract_features_at(pyramid, val.coords, spec)
        hp = hyperparams if isinstance(hyperparams, MlpHyperparams) else MlpHyperparams(
            **{"rng_seed": seed, **(hyperparams or {})})
        return train_mlp(X, train.labels, Xv, val.labels, hp, labels.label_names, spec)
    raise ValueError(f"unknown classifier {classifier!r}")


@dataclass
class SegmentStats:
    n_slabs: int
    slab_slices: int
    margin: int
    peak_feature_bytes: int
    full_feature_bytes: int


def slab_slices_for_budget(volume: Volume, spec: FeatureSpec, budget_bytes: int) -> int:
    nx, ny, _ = volume.dims
    per_slice = feature_matrix_bytes(nx * ny, spec)
    n = budget_bytes // per_slice
    if n < 1:
        raise ValueError(f"memory budget {budget_bytes} B is below one slice of features "
                         f"({per_slice} B)")
    return int(n)


def segment_volume(pyramid: ScalePyramid, model: TrainedModel, slab_slices: int | None = None,
                   out=None, memory_budget: int | None = None,
                   threads: int = 1) -> tuple[np.ndarray, SegmentStats]:
    """Label every voxel, one slab of features at a time.

    ``out`` may be any writable ``(nz, ny, nx)`` uint8 array, e.g. a memmap.
    With ``memory_budget`` the slab height is capped so a slab's feature
    matrix stays within that many bytes.
    """
    spec = model.feature_spec
    if spec is None:
        raise ValueError("model carries no feature spec")
    base = pyramid[0]
    nx, ny, nz = base.dims
    if spec.length != model.n_features:
        raise ValueError("model feature length disagrees with its feature spec")
    if spec.max_scale > pyramid.max_scale:
        raise ValueError(f"model needs scale {spec.max_scale}, pyramid has {pyramid.max_scale}")
    slab_slices = slab_slices or nz
    if memory_budget is not None:
        slab_slices = min(slab_slices, slab_slices_for_budget(base, spec, memory_budget))
    margin = required_margin(spec)
    if out is None:
        out = np.zeros((nz, ny, nx), dtype=np.uint8)
    peak = 0
    slabs = partition_slabs(base, slab_slices, margin)

    def run(slab):
        X, _ = extract_features_slab(pyramid, slab, spec)
        labels = predict(model, X).astype(np.uint8).reshape(slab.n_owned, ny, nx)
        return slab, labels, X.nbytes

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            results = pool.map(run, slabs)
            for slab, labels, nbytes in results:
                out[slab.z_lo:slab.z_hi + 1] = labels
                peak = max(peak, nbytes)
    else:
        for slab in slabs:
            slab, labels, nbytes = run(slab)
            out[slab.z_lo:slab.z_hi + 1] = labels
            peak = max(peak, nbytes)
            log.debug("slab %d-%d done", slab.z_lo, slab.z_hi)
    stats = SegmentStats(len(slabs), slab_slices, margin, peak,
                         feature_matrix_bytes(nx * ny * nz, spec))
    return out, stats


def segment_to_file(pyramid: ScalePyramid, model: TrainedModel, path, slab_slices=None,
                    memory_budget=None, threads: int = 1,
                    extra: dict | None = None) -> SegmentStats:
    """Segment straight into a label file pair without holding the output in memory."""
    import json

    from .volume import RAW_DTYPES, _resolve_meta_path

    meta_path = _resolve_meta_path(path)
    raw_path = meta_path.with_suffix(".raw")
    nx, ny, nz = pyramid[0].dims
    mm = np.memmap(raw_path, dtype=RAW_DTYPES["u8"], mode="w+", shape=(nz, ny, nx))
    _, stats = segment_volume(pyramid, model, slab_slices, mm, memory_budget, threads)
    mm.flush()
    del mm
    meta = {"dims": [nx, ny, nz], "dtype": "u8", "raw": raw_path.name,
            "label_names": list(model.label_names), **(extra or {})}
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return stats
