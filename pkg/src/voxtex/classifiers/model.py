"""Trained model container, prediction and single-file serialization.

A model file is a zip archive with a JSON ``meta.json`` entry (variant, format
version, feature spec, hyperparameters, label names) and one ``.npy`` entry
per parameter array. Entries carry a fixed timestamp so identical models
serialize to identical bytes.
"""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict, dataclass, field

import numpy as np

from ..features import FeatureSpec
from . import forest as F
from . import mlp as M

FORMAT_VERSION = 1
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class TrainedModel:
    variant: str  # "forest" or "network"
    n_features: int
    label_names: tuple[str, ...]
    hyperparams: dict
    feature_spec: FeatureSpec | None = None
    trees: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    history: M.TrainingHistory | None = None

    @property
    def n_labels(self) -> int:
        return len(self.label_names)

    def check(self) -> None:
        if self.variant == "forest":
            for t in self.trees:
                if not np.allclose(t.value.sum(axis=1), 1.0):
                    raise ValueError("leaf class frequencies must sum to 1")
        elif self.variant == "network":
            d = self.n_features
            for i in (1, 2, 3):
                W, b = self.params[f"W{i}"], self.params[f"b{i}"]
                if W.shape[0] != d or b.shape != (W.shape[1],):
                    raise ValueError(f"layer {i} shapes do not chain")
                d = W.shape[1]
            if d != self.n_labels:
                raise ValueError("output layer does not match the label count")
        else:
            raise ValueError(f"unknown model variant {self.variant!r}")


def _targets(y, n_labels):
    y = np.asarray(y, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_labels):
        raise ValueError("label id outside the label name list")
    return y


def train_forest(X, y, hp: F.ForestHyperparams, label_names, feature_spec=None,
                 threads: int = 1) -> TrainedModel:
    X = np.asarray(X, dtype=np.float64)
    y = _targets(y, len(label_names))
    trees = F.train_trees(X, y, len(label_names), hp, threads)
    return TrainedModel("forest", X.shape[1], tuple(label_names), asdict(hp), feature_spec,
                        trees=trees)


def train_mlp(X, y, X_val, y_val, hp: M.MlpHyperparams, label_names,
              feature_spec=None) -> TrainedModel:
    y = _targets(y, len(label_names))
    y_val = _targets(y_val, len(label_names))
    params, history = M.train_network(X, y, X_val, y_val, len(label_names), hp)
    return TrainedModel("network", np.asarray(X).shape[1], tuple(label_names), asdict(hp),
                        feature_spec, params=params, history=history)


def predict_proba(model: TrainedModel, features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    squeeze = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} features, got {X.shape[1]}")
    if model.variant == "forest":
        p = F.forest_proba(model.trees, X)
    else:
        p = M.mlp_proba(model.params, X)
    return p[0] if squeeze else p


def predict(model: TrainedModel, features) -> np.ndarray:
    return np.argmax(predict_proba(model, features), axis=-1)


_TREE_FIELDS = ("feature", "threshold", "left", "right", "value", "depth")


def _meta(model: TrainedModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "variant": model.variant,
        "n_features": model.n_features,
        "label_names": list(model.label_names),
        "hyperparams": model.hyperparams,
        "feature_spec": model.feature_spec.to_dict() if model.feature_spec else None,
        "n_trees": len(model.trees),
    }


def model_bytes(model: TrainedModel) -> bytes:
    arrays = {}
    if model.variant == "forest":
        for i, t in enumerate(model.trees):
            for name in _TREE_FIELDS:
                arrays[f"tree{i}/{name}"] = getattr(t, name)
    else:
        arrays = {k: model.params[k] for k in M.PARAM_NAMES}
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        zf.writestr(zipfile.ZipInfo("meta.json", _ZIP_EPOCH),
                    json.dumps(_meta(model), sort_keys=True, indent=1))
        for name, arr in arrays.items():
            b = io.BytesIO()
            np.lib.format.write_array(b, np.ascontiguousarray(arr), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", _ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, b.getvalue())
    return buf.getvalue()


def model_from_bytes(data: bytes) -> TrainedModel:
    with zipfile.ZipFile(io.BytesIO(data)) as zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {meta.get('format_version')}")

        def arr(name):
            return np.lib.format.read_array(io.BytesIO(zf.read(name + ".npy")), allow_pickle=False)

        spec = FeatureSpec.from_dict(meta["feature_spec"]) if meta["feature_spec"] else None
        model = TrainedModel(meta["variant"], meta["n_features"], tuple(meta["label_names"]),
                             meta["hyperparams"], spec)
        if model.variant == "forest":
            model.trees = [F.Tree(*(arr(f"tree{i}/{n}") for n in _TREE_FIELDS))
                           for i in range(meta["n_trees"])]
        else:
            model.params = {k: arr(k) for k in M.PARAM_NAMES}
    model.check()
    return model


def save_model(model: TrainedModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_bytes(model))


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
