"""Two-stage random search over feature variables and classifier hyperparameters.

A global phase draws unseen variable sets uniformly; a local phase then
hill-climbs by redrawing one variable of the incumbent at a time. Every
evaluated set goes into a registry so nothing is evaluated twice.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .classifiers import (FOREST_TREES, LAYER_SIZES, MINIBATCH_SIZES, ForestHyperparams,
                          MlpHyperparams, predict, train_forest, train_mlp)
from .features import FeatureSpec, HistogramSpec, LbpSpec
from .features.histogram import ALLOWED_BINS, sparse_histograms
from .features.lbp import sparse_lbp_histograms

log = logging.getLogger(__name__)


class SearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class Choice:
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise ValueError("empty domain")

    @property
    def size(self) -> float:
        return len(self.values)

    def sample(self, rng: np.random.Generator):
        v = self.values[int(rng.integers(len(self.values)))]
        return v.item() if isinstance(v, np.generic) else v

    def contains(self, v) -> bool:
        return v in self.values


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    @property
    def size(self) -> float:
        return 1 if self.lo == self.hi else math.inf

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.lo, self.hi))

    def contains(self, v) -> bool:
        return self.lo <= v <= self.hi


def irange(lo: int, hi: int) -> Choice:
    return Choice(tuple(range(lo, hi + 1)))


FEATURE_DOMAINS = {
    "hist1.radius": irange(1, 8),
    "hist1.bins": Choice(ALLOWED_BINS),
    "hist2.scale": irange(0, 2),
    "hist2.radius": irange(1, 32),
    "hist2.bins": Choice(ALLOWED_BINS),
    "lbp.scale": irange(0, 2),
    "lbp.radius": irange(1, 32),
}
FOREST_DOMAINS = {"forest.n_trees": Choice(FOREST_TREES)}
MLP_DOMAINS = {
    "mlp.layer1": Choice(LAYER_SIZES),
    "mlp.layer2": Choice(LAYER_SIZES),
    "mlp.dropout_rate": Uniform(0.0, 0.5),
    "mlp.init_stddev": Uniform(0.0001, 1.0),
    "mlp.minibatch": Choice(MINIBATCH_SIZES),
}
CLASSIFIERS = ("forest", "network")


@dataclass(frozen=True)
class SearchSpace:
    domains: tuple[tuple[str, Any], ...]

    @classmethod
    def from_dict(cls, domains: dict) -> "SearchSpace":
        return cls(tuple(domains.items()))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.domains)

    def domain(self, name: str):
        return dict(self.domains)[name]

    @property
    def size(self) -> float:
        return math.prod(d.size for _, d in self.domains)

    def contains(self, varset: "VarSet") -> bool:
        return varset.names == self.names and all(
            d.contains(v) for (_, d), v in zip(self.domains, varset.values))

    def replace(self, **domains) -> "SearchSpace":
        d = dict(self.domains)
        for k, v in domains.items():
            key = k.replace("__", ".")
            if key not in d:
                raise KeyError(key)
            d[key] = v if isinstance(v, (Choice, Uniform)) else Choice(
                v if isinstance(v, (tuple, list)) else (v,))
        return SearchSpace(tuple(d.items()))


def default_space(classifier: str = "forest") -> SearchSpace:
    extra = {"forest": FOREST_DOMAINS, "network": MLP_DOMAINS}[classifier]
    return SearchSpace.from_dict({**FEATURE_DOMAINS, **extra})


@dataclass(frozen=True)
class VarSet:
    names: tuple[str, ...]
    values: tuple

    def __getitem__(self, name):
        return self.values[self.names.index(name)]

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values))

    def with_value(self, name, value) -> "VarSet":
        i = self.names.index(name)
        return VarSet(self.names, self.values[:i] + (value,) + self.values[i + 1:])

    def hamming(self, other: "VarSet") -> int:
        return sum(a != b for a, b in zip(self.values, other.values))

    @classmethod
    def from_dict(cls, d: dict, space: SearchSpace | None = None) -> "VarSet":
        names = space.names if space is not None else tuple(d)
        return cls(names, tuple(d[n] for n in names))


def sample_varset(space: SearchSpace, rng: np.random.Generator) -> VarSet:
    return VarSet(space.names, tuple(d.sample(rng) for _, d in space.domains))


def mutate_varset(base: VarSet, space: SearchSpace, rng: np.random.Generator) -> VarSet:
    """Redraw exactly one variable (chosen uniformly among non-singleton domains)."""
    movable = [i for i, (_, d) in enumerate(space.domains) if d.size > 1]
    if not movable:
        raise SearchError("every domain is a singleton; nothing to mutate")
    i = movable[int(rng.integers(len(movable)))]
    name, dom = space.domains[i]
    while True:
        v = dom.sample(rng)
        if v != base.values[i]:
            return base.with_value(name, v)


def feature_spec_of(varset: VarSet) -> FeatureSpec:
    v = varset.as_dict()
    return FeatureSpec(HistogramSpec(0, int(v["hist1.radius"]), int(v["hist1.bins"])),
                       HistogramSpec(int(v["hist2.scale"]), int(v["hist2.radius"]),
                                     int(v["hist2.bins"])),
                       LbpSpec(int(v["lbp.scale"]), int(v["lbp.radius"])))


def hyperparams_of(varset: VarSet, classifier: str, seed: int = 0, **overrides):
    v = varset.as_dict()
    if classifier == "forest":
        return ForestHyperparams(n_trees=int(v["forest.n_trees"]), rng_seed=seed, **overrides)
    return MlpHyperparams(layer1=int(v["mlp.layer1"]), layer2=int(v["mlp.layer2"]),
                          dropout_rate=float(v["mlp.dropout_rate"]),
                          init_stddev=float(v["mlp.init_stddev"]),
                          minibatch=int(v["mlp.minibatch"]), rng_seed=seed, **overrides)


def varset_from_config(spec: FeatureSpec, classifier: str, hp) -> VarSet:
    d = {"hist1.radius": spec.hist1.radius, "hist1.bins": spec.hist1.bins,
         "hist2.scale": spec.hist2.scale, "hist2.radius": spec.hist2.radius,
         "hist2.bins": spec.hist2.bins, "lbp.scale": spec.lbp.scale, "lbp.radius": spec.lbp.radius}
    if classifier == "forest":
        d["forest.n_trees"] = hp.n_trees
    else:
        d.update({"mlp.layer1": hp.layer1, "mlp.layer2": hp.layer2,
                  "mlp.dropout_rate": hp.dropout_rate, "mlp.init_stddev": hp.init_stddev,
                  "mlp.minibatch": hp.minibatch})
    return VarSet.from_dict(d, default_space(classifier))


# --- labelled voxel sets ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class LabelledSet:
    coords: np.ndarray  # (n, 3) as (x, y, z)
    labels: np.ndarray  # (n,)

    def __len__(self):
        return len(self.labels)


def labelled_voxels(labels, slices: Sequence[int]) -> LabelledSet:
    """Every voxel on the given z slices of a label volume, with its label."""
    data = np.asarray(labels.data if hasattr(labels, "data") else labels)
    coords, ids = [], []
    for z in sorted(slices):
        plane = np.asarray(data[z])
        yy, xx = np.indices(plane.shape)
        coords.append(np.stack([xx.ravel(), yy.ravel(), np.full(plane.size, z)], axis=1))
        ids.append(plane.ravel())
    if not coords:
        return LabelledSet(np.zeros((0, 3), np.int64), np.zeros(0, np.int64))
    return LabelledSet(np.concatenate(coords).astype(np.int64),
                       np.concatenate(ids).astype(np.int64))


def sample_per_label(voxels: LabelledSet, n: int, rng: np.random.Generator) -> LabelledSet:
    """Up to ``n`` voxels of each present label, uniformly without replacement."""
    if len(voxels) == 0:
        raise ValueError("no labelled voxels to sample from")
    picks = []
    for lab in np.unique(voxels.labels):
        idx = np.nonzero(voxels.labels == lab)[0]
        picks.append(idx if len(idx) <= n else np.sort(rng.choice(idx, n, replace=False)))
    sel = np.concatenate(picks)
    return LabelledSet(voxels.coords[sel], voxels.labels[sel])


# --- evaluation ---------------------------------------------------------------

class FeatureCache:
    """Memoises feature blocks per component for a fixed coordinate set."""

    def __init__(self, pyramid, coords: np.ndarray):
        self.pyramid = pyramid
        self.coords = np.asarray(coords, dtype=np.int64)
        self._blocks: dict = {}

    def _block(self, key, make):
        if key not in self._blocks:
            self._blocks[key] = make()
        return self._blocks[key]

    def features(self, spec: FeatureSpec) -> np.ndarray:
        p, c = self.pyramid, self.coords
        rng = p[0].intensity_range

        def hist(hs):
            def make():
                counts = sparse_histograms(p[hs.scale], c >> hs.scale, hs.radius, hs.bins, rng)
                return counts / float((2 * hs.radius + 1) ** 3)
            return self._block(("h", hs.scale, hs.radius, hs.bins), make)

        def lbp(ls):
            def make():
                counts = sparse_lbp_histograms(p[ls.scale], c >> ls.scale, ls.radius)
                return counts / float((2 * ls.radius + 1) ** 2)
            return self._block(("l", ls.scale, ls.radius), make)

        centre = self._block("i", lambda: _centre(p, c))
        return np.concatenate([centre, hist(spec.hist1), hist(spec.hist2), lbp(spec.lbp)], axis=1)


def _centre(pyramid, coords) -> np.ndarray:
    base = pyramid[0]
    lo, hi = base.intensity_range
    v = np.asarray(base.data)[coords[:, 2], coords[:, 1], coords[:, 0]].astype(np.float64)
    return ((v - lo) / (hi - lo) if hi > lo else np.zeros_like(v))[:, None]


def evaluate_varset(varset: VarSet, train: LabelledSet, val: LabelledSet, pyramid,
                    classifier: str = "forest", label_names: Sequence[str] | None = None,
                    seed: int = 0, threads: int = 1, train_cache: FeatureCache | None = None,
                    val_cache: FeatureCache | None = None) -> float:
    """Train a fresh model for ``varset`` and return its validation voxel accuracy."""
    if len(train) == 0 or len(val) == 0:
        raise ValueError("training and validation samples must be non-empty")
    spec = feature_spec_of(varset)
    if spec.max_scale > pyramid.max_scale:
        raise ValueError(f"varset needs scale {spec.max_scale}, pyramid has {pyramid.max_scale}")
    names = label_names or [str(i) for i in range(int(max(train.labels.max(), val.labels.max())) + 1)]
    Xt = (train_cache or FeatureCache(pyramid, train.coords)).features(spec)
    Xv = (val_cache or FeatureCache(pyramid, val.coords)).features(spec)
    hp = hyperparams_of(varset, classifier, seed)
    if classifier == "forest":
        model = train_forest(Xt, train.labels, hp, names, spec, threads)
    else:
        model = train_mlp(Xt, train.labels, Xv, val.labels, hp, names, spec)
    return float(np.mean(predict(model, Xv) == val.labels))


# --- the search ---------------------------------------------------------------

@dataclass(frozen=True)
class SearchConfig:
    global_iterations: int = 60
    local_iterations: int = 120
    train_samples: int = 500
    val_samples: int = 500
    timeout: float = 5.0
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.global_iterations, self.local_iterations, self.train_samples,
               self.val_samples) < 0 or self.timeout <= 0:
            raise ValueError("search configuration values must be positive")


# Iteration and sample budgets for full-size scans; the defaults above suit desk-scale runs.
FULL_SCALE_SEARCH = SearchConfig(global_iterations=1000, local_iterations=10000,
                                 train_samples=16000, val_samples=16000, timeout=5.0)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    phase: str
    varset: VarSet
    accuracy: float
    best_accuracy: float

    def to_json(self) -> str:
        return json.dumps({"iteration": self.iteration, "phase": self.phase,
                           "varset": self.varset.as_dict(), "accuracy": self.accuracy,
                           "best_accuracy": self.best_accuracy}, sort_keys=True)


@dataclass
class SearchTrace:
    records: list[TraceRecord] = field(default_factory=list)
    exits: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def best_so_far(self) -> list[float]:
        return [r.best_accuracy for r in self.records]

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(r.to_json() + "\n")


def _draw_unseen(propose: Callable[[], VarSet], known: set, timeout: float) -> VarSet | None:
    start = time.monotonic()
    while True:
        candidate = propose()
        if time.monotonic() - start > timeout:
            return None
        if candidate not in known:
            return candidate


def two_stage_search(train: LabelledSet, val: LabelledSet, pyramid, space: SearchSpace,
                     config: SearchConfig, classifier: str = "forest",
                     label_names: Sequence[str] | None = None,
                     evaluate: Callable[[VarSet], float] | None = None,
                     on_record: Callable[[TraceRecord], None] | None = None,
                     threads: int = 1) -> tuple[VarSet, SearchTrace]:
    """Return the best variable set found and the full evaluation trace.

    ``evaluate`` overrides model training (used for tests and dry runs); it
    receives a VarSet and returns a validation accuracy.
    """
    rng = np.random.default_rng(config.rng_seed)
    if evaluate is None:
        if len(train) == 0 or len(val) == 0:
            raise ValueError("training and validation label sets must be non-empty")
        s_train = sample_per_label(train, config.train_samples, rng)
        s_val = sample_per_label(val, config.val_samples, rng)
        tcache = FeatureCache(pyramid, s_train.coords)
        vcache = FeatureCache(pyramid, s_val.coords)

        def evaluate(vs):
            return evaluate_varset(vs, s_train, s_val, pyramid, classifier, label_names,
                                   seed=config.rng_seed, threads=threads,
                                   train_cache=tcache, val_cache=vcache)

    known: set[VarSet] = set()
    trace = SearchTrace()
    best: VarSet | None = None
    best_acc = -math.inf
    iteration = 0

    def run(phase, n, propose):
        nonlocal best, best_acc, iteration
        for _ in range(n):
            vs = _draw_unseen(propose, known, config.timeout)
            if vs is None:
                trace.exits[phase] = "timeout"
                log.info("%s phase: no unseen varset within %.3gs, leaving phase",
                         phase, config.timeout)
                return
            known.add(vs)
            acc = float(evaluate(vs))
            if acc > best_acc:
                best, best_acc = vs, acc
            rec = TraceRecord(iteration, phase, vs, acc, best_acc)
            trace.records.append(rec)
            if on_record:
                on_record(rec)
            log.debug("%s %d acc=%.4f best=%.4f", phase, iteration, acc, best_acc)
            iteration += 1
        trace.exits[phase] = "completed"

    run("global", config.global_iterations, lambda: sample_varset(space, rng))
    if best is not None and config.local_iterations > 0:
        if any(d.size > 1 for _, d in space.domains):
            run("local", config.local_iterations, lambda: mutate_varset(best, space, rng))
        else:
            trace.exits["local"] = "nothing to mutate"
    if best is None:
        raise SearchError("the search evaluated no variable sets")
    return best, trace


def write_varset_config(path, varset: VarSet, classifier: str, accuracy: float | None = None,
                        seed: int | None = None) -> None:
    """Persist a VarSet as a YAML training configuration."""
    import yaml

    spec = feature_spec_of(varset)
    doc = {"classifier": classifier, "feature_spec": spec.to_dict(),
           "hyperparams": {k.split(".", 1)[1]: v for k, v in varset.as_dict().items()
                           if k.startswith(("forest.", "mlp."))},
           "varset": varset.as_dict()}
    if accuracy is not None:
        doc["validation_accuracy"] = accuracy
    if seed is not None:
        doc["seed"] = seed
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def read_varset_config(path) -> tuple[VarSet, str]:
    import yaml

    with open(path) as fh:
        doc = yaml.safe_load(fh)
    classifier = doc["classifier"]
    return VarSet.from_dict(doc["varset"], default_space(classifier)), classifier
