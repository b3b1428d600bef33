"""Command-line entry point: ``voxtex <command> [options]``.

Every command reads an optional YAML ``--config`` and lets flags override it.
Failures print a single ``voxtex: error: ...`` line and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import MODES, bench_histograms
from .classifiers import load_model, save_model
from .config import PipelineConfig, load_config, load_yaml
from .evaluation import confusion, format_report, metrics_dict
from .optimizer import (default_space, labelled_voxels, read_varset_config, two_stage_search,
                        write_varset_config)
from .pipeline import open_pyramid, segment_to_file, train_model, write_pyramid
from .synth import SyntheticRecipe, generate, three_texture_recipe
from .volume import build_pyramid, load_labels, load_volume, save_labels, save_volume

log = logging.getLogger("voxtex")


def _common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("common options")
    g.add_argument("--config", help="YAML pipeline configuration")
    g.add_argument("--seed", type=int, help="random seed (default 0)")
    g.add_argument("--threads", type=int, help="worker threads; 1 forces the deterministic path")
    g.add_argument("--slab-slices", type=int, dest="slab_slices",
                   help="z slices owned by each slab during segmentation")
    g.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voxtex", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labelled synthetic textured volume")
    p.add_argument("--recipe", help="YAML recipe; default is the three-texture cube")
    p.add_argument("--size", type=int, default=128, help="edge length of the default recipe")
    p.add_argument("--out", required=True, help="output prefix; writes <out>.json and "
                   "<out>_labels.json")
    _common(p)

    p = sub.add_parser("preprocess", help="build and store the scale pyramid")
    p.add_argument("--volume")
    p.add_argument("--max-scale", type=int, dest="max_scale")
    p.add_argument("--out", dest="pyramid", help="pyramid prefix; writes <out>_s<s>.json")
    _common(p)

    p = sub.add_parser("optimise", aliases=["optimize"],
                       help="two-stage search for features and hyperparameters")
    p.add_argument("--volume")
    p.add_argument("--labels")
    p.add_argument("--slices", help="labelled slice indices, comma separated")
    p.add_argument("--classifier", choices=("forest", "network"))
    p.add_argument("--global-iterations", type=int, dest="global_iterations")
    p.add_argument("--local-iterations", type=int, dest="local_iterations")
    p.add_argument("--train-samples", type=int, dest="train_samples")
    p.add_argument("--val-samples", type=int, dest="val_samples")
    p.add_argument("--timeout", type=float)
    p.add_argument("--out", dest="varset", help="best VarSet file")
    p.add_argument("--trace", help="line-delimited JSON search trace")
    _common(p)

    p = sub.add_parser("train", help="train a model on the training slices")
    p.add_argument("--volume")
    p.add_argument("--labels")
    p.add_argument("--slices")
    p.add_argument("--varset", help="VarSet file written by optimise")
    p.add_argument("--classifier", choices=("forest", "network"))
    p.add_argument("--samples-per-label", type=int, dest="samples_per_label")
    p.add_argument("--out", dest="model", help="model file")
    _common(p)

    p = sub.add_parser("segment", help="label every voxel with a trained model")
    p.add_argument("--volume")
    p.add_argument("--model")
    p.add_argument("--out", dest="output", help="output label file")
    p.add_argument("--memory-budget", type=int, dest="memory_budget",
                   help="cap on bytes of features held per slab")
    _common(p)

    p = sub.add_parser("evaluate", help="IoU and confusion report against ground truth")
    p.add_argument("--pred", dest="output", help="predicted label file")
    p.add_argument("--truth", help="ground-truth label file (default: the labels path)")
    p.add_argument("--slices", help="slices to score (default: the test split)")
    p.add_argument("--report", help="also write metrics as JSON here")
    _common(p)

    p = sub.add_parser("bench", help="time the naive or incremental histogram engine")
    p.add_argument("--mode", choices=MODES, default="incremental")
    p.add_argument("--radii", default="4,8,16,32", help="comma separated radii")
    p.add_argument("--size", type=int, default=96, help="edge length of the random volume")
    p.add_argument("--bins", type=int, default=8)
    p.add_argument("--repeats", type=int, default=5)
    _common(p)
    return parser


_FLAG_KEYS = ("seed", "threads", "slab_slices", "volume", "labels", "model", "output", "pyramid",
              "varset", "trace", "report", "truth", "max_scale", "classifier", "slices",
              "samples_per_label", "memory_budget")
_SEARCH_KEYS = ("global_iterations", "local_iterations", "train_samples", "val_samples",
                "timeout")


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config)
    flags = {k: getattr(args, k) for k in _FLAG_KEYS if getattr(args, k, None) is not None}
    cfg = cfg.with_overrides(**flags)
    search = {k: getattr(args, k) for k in _SEARCH_KEYS if getattr(args, k, None) is not None}
    if search:
        cfg = cfg.merged({"search": search})
    seed = cfg.seed
    if cfg.search.rng_seed != seed:
        cfg = cfg.merged({"search": {"rng_seed": seed}})
    return cfg


# --- commands -----------------------------------------------------------------

def cmd_synth(args, cfg: PipelineConfig) -> None:
    if args.recipe:
        doc = load_yaml(args.recipe)
        if args.seed is not None:
            doc["seed"] = args.seed
        recipe = SyntheticRecipe.from_dict(doc)
    else:
        recipe = three_texture_recipe(args.size, cfg.seed)
    volume, labels = generate(recipe)
    out = Path(args.out)
    prov = {"seed": recipe.seed}
    vpath = save_volume(volume, out.with_name(out.name + ".json"), prov)
    lpath = save_labels(labels, out.with_name(out.name + "_labels.json"), prov)
    print(f"wrote {vpath} and {lpath}")


def cmd_preprocess(args, cfg: PipelineConfig) -> None:
    volume = load_volume(cfg.path("volume", must_exist=True))
    prefix = cfg.paths.get("pyramid") or str(cfg.path("volume").with_suffix(""))
    paths = write_pyramid(build_pyramid(volume, cfg.pyramid_scale), prefix)
    for p in paths:
        print(p)


def _pyramid(cfg: PipelineConfig, max_scale: int):
    return open_pyramid(cfg.path("volume", must_exist=True), max_scale, cfg.paths.get("pyramid"))


def _labels(cfg: PipelineConfig):
    return load_labels(cfg.path("labels", must_exist=True))


def cmd_optimise(args, cfg: PipelineConfig) -> None:
    space = default_space(cfg.classifier)
    pyramid = _pyramid(cfg, max(max(d.values) for n, d in space.domains if n.endswith(".scale")))
    labels = _labels(cfg)
    if labels.dims != pyramid[0].dims:
        raise ValueError(f"label dims {labels.dims} do not match volume dims {pyramid[0].dims}")
    split = cfg.split()
    train = labelled_voxels(labels, split.train)
    val = labelled_voxels(labels, split.val)
    trace_path = cfg.paths.get("trace")
    fh = open(trace_path, "w") if trace_path else None
    try:
        best, trace = two_stage_search(
            train, val, pyramid, space, cfg.search, cfg.classifier, labels.label_names,
            on_record=(lambda rec: fh.write(rec.to_json() + "\n")) if fh else None,
            threads=cfg.threads)
    finally:
        if fh:
            fh.close()
    out = cfg.paths.get("varset") or "best_varset.yaml"
    acc = trace.best_so_far()[-1]
    write_varset_config(out, best, cfg.classifier, acc, cfg.seed)
    print(f"best validation accuracy {acc:.4f} after {len(trace)} evaluations; wrote {out}")


def cmd_train(args, cfg: PipelineConfig) -> None:
    if cfg.paths.get("varset"):
        varset, classifier = read_varset_config(cfg.path("varset", must_exist=True))
        doc = load_yaml(cfg.path("varset"))
        cfg = cfg.merged({"classifier": classifier, "feature_spec": doc["feature_spec"],
                          "hyperparams": doc.get("hyperparams", {})})
    if cfg.feature_spec is None:
        raise ValueError("no feature_spec configured; give one in --config or pass --varset")
    pyramid = _pyramid(cfg, cfg.feature_spec.max_scale)
    labels = _labels(cfg)
    split = cfg.split()
    model = train_model(pyramid, labels, split.train, cfg.feature_spec, cfg.classifier,
                        cfg.hyperparams, split.val, cfg.samples_per_label, cfg.seed, cfg.threads)
    out = cfg.paths.get("model") or "model.zip"
    save_model(model, out)
    print(f"trained {cfg.classifier} on {len(split.train)} slices; wrote {out}")


def cmd_segment(args, cfg: PipelineConfig) -> None:
    model = load_model(cfg.path("model", must_exist=True))
    pyramid = _pyramid(cfg, model.feature_spec.max_scale)
    out = cfg.path("output")
    stats = segment_to_file(pyramid, model, out, cfg.slab_slices, cfg.memory_budget,
                            cfg.threads, extra={"seed": model.hyperparams.get("rng_seed")})
    print(f"segmented in {stats.n_slabs} slabs of {stats.slab_slices} slices; "
          f"peak slab features {stats.peak_feature_bytes} B "
          f"(full volume would be {stats.full_feature_bytes} B); wrote {out}")


def cmd_evaluate(args, cfg: PipelineConfig) -> None:
    pred = load_labels(cfg.path("output", must_exist=True))
    truth_key = "truth" if cfg.paths.get("truth") else "labels"
    truth = load_labels(cfg.path(truth_key, must_exist=True))
    if pred.dims != truth.dims:
        raise ValueError(f"prediction dims {pred.dims} do not match truth dims {truth.dims}")
    if args.slices is not None:
        zs = cfg.slices
        title = "selected slices"
    elif cfg.slices:
        zs = cfg.split().test
        title = "test slices"
    else:
        zs = None
        title = "whole volume"
    mask = None
    if zs is not None:
        mask = np.zeros(truth.data.shape, dtype=bool)
        mask[list(zs)] = True
    matrix = confusion(pred.data, truth.data, mask, label_names=truth.label_names)
    print(format_report(matrix, f"evaluation on {title}"), end="")
    if cfg.paths.get("report"):
        doc = {**metrics_dict(matrix), "slices": None if zs is None else list(zs)}
        Path(cfg.paths["report"]).write_text(json.dumps(doc, indent=2) + "\n")


def cmd_bench(args, cfg: PipelineConfig) -> None:
    radii = [int(r) for r in args.radii.replace(",", " ").split()]
    result = bench_histograms(args.mode, radii, args.size, args.bins, args.repeats, cfg.seed)
    print(result.table(), end="")


COMMANDS = {"synth": cmd_synth, "preprocess": cmd_preprocess, "optimise": cmd_optimise,
            "optimize": cmd_optimise, "train": cmd_train, "segment": cmd_segment,
            "evaluate": cmd_evaluate, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](args, cfg)
    except KeyboardInterrupt:
        print("voxtex: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # one-line diagnostic, nonzero exit
        if args.verbose:
            log.exception("command failed")
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"voxtex: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
