"""Acceptance criteria, each printed as one PASS/FAIL line.

Run on their own with ``pytest tests/test_acceptance.py -v``.
"""
import itertools
import time

import numpy as np
import pytest

from voxtex.bench import bench_histograms
from voxtex.classifiers.mlp import (PARAM_NAMES, analytic_gradient, cross_entropy, forward,
                                   init_params)
from voxtex.evaluation import confusion, iou, overall_accuracy, split_slices
from voxtex.features import FeatureSpec, extract_features_slab, required_margin
from voxtex.features.histogram import slab_histograms_incremental
from voxtex.features.lbp import (CODE_TABLE, PLANE_ORDER, lbp_code, slab_code_histograms,
                                 sparse_lbp_histograms)
from voxtex.optimizer import (SearchConfig, VarSet, default_space, evaluate_varset,
                              FeatureCache, labelled_voxels, sample_per_label, two_stage_search)
from voxtex.pipeline import segment_to_file, train_model
from voxtex.synth import Region, SyntheticRecipe, Texture, generate, three_texture_recipe
from voxtex.volume import LabelVolume, Volume, build_pyramid, load_labels, partition_slabs


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail, elapsed, limit):
        ok = bool(ok) and elapsed < limit
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}: {detail} "
                  f"({elapsed:.1f}s, limit {limit:.0f}s)")
        assert ok, f"criterion {number} failed: {detail}"
    return emit


# --- 1. incremental histogram exactness ----------------------------------------

def window_counts_oracle(data, r, k, lo, hi):
    """Clamped cube counts for every voxel by summing shifted one-hot bins."""
    nz, ny, nx = data.shape
    bins = (k * (data.astype(np.int64) - lo)) // (hi - lo + 1)
    padded = np.pad(bins, r, mode="edge")
    onehot = np.eye(k, dtype=np.int32)
    out = np.zeros((nz, ny, nx, k), dtype=np.int32)
    d = 2 * r + 1
    for dz, dy, dx in itertools.product(range(d), repeat=3):
        out += onehot[padded[dz:dz + nz, dy:dy + ny, dx:dx + nx]]
    return out


def test_criterion_1_incremental_exactness(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    mismatches, checked = 0, 0
    for _ in range(50):
        vol = Volume(rng.integers(0, 65536, size=(16, 16, 16)).astype(np.uint16))
        lo, hi = vol.intensity_range
        for r, k in itertools.product((1, 2, 4), (8, 16, 32)):
            ref = window_counts_oracle(vol.data, r, k, lo, hi)
            got = np.concatenate([slab_histograms_incremental(vol, s, r, k)
                                  for s in partition_slabs(vol, 6, r)])
            mismatches += int(not np.array_equal(got, ref))
            checked += 1
    report(1, "incremental histogram == naive oracle", mismatches == 0,
           f"{checked - mismatches}/{checked} volume x (r, k) cases bit-identical",
           time.perf_counter() - t0, 60)


# --- 2. complexity exponents ---------------------------------------------------------

def test_criterion_2_complexity_exponents(report):
    t0 = time.perf_counter()
    inc = bench_histograms("incremental", [4, 8, 16, 32], 96, repeats=3, min_time=0)
    naive = bench_histograms("naive", [2, 4, 8], 32, repeats=15, min_time=2.0)
    ok = 1.6 <= inc.exponent <= 2.4 and 2.6 <= naive.exponent <= 3.4
    report(2, "complexity exponents", ok,
           f"incremental alpha={inc.exponent:.3f} (need 1.6-2.4), "
           f"naive alpha={naive.exponent:.3f} (need 2.6-3.4)",
           time.perf_counter() - t0, 600)


# --- 3. LBP correctness --------------------------------------------------------------

RING = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]
AXES = {"xy": (0, 1), "yz": (1, 2), "xz": (0, 2)}


def brute_plane_counts(data, coord, plane, r):
    """Code counts in the clamped in-plane window, one explicit 3x3 patch per voxel."""
    nz, ny, nx = data.shape
    dims = (nx, ny, nz)
    a, b = AXES[plane]

    def clamp(c):
        return [min(max(c[i], 0), dims[i] - 1) for i in range(3)]
    counts = np.zeros(10, np.int64)
    for da in range(-r, r + 1):
        for db in range(-r, r + 1):
            q = list(coord)
            q[a] += da
            q[b] += db
            q = clamp(q)
            patch = np.zeros((3, 3))
            for pa in (-1, 0, 1):
                for pb in (-1, 0, 1):
                    n = list(q)
                    n[a] += pa
                    n[b] += pb
                    x, y, z = clamp(n)
                    patch[pb + 1, pa + 1] = data[z, y, x]
            counts[lbp_code(patch)] += 1
    return counts


def test_criterion_3_lbp(report):
    t0 = time.perf_counter()
    problems = []

    def transitions(p):
        bits = [(p >> j) & 1 for j in range(8)]
        return sum(bits[j] != bits[(j + 1) % 8] for j in range(8))
    for p in range(256):
        code = int(CODE_TABLE[p])
        if not 0 <= code <= 9:
            problems.append(f"pattern {p} -> {code}")
        if transitions(p) <= 2 and code != bin(p).count("1"):
            problems.append(f"uniform {p} -> {code}")
        for n in range(8):
            if CODE_TABLE[((p << n) | (p >> (8 - n))) & 0xFF] != code:
                problems.append(f"rotation {p} by {n}")
    # the patch-level definition agrees with the table for every ring
    for p in range(256):
        patch = np.full((3, 3), 50)
        for j, (a, b) in enumerate(RING):
            patch[1 + b, 1 + a] = 51 if p >> j & 1 else 49
        if lbp_code(patch) != CODE_TABLE[p]:
            problems.append(f"patch {p}")

    rng = np.random.default_rng(303)
    compared = 0
    for i in range(20):
        vol = Volume(rng.integers(0, 5 if i % 2 else 65536, size=(16, 16, 16)).astype(np.uint16))
        r = 1 + i % 3
        block = vol.gather_slices(-r - 1, 16 + r)
        engine = {pl: slab_code_histograms(vol, block, 0, 15, r, pl) for pl in PLANE_ORDER}
        coords = np.vstack([np.array(list(itertools.product((0, 15), repeat=3))),
                            rng.integers(0, 16, size=(40, 3))])
        for plane in PLANE_ORDER:
            for x, y, z in coords:
                compared += 1
                if not np.array_equal(engine[plane][z, y, x],
                                      brute_plane_counts(vol.data, (x, y, z), plane, r)):
                    problems.append(f"volume {i} {plane} ({x},{y},{z})")
        # every voxel: slab engine against the scattered-read kernel
        zz, yy, xx = np.indices((16, 16, 16)).reshape(3, -1)
        sparse = sparse_lbp_histograms(vol, np.stack([xx, yy, zz], 1), r)
        dense = np.concatenate([engine[pl][zz, yy, xx] for pl in PLANE_ORDER], axis=1)
        if not np.array_equal(sparse, dense):
            problems.append(f"volume {i} engine vs scattered kernel")
    report(3, "LBP codes and plane histograms", not problems,
           f"256 patterns x 8 rotations ok, {compared} brute-force windows compared, "
           f"{len(problems)} problems {problems[:3]}", time.perf_counter() - t0, 60)


# --- 4. gradient check ---------------------------------------------------------------

def _regime(params, X):
    """Which side of the leaky-ReLU kink every hidden pre-activation sits on."""
    _, cache = forward(params, X)
    return np.concatenate([cache["pre1"].ravel() > 0, cache["pre2"].ravel() > 0])


def test_criterion_4_gradient_check(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    h = 1e-4
    worst, checked, straddled = 0.0, 0, 0
    for _ in range(5):
        params = init_params(10, 32, 32, 3, 0.3, rng)
        for k in ("b1", "b2", "b3"):
            params[k] = rng.normal(0, 0.1, params[k].shape)
        X = rng.normal(size=(16, 10))
        y = rng.integers(0, 3, 16)
        grad = analytic_gradient(params, X, y)
        for name in PARAM_NAMES:
            flat = params[name].reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + h
                up, side_up = cross_entropy(params, X, y), _regime(params, X)
                flat[i] = old - h
                down, side_down = cross_entropy(params, X, y), _regime(params, X)
                flat[i] = old
                if not np.array_equal(side_up, side_down):
                    # the +-h step crosses a kink; the central difference is not
                    # an estimate of the derivative there
                    straddled += 1
                    continue
                num = (up - down) / (2 * h)
                a = grad[name].reshape(-1)[i]
                worst = max(worst, abs(a - num) / max(1.0, abs(a)))
                checked += 1
    report(4, "backprop vs central differences", worst < 1e-4 and straddled <= checked // 100,
           f"max relative error {worst:.2e} over {checked} parameters in 5 minibatches "
           f"(need < 1e-4), {straddled} kink-straddling steps skipped",
           time.perf_counter() - t0, 60)


# --- 5 and 7. synthetic end-to-end and slab invariance ----------------------------------

E2E_SPEC = FeatureSpec.make(h1_radius=2, h1_bins=16, h2_scale=1, h2_radius=4, h2_bins=16,
                            lbp_scale=0, lbp_radius=2)
E2E_SLICES = [int(z) for z in np.rint(np.linspace(4, 123, 20))]


@pytest.fixture(scope="module")
def e2e(tmp_path_factory):
    t0 = time.perf_counter()
    vol, labels = generate(three_texture_recipe(128, seed=0))
    pyramid = build_pyramid(vol, E2E_SPEC.max_scale)
    split = split_slices(E2E_SLICES)
    model = train_model(pyramid, labels, split.train, E2E_SPEC, "forest", {"n_trees": 32},
                        samples_per_label=2000, seed=0)
    out = tmp_path_factory.mktemp("e2e")
    files = {}
    for n in (None, 32, 8):
        # same file name in separate directories, so the metadata can match byte for byte
        path = out / f"slab_{n or 'full'}" / "segmented.json"
        path.parent.mkdir()
        segment_to_file(pyramid, model, path, slab_slices=n)
        files[n or "full"] = path
    return {"labels": labels, "split": split, "files": files, "setup": time.perf_counter() - t0}


def test_criterion_5_synthetic_end_to_end(report, e2e):
    t0 = time.perf_counter()
    labels, split = e2e["labels"], e2e["split"]
    pred = load_labels(e2e["files"]["full"])
    mask = np.zeros(labels.data.shape, bool)
    mask[list(split.test)] = True
    matrix = confusion(pred.data, labels.data, mask, label_names=labels.label_names)
    acc = overall_accuracy(matrix)
    ious = {n: iou(matrix, i) for i, n in enumerate(labels.label_names)}
    ok = acc >= 0.90 and all(v is not None and v >= 0.75 for v in ious.values())
    detail = f"held-out accuracy {acc:.4f} (need >= 0.90), IoU " + ", ".join(
        f"{n}={v:.3f}" for n, v in ious.items()) + " (need >= 0.75)"
    report(5, "synthetic three-texture segmentation", ok, detail,
           e2e["setup"] + time.perf_counter() - t0, 900)


def test_criterion_7_slab_invariance(report, e2e):
    t0 = time.perf_counter()
    files = e2e["files"]
    blobs = {k: p.with_suffix(".raw").read_bytes() for k, p in files.items()}
    metas = {k: p.read_text() for k, p in files.items()}
    same = len(set(blobs.values())) == 1 and len(set(metas.values())) == 1
    report(7, "slab sizes 8, 32, full give identical label files", same,
           f"{len(blobs)} files, {len(set(blobs.values()))} distinct raw payloads",
           e2e["setup"] + time.perf_counter() - t0, 600)


# --- 6. optimizer sanity ---------------------------------------------------------------

def test_criterion_6_optimizer_planted_optimum(report):
    t0 = time.perf_counter()
    n = 64
    # Two labels share the noise level and differ only by a small mean shift, laid
    # out in 16-voxel layers along x. A wide scale-0 window that never has to
    # straddle a layer boundary is the planted optimum: smaller windows are noisy,
    # coarser scales mix neighbouring layers.
    recipe = SyntheticRecipe((n, n, n), tuple(
        Region(f"shift{x0}", Texture("noise", mean=22000, sigma=6000), "box", lo=(x0, 0, 0),
               hi=(x0 + 16, n, n)) for x0 in (0, 32)),
        background=Texture("noise", mean=20000, sigma=6000), seed=1)
    vol, lab = generate(recipe)
    labels = LabelVolume(np.minimum(lab.data, 1), ("background", "shifted"))
    pyramid = build_pyramid(vol, 2)
    split = split_slices(range(2, 62, 3))
    train = labelled_voxels(labels, split.train)
    val = labelled_voxels(labels, split.val)
    space = default_space().replace(hist1__radius=1, hist1__bins=8, hist2__scale=(0, 1, 2),
                                    hist2__radius=(1, 2, 3, 4), hist2__bins=8, lbp__scale=0,
                                    lbp__radius=1, forest__n_trees=16)
    config = SearchConfig(global_iterations=24, local_iterations=24, train_samples=500,
                          val_samples=500, timeout=0.5, rng_seed=0)
    best, trace = two_stage_search(train, val, pyramid, space, config,
                                   label_names=labels.label_names)

    # Exhaustive oracle on the same per-label samples the search draws.
    rng = np.random.default_rng(config.rng_seed)
    s_train = sample_per_label(train, config.train_samples, rng)
    s_val = sample_per_label(val, config.val_samples, rng)
    tc, vc = FeatureCache(pyramid, s_train.coords), FeatureCache(pyramid, s_val.coords)
    fixed = {name: dom.values[0] for name, dom in space.domains}
    oracle = {}
    for s, r in itertools.product((0, 1, 2), (1, 2, 3, 4)):
        vs = VarSet.from_dict({**fixed, "hist2.scale": s, "hist2.radius": r}, space)
        oracle[vs] = evaluate_varset(vs, s_train, s_val, pyramid, "forest", labels.label_names,
                                     seed=config.rng_seed, train_cache=tc, val_cache=vc)
    planted = VarSet.from_dict({**fixed, "hist2.scale": 0, "hist2.radius": 4}, space)
    found = oracle[best]
    bsf = trace.best_so_far()
    unique = len({rec.varset for rec in trace.records}) == len(trace)
    monotone = all(a <= b for a, b in zip(bsf, bsf[1:]))
    ok = abs(found - oracle[planted]) <= 0.02 and unique and monotone and \
        max(oracle.values()) == found == bsf[-1]
    report(6, "two-stage search finds the planted optimum", ok,
           f"found {dict(best.as_dict())['hist2.scale']}/{best['hist2.radius']} acc {found:.3f}, "
           f"planted acc {oracle[planted]:.3f}, oracle max {max(oracle.values()):.3f}, "
           f"{len(trace)} evaluations, unique={unique}, non-decreasing={monotone}",
           time.perf_counter() - t0, 600)


# --- 8. metrics ------------------------------------------------------------------------

def test_criterion_8_metrics(report):
    t0 = time.perf_counter()
    m = np.array([[8, 2], [1, 9]])
    ok = abs(iou(m, 0) - 8 / 11) < 1e-12 and abs(overall_accuracy(m) - 0.85) < 1e-12
    rng = np.random.default_rng(808)
    bad = 0
    for _ in range(100):
        k = int(rng.integers(2, 8))
        mat = rng.integers(0, 100, size=(k, k))
        perm = rng.permutation(k)
        pm = np.empty_like(mat)
        pm[np.ix_(perm, perm)] = mat
        same = all(iou(pm, perm[i]) == iou(mat, i) for i in range(k))
        same &= abs(overall_accuracy(pm) - overall_accuracy(mat)) < 1e-12
        bad += not same
    report(8, "IoU and accuracy", ok and bad == 0,
           f"IoU0={iou(m, 0):.6f} (8/11={8 / 11:.6f}), accuracy={overall_accuracy(m):.2f}, "
           f"{100 - bad}/100 random relabelings invariant", time.perf_counter() - t0, 60)
