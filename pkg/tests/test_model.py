import numpy as np
import pytest

from voxtex.classifiers import (FORMAT_VERSION, ForestHyperparams, MlpHyperparams, Tree,
                                TrainedModel, load_model, model_bytes, model_from_bytes,
                                predict, predict_proba, save_model, train_forest, train_mlp)
from voxtex.features import FeatureSpec

SPEC = FeatureSpec.make(1, 8, 0, 1, 8, 0, 1)
NAMES = ("background", "a", "b")


def dataset(rng, n=150, d=47):
    y = rng.integers(0, 3, n)
    X = rng.normal(size=(n, d))
    X[:, :3] += 3 * np.eye(3)[y]
    return X, y


class TestForestModel:
    def test_round_trip_predictions(self, tmp_path, rng):
        X, y = dataset(rng)
        m = train_forest(X, y, ForestHyperparams(16, rng_seed=2), NAMES, SPEC)
        save_model(m, tmp_path / "m.zip")
        back = load_model(tmp_path / "m.zip")
        probes = rng.normal(size=(1000, 47))
        assert np.array_equal(predict_proba(m, probes), predict_proba(back, probes))
        assert back.feature_spec == SPEC and back.label_names == NAMES

    def test_same_seed_same_bytes(self, rng):
        X, y = dataset(rng)
        a = train_forest(X, y, ForestHyperparams(16, rng_seed=4), NAMES, SPEC)
        b = train_forest(X, y, ForestHyperparams(16, rng_seed=4), NAMES, SPEC)
        assert model_bytes(a) == model_bytes(b)
        c = train_forest(X, y, ForestHyperparams(16, rng_seed=5), NAMES, SPEC)
        assert model_bytes(a) != model_bytes(c)

    def test_probabilities_normalised(self, rng):
        X, y = dataset(rng)
        m = train_forest(X, y, ForestHyperparams(16), NAMES, SPEC)
        p = predict_proba(m, rng.normal(size=(200, 47)))
        assert np.all(p >= 0) and np.allclose(p.sum(axis=1), 1, atol=1e-6)

    def test_identical_pure_leaves_give_one_hot(self):
        leaf = Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                    np.array([[0.0, 1.0, 0.0]]), np.array([0]))
        m = TrainedModel("forest", 4, NAMES, {}, trees=[leaf, leaf, leaf])
        assert np.array_equal(predict_proba(m, np.zeros((2, 4))), [[0, 1, 0], [0, 1, 0]])

    def test_length_mismatch(self, rng):
        X, y = dataset(rng)
        m = train_forest(X, y, ForestHyperparams(16), NAMES, SPEC)
        with pytest.raises(ValueError):
            predict(m, np.zeros((3, 46)))

    def test_label_ids_checked(self, rng):
        X, _ = dataset(rng)
        with pytest.raises(ValueError):
            train_forest(X, np.full(len(X), 3), ForestHyperparams(16), NAMES)


class TestNetworkModel:
    def test_round_trip_and_shapes(self, rng):
        X, y = dataset(rng)
        hp = MlpHyperparams(32, 64, minibatch=16, max_epochs=5)
        m = train_mlp(X, y, X[:50], y[:50], hp, NAMES, SPEC)
        m.check()
        assert m.params["W1"].shape == (47, 32) and m.params["W3"].shape == (64, 3)
        back = model_from_bytes(model_bytes(m))
        probes = rng.normal(size=(100, 47))
        assert np.array_equal(predict_proba(m, probes), predict_proba(back, probes))

    def test_broken_chain_detected(self, rng):
        X, y = dataset(rng)
        m = train_mlp(X, y, X, y, MlpHyperparams(32, 32, max_epochs=1), NAMES)
        m.params["W2"] = np.zeros((33, 32))
        with pytest.raises(ValueError):
            m.check()


def test_format_version_checked(rng):
    import io
    import json
    import zipfile

    X, y = dataset(rng)
    data = model_bytes(train_forest(X, y, ForestHyperparams(16), NAMES))
    zin = zipfile.ZipFile(io.BytesIO(data))
    out = io.BytesIO()
    with zipfile.ZipFile(out, "w") as zout:
        for item in zin.infolist():
            payload = zin.read(item)
            if item.filename == "meta.json":
                meta = json.loads(payload)
                assert meta["format_version"] == FORMAT_VERSION
                meta["format_version"] = FORMAT_VERSION + 1
                payload = json.dumps(meta).encode()
            zout.writestr(item, payload)
    with pytest.raises(ValueError):
        model_from_bytes(out.getvalue())
