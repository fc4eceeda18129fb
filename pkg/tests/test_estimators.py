import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dualtriplet.data import SynthConfig, gen_synthetic
from dualtriplet.estimators import DualTripletAdapter, PairVerifier, TripletEmbedder
from dualtriplet.net import model_to_json


@pytest.fixture(scope="module")
def toy_domains():
    source, target, truth = gen_synthetic(
        SynthConfig(identities=5, per_identity=6, dim=6, seed=13)
    )
    xs = source.features()
    ys = np.asarray(source.labels(), dtype=object)
    xt = target.features()
    yt = np.asarray([truth[s.id] for s in target.samples], dtype=object)
    return xs, ys, xt, yt


FAST = dict(
    persons_per_batch=3, images_per_person=4, epochs=3,
    hidden_dims=(6, 3), learning_rate=0.01, seed=5,
)


def test_embedder_fit_transform(toy_domains):
    xs, ys, _, _ = toy_domains
    emb = TripletEmbedder(**FAST).fit(xs, ys)
    out = emb.transform(xs)
    assert out.shape == (len(xs), 3)
    assert np.allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-9)
    assert 0.0 <= emb.score(xs, ys) <= 1.0


def test_embedder_requires_fit(toy_domains):
    xs, _, _, _ = toy_domains
    with pytest.raises(NotFittedError):
        TripletEmbedder(**FAST).transform(xs)


def test_embedder_clone_and_params(toy_domains):
    xs, ys, _, _ = toy_domains
    est = TripletEmbedder(**FAST)
    params = est.get_params()
    assert params["epochs"] == 3
    dup = clone(est)
    assert dup.get_params() == params
    a = est.fit(xs, ys)
    b = dup.fit(xs, ys)
    assert model_to_json(a.net_) == model_to_json(b.net_)


def test_embedder_set_params(toy_domains):
    est = TripletEmbedder(**FAST).set_params(epochs=1, seed=9)
    assert est.get_params()["epochs"] == 1
    assert est.get_params()["seed"] == 9


def test_embedder_validates_inputs():
    with pytest.raises(ValueError):
        TripletEmbedder(**FAST).fit(np.zeros((4, 2, 1)), ["a"] * 4)
    with pytest.raises(ValueError):
        TripletEmbedder(**FAST).fit(np.zeros((4, 2)), ["a"] * 3)


def test_adapter_fit_and_transform(toy_domains):
    xs, ys, xt, yt = toy_domains
    est = DualTripletAdapter(pretrain_epochs=3, **FAST).fit(xs, ys, X_target=xt)
    out = est.transform(xt)
    assert out.shape == (len(xt), 3)
    assert est.initial_net_ is not est.net_
    assert len(est.diagnostics_) == FAST["epochs"] + 1
    assert 0.0 <= est.score(xt, yt) <= 1.0


def test_adapter_requires_target(toy_domains):
    xs, ys, _, _ = toy_domains
    with pytest.raises(ValueError):
        DualTripletAdapter(**FAST).fit(xs, ys)


def test_adapter_clone_deterministic(toy_domains):
    xs, ys, xt, _ = toy_domains
    est = DualTripletAdapter(pretrain_epochs=2, **FAST)
    a = clone(est).fit(xs, ys, X_target=xt)
    b = clone(est).fit(xs, ys, X_target=xt)
    assert model_to_json(a.net_) == model_to_json(b.net_)


def test_verifier_predicts_classes():
    rng = np.random.default_rng(6)
    x = np.vstack([rng.uniform(0, 0.2, (40, 3)), rng.uniform(0.8, 1.0, (40, 3))])
    y = np.concatenate([np.ones(40), np.zeros(40)])
    clf = PairVerifier(epochs=200, seed=3).fit(x, y)
    assert clf.classes_.tolist() == [0, 1]
    proba = clf.predict_proba(x)
    assert proba.shape == (80, 2)
    assert np.allclose(proba.sum(axis=1), 1.0)
    assert (clf.predict(x) == y).mean() == 1.0
    assert 0.0 <= clf.score(x, y) <= 1.0


def test_verifier_clone_roundtrip():
    est = PairVerifier(hidden_dim=8, epochs=50)
    assert clone(est).get_params() == est.get_params()
