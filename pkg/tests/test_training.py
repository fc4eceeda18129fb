import dataclasses

import numpy as np
import pytest

from dualtriplet.data import SynthConfig, dataset_from_arrays, gen_synthetic
from dualtriplet.losses import pairwise_distances
from dualtriplet.net import model_to_json
from dualtriplet.training import (
    MisalignmentError,
    TrainConfig,
    adapt,
    loss_rows_from_history,
    make_source_batch,
    make_target_batch,
    mine_source_triplets,
    train_source,
    write_diagnostics_csv,
    write_loss_csv,
)

SMALL_SYNTH = SynthConfig(identities=6, per_identity=6, dim=8, seed=3)
SMALL_TRAIN = TrainConfig(
    persons_per_batch=3,
    images_per_person=4,
    epochs=3,
    alpha=0.5,
    learning_rate=0.01,
    seed=3,
    hidden_dims=(8, 4),
)


@pytest.fixture(scope="module")
def small_world():
    return gen_synthetic(SMALL_SYNTH)


def test_make_source_batch_shape_and_composition(small_world):
    source, _, _ = small_world
    cfg = dataclasses.replace(SMALL_TRAIN, persons_per_batch=5, images_per_person=20)
    x, labels = make_source_batch(source, cfg, np.random.default_rng(0))
    assert x.shape == (100, source.dim)
    assert len(set(labels)) == 5
    counts = {lab: int((labels == lab).sum()) for lab in set(labels)}
    assert all(c == 20 for c in counts.values())


def test_make_source_batch_small_dataset_uses_everything():
    ds = dataset_from_arrays(np.arange(8.0).reshape(4, 2), ["a", "a", "b", "b"])
    cfg = dataclasses.replace(SMALL_TRAIN, persons_per_batch=2, images_per_person=2)
    x, labels = make_source_batch(ds, cfg, np.random.default_rng(1))
    assert sorted(map(tuple, x.tolist())) == sorted(map(tuple, ds.features().tolist()))


def test_make_source_batch_resamples_small_identity():
    rows = np.arange(23 * 2, dtype=float).reshape(23, 2)
    labels = ["a"] * 3 + ["b"] * 20
    ds = dataset_from_arrays(rows, labels)
    cfg = dataclasses.replace(SMALL_TRAIN, persons_per_batch=2, images_per_person=20)
    x, out_labels = make_source_batch(ds, cfg, np.random.default_rng(2))
    assert int((out_labels == "a").sum()) == 20
    a_rows = {tuple(r) for r, lab in zip(x.tolist(), out_labels) if lab == "a"}
    assert a_rows <= {tuple(r) for r in rows[:3].tolist()}
    assert len(a_rows) == 3


def test_make_source_batch_requires_enough_identities():
    ds = dataset_from_arrays(np.zeros((4, 2)), ["a", "a", "b", "b"])
    cfg = dataclasses.replace(SMALL_TRAIN, persons_per_batch=3)
    with pytest.raises(ValueError):
        make_source_batch(ds, cfg, np.random.default_rng(0))


def test_make_target_batch_without_replacement(small_world):
    _, target, _ = small_world
    x, idx = make_target_batch(target, 10, np.random.default_rng(5))
    assert x.shape == (10, target.dim)
    assert len(set(idx.tolist())) == 10


def test_make_target_batch_with_replacement():
    ds = dataset_from_arrays(np.zeros((3, 2)), None, domain="target")
    x, idx = make_target_batch(ds, 10, np.random.default_rng(5))
    assert len(idx) == 10


def test_make_target_batch_deterministic(small_world):
    _, target, _ = small_world
    a = make_target_batch(target, 12, np.random.default_rng(7))[1]
    b = make_target_batch(target, 12, np.random.default_rng(7))[1]
    assert np.array_equal(a, b)


def test_mine_triplets_single_identity_empty():
    emb = np.random.default_rng(0).standard_normal((4, 3))
    trips = mine_source_triplets(emb, np.array(["a"] * 4, dtype=object), 0.2)
    assert trips.shape == (0, 3)


def test_mine_triplets_all_violating_enumeration():
    # identical embeddings violate every margin: 2 ordered (a,p) pairs per
    # identity x 2 negatives x 2 identities = 8 triplets
    emb = np.zeros((4, 3))
    labels = np.array(["a", "a", "b", "b"], dtype=object)
    trips = mine_source_triplets(emb, labels, 0.2)
    expected = [
        [a, p, n]
        for a in range(4)
        for p in range(4)
        if p != a and labels[p] == labels[a]
        for n in range(4)
        if labels[n] != labels[a]
    ]
    assert trips.tolist() == sorted(expected)
    assert len(trips) == 8


def test_mine_triplets_matches_exhaustive_oracle():
    rng = np.random.default_rng(12)
    emb = rng.standard_normal((9, 4))
    labels = np.array([f"p{i % 3}" for i in range(9)], dtype=object)
    alpha = 0.4
    d = pairwise_distances(emb)
    oracle = [
        [a, p, n]
        for a in range(9)
        for p in range(9)
        if p != a and labels[p] == labels[a]
        for n in range(9)
        if labels[n] != labels[a] and d[a, p] - d[a, n] + alpha > 0
    ]
    assert mine_source_triplets(emb, labels, alpha).tolist() == oracle


def test_mine_triplets_deadzone_empty():
    emb = np.array([[0.0, 0], [0.01, 0], [10.0, 0], [10.01, 0]])
    labels = np.array(["a", "a", "b", "b"], dtype=object)
    assert len(mine_source_triplets(emb, labels, 0.2)) == 0


def test_train_source_zero_epochs_returns_initialized_net(small_world):
    source, _, _ = small_world
    cfg = dataclasses.replace(SMALL_TRAIN, epochs=0)
    result = train_source(cfg, source)
    assert result.loss_history == []
    # same seed gives the same initialization
    again = train_source(cfg, source)
    assert model_to_json(result.net) == model_to_json(again.net)


def test_train_source_deterministic(small_world):
    source, _, _ = small_world
    a = train_source(SMALL_TRAIN, source)
    b = train_source(SMALL_TRAIN, source)
    assert model_to_json(a.net) == model_to_json(b.net)
    assert a.loss_history == b.loss_history


def test_train_source_loss_decreases_on_benchmark(source_model):
    history = source_model.loss_history
    assert history[-1] < history[0]


def test_train_source_validation_auc_on_default_run(benchmark_data):
    # default config, identity-disjoint 80/20 split of the benchmark source
    from conftest import verification_auc
    from dualtriplet.data import split_by_identity

    source, _, _ = benchmark_data
    train, val = split_by_identity(source, (0.8, 0.2), seed=7)
    result = train_source(TrainConfig(), train)
    auc = verification_auc(result.net, val.features(), val.labels())
    assert auc > 0.95


def test_adapt_runs_and_reports(small_world):
    source, target, truth = small_world
    init = train_source(SMALL_TRAIN, source).net
    result = adapt(SMALL_TRAIN, source, target, init, target_truth=truth)
    assert len(result.loss_history) == SMALL_TRAIN.epochs
    assert len(result.diagnostics) == SMALL_TRAIN.epochs + 1
    assert result.diagnostics[0].epoch == 0
    assert np.isfinite(result.diagnostics[0].alignment_gap)


def test_adapt_without_truth_reports_nan_target_stats(small_world):
    source, target, _ = small_world
    init = train_source(SMALL_TRAIN, source).net
    result = adapt(SMALL_TRAIN, source, target, init)
    assert np.isnan(result.diagnostics[0].mu_wc_t)
    assert np.isnan(result.diagnostics[-1].alignment_gap)


def test_adapt_deterministic(small_world):
    source, target, truth = small_world
    init = train_source(SMALL_TRAIN, source).net
    a = adapt(SMALL_TRAIN, source, target, init, target_truth=truth)
    b = adapt(SMALL_TRAIN, source, target, init, target_truth=truth)
    assert model_to_json(a.net) == model_to_json(b.net)
    assert a.loss_history == b.loss_history


def test_adapt_does_not_mutate_init(small_world):
    source, target, _ = small_world
    init = train_source(SMALL_TRAIN, source).net
    before = model_to_json(init)
    adapt(SMALL_TRAIN, source, target, init)
    assert model_to_json(init) == before


def test_lambda_zero_bit_identical_to_ls(small_world):
    source, target, _ = small_world
    init = train_source(SMALL_TRAIN, source).net
    lam0 = dataclasses.replace(SMALL_TRAIN, scenario="ls+lt", lambda_=0.0)
    ls = dataclasses.replace(SMALL_TRAIN, scenario="ls")
    a = adapt(lam0, source, target, init)
    b = adapt(ls, source, target, init)
    assert model_to_json(a.net) == model_to_json(b.net)


def test_scenario_lt_aborts_on_gross_misalignment():
    synth = dataclasses.replace(SMALL_SYNTH, translation=30.0)
    source, target, _ = gen_synthetic(synth)
    init = train_source(SMALL_TRAIN, source).net
    cfg = dataclasses.replace(SMALL_TRAIN, scenario="lt")
    with pytest.raises(MisalignmentError):
        adapt(cfg, source, target, init)


def test_shared_net_embeds_both_domains(adapted, benchmark_data):
    source, target, _ = benchmark_data
    net = adapted.net
    # one parameter set serves both domains
    assert net.embed(source.features()).shape[1] == net.embed(target.features()).shape[1]


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(persons_per_batch=1).validate()
    with pytest.raises(ValueError):
        TrainConfig(images_per_person=1).validate()
    with pytest.raises(ValueError):
        TrainConfig(scenario="both").validate()


def test_loss_csv_format(tmp_path):
    rows = loss_rows_from_history([(0.5, 0.25, 0.75), (0.4, 0.2, 0.6)], "ls+lt")
    path = tmp_path / "loss.csv"
    write_loss_csv(path, rows, provenance={"seed": 1})
    lines = path.read_text().split("\n")
    assert lines[0].startswith("# config: ")
    assert lines[1] == "epoch,scenario,source_loss,target_loss,total_loss"
    assert lines[2] == "1,ls+lt,0.5,0.25,0.75"


def test_diagnostics_csv_format(tmp_path, adapted):
    path = tmp_path / "diag.csv"
    write_diagnostics_csv(path, adapted.diagnostics[:3])
    lines = path.read_text().split("\n")
    assert lines[0] == (
        "epoch,n_wc_labeled,n_bc_labeled,mu_wc_s,sigma_wc_s,mu_bc_s,sigma_bc_s,"
        "mu_wc_t,mu_bc_t,alignment_gap"
    )
    assert lines[1].startswith("0,0,0,")
    assert len(lines) == 5  # header + 3 rows + trailing newline


def test_whole_set_stats_mode_runs(small_world):
    source, target, truth = small_world
    cfg = dataclasses.replace(SMALL_TRAIN, whole_set_stats=True, epochs=2)
    init = train_source(SMALL_TRAIN, source).net
    result = adapt(cfg, source, target, init, target_truth=truth)
    assert len(result.loss_history) == 2
