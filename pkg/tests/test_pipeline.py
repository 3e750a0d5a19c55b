import json
from dataclasses import replace

import numpy as np
import pytest

from postel.errors import ClassVanished
from postel.nn import Split, TrainConfig, train
from postel.pipeline import (Ablation, ExperimentConfig, assign_pseudo_labels, build_targets,
                             grid_sweep, iteration_seed, iterative_pseudo_label, run_postel,
                             stratified_split, subsample_train_labels)
from postel.smoothing import uniform_smooth
from postel.stats import GROUND_TRUTH, PSEUDO, UNKNOWN, LabelState, Source
from postel.synthlab import SyntheticSpec, generate

FAST = TrainConfig(max_epochs=60, patience=20)


@pytest.fixture(scope="module")
def data():
    g, labels, x = generate(SyntheticSpec(num_nodes=200, class_homophily=(0.8, 0.8), seed=11))
    y = labels.classes
    return g, x, y, stratified_split(y, 0)


def test_pseudo_labels():
    labels = LabelState(2, [1, -1, -1], [GROUND_TRUTH, UNKNOWN, UNKNOWN])
    split = Split([0], [1], [2])
    probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.5, 0.5]])
    out = assign_pseudo_labels(probs, split, labels)
    assert out.classes.tolist() == [1, 1, 0]
    assert out.status.tolist() == [GROUND_TRUTH, PSEUDO, PSEUDO]
    assert labels.status[1] == UNKNOWN


def test_subsample_identity_and_counts():
    y = np.repeat([0, 1], 60)
    split = stratified_split(y, 1, fractions=(100 / 120, 10 / 120, 10 / 120))
    assert split.train.size == 100
    labels = LabelState.from_ground_truth(y, 2, np.isin(np.arange(120), split.train))
    same = subsample_train_labels(labels, split, 1.0, 0)
    assert np.array_equal(same.status, labels.status)
    sub = subsample_train_labels(labels, split, 0.1, 0)
    kept = np.flatnonzero(sub.status == GROUND_TRUTH)
    assert kept.size == 10
    assert set(sub.classes[kept]) == {0, 1}
    assert np.all(np.isin(kept, split.train))
    again = subsample_train_labels(labels, split, 0.1, 0)
    assert np.array_equal(again.status, sub.status)


def test_subsample_warns_when_class_vanishes():
    y = np.array([0] * 10 + [1, 1, 1])
    split = Split(np.arange(13), [], [])
    labels = LabelState.from_ground_truth(y, 3)
    with pytest.warns(ClassVanished):
        subsample_train_labels(labels, split, 1 / 13, 0)


def test_stratified_split_sizes():
    y = np.arange(500) % 2
    s = stratified_split(y, 3)
    assert (s.train.size, s.val.size, s.test.size) == (300, 100, 100)
    assert np.array_equal(stratified_split(y, 3).train, s.train)


def test_iteration_seed():
    assert iteration_seed(7, 0) == 7
    assert iteration_seed(7, 1) != iteration_seed(7, 2)


def test_config_validation():
    for kw in (dict(alpha=1.5), dict(beta=-1), dict(label_fraction=0), dict(method="x"),
               dict(variant="local:0"), dict(variant="nope")):
        with pytest.raises(ValueError):
            ExperimentConfig(**kw)


def test_all_off_equals_plain_onehot_training(data):
    g, x, y, split = data
    off = Ablation(False, False, False)
    res = iterative_pseudo_label(g, x, y, split, ExperimentConfig(ablation=off, trainer=FAST))
    _, hist = train(g, x, np.eye(2)[y], split, FAST, y=y)
    assert res.iterations_used == 0
    assert res.iterations[0].history == hist


def test_noise_without_posterior_is_uniform_smoothing(data):
    g, x, y, split = data
    alpha, beta = 0.6, 0.5
    labels = LabelState.from_ground_truth(y, 2, np.isin(np.arange(y.size), split.train))
    cfg = ExperimentConfig(alpha=alpha, beta=beta, ablation=Ablation(False, True, False))
    targets, _ = build_targets(g, labels, y, split.train, cfg, Source.GROUND_TRUTH)
    eps = alpha * beta / (1 + beta)
    for i in split.train[:20]:
        assert np.allclose(targets[i], uniform_smooth(y[i], eps, 2), atol=1e-15)
    ref = replace(cfg, method="uniform", alpha=eps, trainer=FAST)
    a = iterative_pseudo_label(g, x, y, split, replace(cfg, trainer=FAST))
    b = iterative_pseudo_label(g, x, y, split, ref)
    assert a.iterations[0].val_loss == pytest.approx(b.iterations[0].val_loss, rel=1e-9)


def test_zero_iterations_equals_run_postel(data):
    g, x, y, split = data
    cfg = ExperimentConfig(trainer=FAST)
    a = iterative_pseudo_label(g, x, y, split, replace(cfg, max_pl_iterations=0))
    b = run_postel(g, x, y, split, cfg)
    assert a.to_dict(include_wallclock=False) == b.to_dict(include_wallclock=False)


def test_iterative_result_structure(data):
    g, x, y, split = data
    res = iterative_pseudo_label(g, x, y, split, ExperimentConfig(trainer=FAST, max_pl_iterations=4))
    assert 0 <= res.iterations_used <= 4
    assert len(res.iterations) == res.iterations_used + 1
    best = res.iterations[res.best_iteration]
    assert best.val_loss == min(r.val_loss for r in res.iterations)
    assert res.final_test_accuracy == best.test_accuracy
    # the loop stops at the first rejected iteration
    assert all(r.accepted for r in res.iterations[:-1])
    d = json.loads(res.to_json())
    assert set(d) == {"config", "iterations", "best_iteration", "final_test_accuracy",
                      "iterations_used", "wallclock_seconds"}
    assert d["iterations"][0]["stats"]["sources"] == ["ground_truth"]
    if res.iterations_used:
        assert d["iterations"][1]["stats"]["sources"] == ["ground_truth", "pseudo"]


def test_pipeline_is_deterministic(data):
    g, x, y, split = data
    cfg = ExperimentConfig(trainer=FAST, max_pl_iterations=2)
    a = iterative_pseudo_label(g, x, y, split, cfg).to_json(include_wallclock=False)
    b = iterative_pseudo_label(g, x, y, split, cfg).to_json(include_wallclock=False)
    assert a == b


@pytest.mark.parametrize("variant", ["normalized", "local:1"])
def test_variants_run(data, variant):
    g, x, y, split = data
    res = run_postel(g, x, y, split, ExperimentConfig(variant=variant, trainer=FAST))
    assert 0 <= res.final_test_accuracy <= 1


@pytest.mark.parametrize("method", ["onehot", "uniform", "neighbor"])
def test_baseline_targets_are_distributions(data, method):
    g, x, y, split = data
    labels = LabelState.from_ground_truth(y, 2, np.isin(np.arange(y.size), split.train))
    cfg = ExperimentConfig(method=method, alpha=0.3)
    t, _ = build_targets(g, labels, y, split.train, cfg, Source.GROUND_TRUTH)
    assert np.allclose(t.sum(axis=1), 1, atol=1e-12)
    assert np.all(t[split.train].argmax(axis=1) == y[split.train])


def test_label_fraction_limits_ground_truth(data):
    g, x, y, split = data
    res = run_postel(g, x, y, split, ExperimentConfig(label_fraction=0.1, trainer=FAST))
    assert res.iterations[0].stats["num_ground_truth"] == int(np.ceil(0.1 * split.train.size))


def test_single_cell_grid_equals_single_run(data):
    g, x, y, split = data
    base = ExperimentConfig(trainer=FAST, max_pl_iterations=1)
    best, table = grid_sweep(g, x, y, split, base, (0.4,), (0.2,))
    res = iterative_pseudo_label(g, x, y, split, replace(base, alpha=0.4, beta=0.2))
    assert len(table) == 1
    assert table[0]["best_val_loss"] == res.best_val_loss
    assert table[0]["test_acc"] == res.final_test_accuracy
    assert (best.alpha, best.beta) == (0.4, 0.2)


def test_grid_selection_ignores_order(data):
    g, x, y, split = data
    base = ExperimentConfig(trainer=replace(FAST, max_epochs=20), max_pl_iterations=0)
    b1, _ = grid_sweep(g, x, y, split, base, (0.2, 0.6), (0.0, 0.3))
    b2, _ = grid_sweep(g, x, y, split, base, (0.6, 0.2), (0.3, 0.0))
    assert (b1.alpha, b1.beta) == (b2.alpha, b2.beta)


def test_grid_ties_prefer_small_alpha_then_beta(data):
    g, x, y, split = data
    # with posterior smoothing and noise off every cell trains on one-hot targets
    base = ExperimentConfig(trainer=replace(FAST, max_epochs=10),
                            ablation=Ablation(False, False, False))
    best, table = grid_sweep(g, x, y, split, base, (0.9, 0.5), (0.4, 0.1))
    assert len({r["best_val_loss"] for r in table}) == 1
    assert (best.alpha, best.beta) == (0.5, 0.1)


def test_full_grid_cells_reproduce():
    g, labels, x = generate(SyntheticSpec(num_nodes=200, class_homophily=(0.3, 0.3), seed=2))
    y = labels.classes
    split = stratified_split(y, 2)
    base = ExperimentConfig(trainer=TrainConfig(max_epochs=15, patience=5), max_pl_iterations=1)
    best, table = grid_sweep(g, x, y, split, base)
    assert len(table) == 100
    for row in table[::7] + [next(r for r in table if (r["alpha"], r["beta"]) == (best.alpha, best.beta))]:
        res = iterative_pseudo_label(g, x, y, split, replace(base, alpha=row["alpha"], beta=row["beta"]))
        assert res.best_val_loss == row["best_val_loss"]
        assert res.final_test_accuracy == row["test_acc"]
        assert res.iterations_used == row["iterations_used"]


def test_parallel_sweep_matches_serial(data):
    g, x, y, split = data
    base = ExperimentConfig(trainer=replace(FAST, max_epochs=15), max_pl_iterations=0)
    _, serial = grid_sweep(g, x, y, split, base, (0.3, 0.7), (0.1,))
    _, par = grid_sweep(g, x, y, split, base, (0.3, 0.7), (0.1,), n_jobs=2)
    assert serial == par


def test_postel_helps_on_homophilic_graphs():
    onehot, postel = [], []
    for seed in range(10):
        g, labels, x = generate(SyntheticSpec(num_nodes=500, class_homophily=(0.9, 0.9),
                                              feature_signal=0.5, seed=seed))
        y = labels.classes
        split = stratified_split(y, seed)
        tr = TrainConfig(max_epochs=100, patience=30, seed=seed)
        onehot.append(run_postel(g, x, y, split, ExperimentConfig(method="onehot", trainer=tr))
                      .final_test_accuracy)
        postel.append(iterative_pseudo_label(g, x, y, split, ExperimentConfig(trainer=tr))
                      .final_test_accuracy)
    assert np.mean(postel) >= np.mean(onehot)
