import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from postel.errors import (ConditionNotHeterophilic, ConditionNotHomophilic, ConditionOutOfRange,
                           DegreeTooLarge, InfeasibleSpec, InsufficientPairs, ShapeMismatch)
from postel.graph import build_graph
from postel.smoothing import closed_form_binary_posterior
from postel.stats import ClassStats, LabelState, class_homophily, estimate_conditional, estimate_stats
from postel.synthlab import (SyntheticSpec, _triangle_pairs, block_probabilities,
                             brute_force_posterior, correlated_pairs_graph, generate,
                             independence_report, lemma_suite, oracle_agreement, relative_error,
                             tv_distance, verify_degree_lemmas, verify_lemma_heterophilic,
                             verify_lemma_homophilic)


def test_triangle_pairs_match_enumeration():
    n = 40
    expect = [(i, j) for i in range(n) for j in range(i)]
    i, j = _triangle_pairs(np.arange(len(expect)))
    assert list(zip(i.tolist(), j.tolist())) == expect


def test_triangle_pairs_large_indices():
    idx = np.array([0, 10**9, 10**12, 5 * 10**12])
    i, j = _triangle_pairs(idx)
    assert np.array_equal(i * (i - 1) // 2 + j, idx)
    assert np.all((0 <= j) & (j < i))


def test_block_probabilities_expected_degree():
    sizes = [300, 200]
    c = (0.7, 0.4)
    p = block_probabilities(sizes, c, 6.0)
    within = [p[a, a] * sizes[a] * (sizes[a] - 1) for a in range(2)]
    cross = p[0, 1] * sizes[0] * sizes[1]
    total_deg = sum(within) + 2 * cross
    assert total_deg / sum(sizes) == pytest.approx(6.0)
    for a in range(2):
        assert within[a] / (within[a] + cross) == pytest.approx(c[a])


@pytest.mark.parametrize("c,check", [
    ((0.999, 0.999), lambda h, cond: h.min() >= 0.95 and np.allclose(cond, np.eye(2), atol=0.05)),
    ((0.5, 0.5), lambda h, cond: np.allclose(cond, 0.5, atol=0.05)),
    ((0.05, 0.05), lambda h, cond: np.diag(cond).max() < 0.1),
])
def test_generator_homophily(c, check):
    g, labels, _ = generate(SyntheticSpec(num_nodes=1000, class_homophily=c, seed=0))
    assert check(class_homophily(g, labels), estimate_conditional(g, labels))


def test_generator_three_classes_and_determinism():
    spec = SyntheticSpec(num_nodes=600, num_classes=3, class_homophily=(0.6, 0.3, 0.2), seed=9)
    g1, l1, x1 = generate(spec)
    g2, l2, x2 = generate(spec)
    assert np.array_equal(g1.col_indices, g2.col_indices)
    assert np.array_equal(x1, x2)
    assert np.allclose(class_homophily(g1, l1), [0.6, 0.3, 0.2], atol=0.06)


def test_generator_forbid_isolated():
    g, _, _ = generate(SyntheticSpec(num_nodes=400, avg_degree=1.0, forbid_isolated=True, seed=1))
    assert g.degrees.min() >= 1


@pytest.mark.parametrize("kw", [
    dict(class_homophily=(1.0, 1.0)),
    dict(class_homophily=(0.0, 0.5)),
    dict(num_classes=1, class_homophily=(0.5,)),
    dict(class_homophily=(0.5, 0.5, 0.5)),
    dict(num_nodes=3),
    dict(avg_degree=0.5),
    dict(num_nodes=10, avg_degree=50.0),
])
def test_infeasible_specs(kw):
    with pytest.raises(InfeasibleSpec):
        generate(SyntheticSpec(**kw))


def test_oracle_isolated_and_uniform():
    g = build_graph(3, [(0, 1)])
    labels = LabelState.from_ground_truth(np.array([0, 1, 1]), 2)
    stats = estimate_stats(g, labels)
    assert np.allclose(brute_force_posterior(g, labels, stats, 2), stats.prior)
    uni = ClassStats(stats.prior, np.full((2, 2), 0.5))
    assert np.allclose(brute_force_posterior(g, labels, uni, 0), stats.prior)


def test_oracle_degree_limit():
    g = build_graph(5, [(0, j) for j in range(1, 5)])
    labels = LabelState.from_ground_truth(np.array([0, 1, 1, 0, 1]), 2)
    with pytest.raises(DegreeTooLarge):
        brute_force_posterior(g, labels, estimate_stats(g, labels), 0, max_degree=3)


def test_oracle_agreement_small_run():
    rep = oracle_agreement(trials=40, seed=3)
    assert rep.ok and rep.checked > 0 and rep.max_deviation < 1e-10


def test_corrupted_stats_are_caught():
    rep = oracle_agreement(trials=20, seed=3, corrupt=True)
    assert not rep.ok


def test_relative_error():
    assert relative_error([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert relative_error([1.0, 2.1], [1.0, 2.0]) == pytest.approx(0.05)


def test_homophilic_lemma_examples():
    rep = verify_lemma_homophilic(0.7, 0.7)
    assert rep.ok and rep.checked > 0
    assert verify_lemma_homophilic(0.8, 0.6).ok
    with pytest.raises(ConditionNotHomophilic):
        verify_lemma_homophilic(0.4, 0.4)


def test_heterophilic_lemma_examples():
    assert closed_form_binary_posterior(0.3, 0.3, 2, 1, 0) <= 0.5
    assert closed_form_binary_posterior(0.3, 0.3, 0, 3, 0) > 0.5
    assert verify_lemma_heterophilic(0.2, 0.3).ok
    with pytest.raises(ConditionNotHeterophilic):
        verify_lemma_heterophilic(0.6, 0.6)


def test_degree_lemma_examples():
    d = 6
    post = [closed_form_binary_posterior(0.3, 0.3, a, d - a, 0) for a in range(d + 1)]
    assert all(x > y for x, y in zip(post, post[1:]))
    post = [closed_form_binary_posterior(0.3, 0.3, 1, d - 1, 0) for d in range(2, 11)]
    assert all(x < y for x, y in zip(post, post[1:]))
    assert verify_degree_lemmas(0.49, 0.49).ok
    with pytest.raises(ConditionOutOfRange):
        verify_degree_lemmas(0.5, 0.3)


def test_lemma_suite_runs_clean():
    reports = lemma_suite(trials=5, max_degree=12, seed=1)
    assert len(reports) == 15
    assert all(r.ok for r in reports)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_threshold_lemmas_hold_everywhere(c0, c1):
    if c0 + c1 > 1 + 1e-9:
        assert verify_lemma_homophilic(c0, c1, 12).ok
    elif c0 + c1 < 1 - 1e-9:
        assert verify_lemma_heterophilic(c0, c1, 12).ok


def test_independence_single_class():
    g = build_graph(4, [(0, 1), (0, 2), (0, 3)])
    labels = LabelState.from_ground_truth(np.zeros(4, dtype=int), 1)
    rep = independence_report(g, labels)
    assert rep.max_deviation == 0.0


def test_independence_skips_classes_without_pairs():
    g = build_graph(4, [(0, 1), (0, 2)])
    labels = LabelState.from_ground_truth(np.array([0, 1, 1, 1]), 2)
    rep = independence_report(g, labels)
    assert rep.extra["skipped"] == [1]
    with pytest.raises(InsufficientPairs):
        independence_report(build_graph(2, [(0, 1)]), LabelState.from_ground_truth(np.array([0, 1]), 2))


def test_independence_discriminates():
    g, labels, _ = generate(SyntheticSpec(num_nodes=2000, num_classes=2, class_homophily=(0.7, 0.6),
                                          avg_degree=8.0, seed=5))
    assert independence_report(g, labels).max_deviation <= 0.05
    g2, labels2 = correlated_pairs_graph(300, seed=5)
    assert independence_report(g2, labels2).max_deviation > 0.1


def test_tv_distance():
    assert np.array_equal(tv_distance(np.eye(2), np.eye(2)), [0, 0])
    assert tv_distance([[1, 0]], [[0, 1]])[0] == 1.0
    assert tv_distance([0.7, 0.3], [0.5, 0.5]) == pytest.approx(0.2)
    with pytest.raises(ShapeMismatch):
        tv_distance(np.eye(2), np.eye(3))
