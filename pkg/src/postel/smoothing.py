"""Posterior label smoothing and the baselines it is compared against."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DegenerateHomophily
from .graph import Graph
from .stats import (ClassStats, LabelState, Source, estimate_conditional_local,
                    estimate_prior_local)

DEFAULT_FLOOR = 1e-12

POSTERIOR, BLENDED, ONE_HOT, BASELINE = "Posterior", "Blended", "OneHot", "Baseline"


@dataclass
class SoftLabels:
    """N x K row-stochastic targets with a provenance tag per row."""

    matrix: np.ndarray
    provenance: np.ndarray

    @property
    def num_classes(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self):
        return int(self.matrix.shape[0])


def _neighbor_histogram(g: Graph, labels: LabelState, counted: np.ndarray) -> np.ndarray:
    """N x K integer counts of counted-neighbor labels for every node."""
    k = labels.num_classes
    src, dst = g.edge_sources(), g.col_indices
    keep = counted[dst]
    idx = src[keep] * k + labels.classes[dst[keep]]
    return np.bincount(idx, minlength=g.num_nodes * k).reshape(g.num_nodes, k)


def _log_likelihood_table(conditional: np.ndarray, floor: float) -> np.ndarray:
    # floor is applied inside the log only; ClassStats stays exact
    return np.log(np.maximum(conditional, floor))


def _normalize_log(logpost: np.ndarray) -> np.ndarray:
    shift = np.max(logpost, axis=-1, keepdims=True)
    w = np.exp(logpost - shift)
    return w / w.sum(axis=-1, keepdims=True)


def posterior_one(g: Graph, labels: LabelState, stats: ClassStats, i: int,
                  floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """Posterior over node ``i``'s class given its labeled neighbors.

    A node without labeled neighbors gets an exact copy of the prior.
    """
    counted = labels.counted(stats.counted_sources)
    nbrs = g.neighbors(i)
    nbrs = nbrs[counted[nbrs]]
    if nbrs.size == 0:
        return stats.prior.copy()
    hist = np.bincount(labels.classes[nbrs], minlength=labels.num_classes)
    table = _log_likelihood_table(stats.conditional, floor)
    with np.errstate(divide="ignore"):
        logpost = np.log(stats.prior) + table @ hist
    return _normalize_log(logpost)


def posterior_all(g: Graph, labels: LabelState, stats: ClassStats,
                  floor: float = DEFAULT_FLOOR) -> SoftLabels:
    """Posterior for every node in O((|E| + |V|) K) plus one N x K x K product."""
    counted = labels.counted(stats.counted_sources)
    hist = _neighbor_histogram(g, labels, counted)
    table = _log_likelihood_table(stats.conditional, floor)
    with np.errstate(divide="ignore"):
        logpost = np.log(stats.prior)[None, :] + hist @ table.T
    out = _normalize_log(logpost)
    isolated = hist.sum(axis=1) == 0
    out[isolated] = stats.prior
    prov = np.full(g.num_nodes, POSTERIOR, dtype=object)
    return SoftLabels(out, prov)


def posterior_all_local(g: Graph, labels: LabelState, hops: int, sources,
                        floor: float = DEFAULT_FLOOR) -> SoftLabels:
    """Posteriors whose prior and conditional come from each node's own ego graph."""
    n, k = g.num_nodes, labels.num_classes
    out = np.empty((n, k))
    for i in range(n):
        stats = ClassStats(estimate_prior_local(g, labels, i, hops, sources),
                           estimate_conditional_local(g, labels, i, hops, sources),
                           sources)
        out[i] = posterior_one(g, labels, stats, i, floor)
    return SoftLabels(out, np.full(n, POSTERIOR, dtype=object))


def blend(post, true_label: int, alpha: float, beta: float) -> np.ndarray:
    """Mix a posterior with uniform noise and the one-hot label.

    The noisy posterior is ``(post + beta / K) / (1 + beta)``; the result
    is ``alpha * noisy + (1 - alpha) * onehot``.
    """
    post = np.asarray(post, dtype=np.float64)
    k = post.shape[-1]
    noisy = (post + beta / k) / (1.0 + beta)
    onehot = np.zeros(k)
    onehot[true_label] = 1.0
    return alpha * noisy + (1.0 - alpha) * onehot


def blend_rows(post: np.ndarray, true_labels: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Vectorized :func:`blend` over rows."""
    n, k = post.shape
    noisy = (post + beta / k) / (1.0 + beta)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), true_labels] = 1.0
    return alpha * noisy + (1.0 - alpha) * onehot


def uniform_smooth(true_label: int, eps: float, num_classes: int) -> np.ndarray:
    """Classic label smoothing ``(1 - eps) * onehot + eps / K``.

    Mass ``eps`` is spread over all K classes, so the true class keeps a
    strict maximum for every ``eps < 1``; at ``eps = 1`` the target is
    uniform. With ``eps = 1 - 1/K`` the true class holds ``2/K - 1/K**2``.
    """
    out = np.full(num_classes, eps / num_classes)
    out[true_label] += 1.0 - eps
    return out


def neighbor_aggregate_smooth(g: Graph, labels: LabelState, i: int, alpha: float,
                              sources=None) -> np.ndarray:
    """Aggregation baseline: alpha * neighbor label histogram + (1 - alpha) * onehot."""
    k = labels.num_classes
    counted = labels.counted(sources or Source.GROUND_TRUTH)
    nbrs = g.neighbors(i)
    nbrs = nbrs[counted[nbrs]]
    if nbrs.size:
        hist = np.bincount(labels.classes[nbrs], minlength=k) / nbrs.size
    else:
        hist = np.full(k, 1.0 / k)
    onehot = np.zeros(k)
    onehot[labels.classes[i]] = 1.0
    return alpha * hist + (1.0 - alpha) * onehot


def binary_log_odds(c0: float, c1: float, a: int, b: int, k: int) -> float:
    """log P(k | nbrs) - log P(1-k | nbrs) under a balanced prior.

    ``a`` neighbors carry label k and ``b`` carry label 1-k.
    """
    for c in (c0, c1):
        if not 0.0 < c < 1.0:
            raise DegenerateHomophily(f"class homophily {c} must lie strictly in (0, 1)")
    ck, co = (c0, c1) if k == 0 else (c1, c0)
    return (a * np.log(ck) + b * np.log1p(-ck)) - (b * np.log(co) + a * np.log1p(-co))


def closed_form_binary_posterior(c0: float, c1: float, a: int, b: int, k: int) -> float:
    """Binary posterior of class ``k`` written in terms of class homophily."""
    return float(expit(binary_log_odds(c0, c1, a, b, k)))
