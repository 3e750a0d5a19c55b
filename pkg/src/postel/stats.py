"""Label bookkeeping and global/local label statistics.

All estimators accumulate integer (or degree-weighted) counts first and
divide once, so results do not depend on traversal order.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientPairs, NoLabeledNodes
from .graph import Graph, ego_edges, ego_nodes


class Source(enum.Flag):
    GROUND_TRUTH = enum.auto()
    PSEUDO = enum.auto()


ALL_SOURCES = Source.GROUND_TRUTH | Source.PSEUDO

# status codes stored in LabelState.status
UNKNOWN, GROUND_TRUTH, PSEUDO = 0, 1, 2


@dataclass
class LabelState:
    """Per-node label status.

    ``classes[i]`` is the class id (or -1) and ``status[i]`` one of
    ``UNKNOWN``, ``GROUND_TRUTH``, ``PSEUDO``.
    """

    num_classes: int
    classes: np.ndarray
    status: np.ndarray

    def __post_init__(self):
        self.classes = np.asarray(self.classes, dtype=np.int64)
        self.status = np.asarray(self.status, dtype=np.int8)
        if self.classes.shape != self.status.shape:
            raise ValueError("classes and status must have the same length")
        known = self.status != UNKNOWN
        if np.any(self.classes[known] < 0) or np.any(self.classes[known] >= self.num_classes):
            raise ValueError("class id out of range for a labeled node")
        self.classes = np.where(known, self.classes, -1)

    @classmethod
    def from_ground_truth(cls, y, num_classes=None, mask=None) -> "LabelState":
        """All nodes (or those in ``mask``) labeled GroundTruth with ``y``."""
        y = np.asarray(y, dtype=np.int64)
        if num_classes is None:
            num_classes = int(y.max()) + 1
        status = np.full(y.shape, GROUND_TRUTH, dtype=np.int8)
        if mask is not None:
            status[~np.asarray(mask, dtype=bool)] = UNKNOWN
        status[y < 0] = UNKNOWN
        return cls(num_classes, y, status)

    @property
    def num_nodes(self) -> int:
        return int(self.classes.shape[0])

    def counted(self, sources: Source) -> np.ndarray:
        """Boolean mask of nodes whose status is in ``sources``."""
        mask = np.zeros(self.num_nodes, dtype=bool)
        if Source.GROUND_TRUTH in sources:
            mask |= self.status == GROUND_TRUTH
        if Source.PSEUDO in sources:
            mask |= self.status == PSEUDO
        return mask

    def copy(self) -> "LabelState":
        return LabelState(self.num_classes, self.classes.copy(), self.status.copy())


@dataclass
class ClassStats:
    """Prior vector and neighbor-conditional matrix.

    ``conditional[n, m]`` estimates P(neighbor label = m | center label = n).
    """

    prior: np.ndarray
    conditional: np.ndarray
    counted_sources: Source = Source.GROUND_TRUTH
    edge_counts: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_classes(self) -> int:
        return int(self.prior.shape[0])


def _require_labels(labels: LabelState, sources: Source) -> np.ndarray:
    counted = labels.counted(sources)
    if not counted.any():
        raise NoLabeledNodes(f"no node has a label from {sources}")
    return counted


def _rows_to_stochastic(counts: np.ndarray) -> np.ndarray:
    k = counts.shape[0]
    totals = counts.sum(axis=1, keepdims=True)
    out = np.full(counts.shape, 1.0 / k)
    nz = totals[:, 0] > 0
    out[nz] = counts[nz] / totals[nz]
    return out


def estimate_prior(labels: LabelState, sources: Source = Source.GROUND_TRUTH) -> np.ndarray:
    counted = _require_labels(labels, sources)
    counts = np.bincount(labels.classes[counted], minlength=labels.num_classes)
    return counts / counts.sum()


def _pair_counts(labels: LabelState, counted: np.ndarray, src: np.ndarray,
                 dst: np.ndarray, weights=None) -> np.ndarray:
    k = labels.num_classes
    keep = counted[src] & counted[dst]
    idx = labels.classes[src[keep]] * k + labels.classes[dst[keep]]
    w = None if weights is None else weights[keep]
    counts = np.bincount(idx, weights=w, minlength=k * k).reshape(k, k)
    return counts


def conditional_counts(g: Graph, labels: LabelState,
                       sources: Source = Source.GROUND_TRUTH) -> np.ndarray:
    """Integer K x K counts of directed edges between counted endpoints."""
    counted = _require_labels(labels, sources)
    return _pair_counts(labels, counted, g.edge_sources(), g.col_indices)


def estimate_conditional(g: Graph, labels: LabelState,
                         sources: Source = Source.GROUND_TRUTH) -> np.ndarray:
    """Edge-count estimate of P(Y_j = m | Y_i = n); unobserved rows are uniform."""
    return _rows_to_stochastic(conditional_counts(g, labels, sources))


def estimate_conditional_normalized(g: Graph, labels: LabelState,
                                    sources: Source = Source.GROUND_TRUTH) -> np.ndarray:
    """Like :func:`estimate_conditional` but each edge (u, v) weighs 1/deg(u)."""
    counted = _require_labels(labels, sources)
    src = g.edge_sources()
    deg = g.degrees.astype(np.float64)
    weights = 1.0 / deg[src]
    return _rows_to_stochastic(_pair_counts(labels, counted, src, g.col_indices, weights))


def estimate_conditional_local(g: Graph, labels: LabelState, i: int, hops: int,
                               sources: Source = Source.GROUND_TRUTH) -> np.ndarray:
    """Conditional estimated only from directed edges inside the ``hops``-hop ego graph of ``i``."""
    counted = _require_labels(labels, sources)
    e = ego_edges(g, i, hops)
    return _rows_to_stochastic(_pair_counts(labels, counted, e[:, 0], e[:, 1]))


def estimate_prior_local(g: Graph, labels: LabelState, i: int, hops: int,
                         sources: Source = Source.GROUND_TRUTH) -> np.ndarray:
    """Label frequencies among counted nodes of the ego graph.

    Falls back to the global prior when the ego graph holds no counted node.
    """
    counted = _require_labels(labels, sources)
    nodes = ego_nodes(g, i, hops)
    nodes = nodes[counted[nodes]]
    if nodes.size == 0:
        return estimate_prior(labels, sources)
    counts = np.bincount(labels.classes[nodes], minlength=labels.num_classes)
    return counts / counts.sum()


def estimate_stats(g: Graph, labels: LabelState, sources: Source = Source.GROUND_TRUTH,
                   variant: str = "global") -> ClassStats:
    """Prior plus conditional for the ``global`` or ``normalized`` variant."""
    prior = estimate_prior(labels, sources)
    if variant == "global":
        counts = conditional_counts(g, labels, sources)
        cond = _rows_to_stochastic(counts)
    elif variant == "normalized":
        counts = None
        cond = estimate_conditional_normalized(g, labels, sources)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return ClassStats(prior, cond, sources, counts)


def class_homophily(g: Graph, labels: LabelState) -> np.ndarray:
    """Per-class homophily c_k; NaN marks classes without any counted edge."""
    counts = conditional_counts(g, labels, ALL_SOURCES)
    cond = _rows_to_stochastic(counts)
    c = np.diag(cond).copy()
    c[counts.sum(axis=1) == 0] = np.nan
    return c


def joint_pair_distribution(g: Graph, labels: LabelState, center_class: int,
                            sources: Source = ALL_SOURCES) -> np.ndarray:
    """Empirical P(Y_j = n, Y_k = m | Y_i = l) over unordered labeled-neighbor pairs.

    The result is symmetric and sums to one.
    """
    k = labels.num_classes
    counted = labels.counted(sources)
    src, dst = g.edge_sources(), g.col_indices
    centers = counted & (labels.classes == center_class)
    keep = centers[src] & counted[dst]
    # per-center neighbor label histogram h; pairs with labels {n, m} number
    # h_n h_m for n != m and h_n (h_n - 1) / 2 for n == m
    h = np.bincount(src[keep] * k + labels.classes[dst[keep]],
                    minlength=g.num_nodes * k).reshape(g.num_nodes, k)
    h = h[centers].astype(np.int64)
    pair = h.T @ h
    pair[np.diag_indices(k)] -= h.sum(axis=0)
    total = pair.sum()
    if total == 0:
        raise InsufficientPairs(f"no labeled neighbor pairs around class {center_class}")
    return pair / total
