"""Synthetic graphs with controlled class homophily, plus brute-force oracles
and exhaustive checks of the binary posterior lemmas."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (ConditionNotHeterophilic, ConditionNotHomophilic,
                     ConditionOutOfRange, DegreeTooLarge, InfeasibleSpec,
                     InsufficientPairs, ShapeMismatch)
from .graph import Graph, build_graph
from .smoothing import (DEFAULT_FLOOR, binary_log_odds, closed_form_binary_posterior,
                        posterior_one)
from .stats import (ALL_SOURCES, GROUND_TRUTH, PSEUDO, UNKNOWN, ClassStats, LabelState,
                    Source, estimate_conditional, estimate_stats, joint_pair_distribution)

# log-odds closer to the decision threshold than this are treated as ties
TIE_TOL = 1e-9


@dataclass
class SyntheticSpec:
    num_nodes: int = 500
    num_classes: int = 2
    class_homophily: tuple = (0.8, 0.8)
    avg_degree: float = 5.0
    feature_dim: int = 16
    feature_signal: float = 1.0
    balanced: bool = True
    seed: int = 0
    forbid_isolated: bool = False

    def __post_init__(self):
        c = tuple(float(x) for x in np.atleast_1d(self.class_homophily))
        if len(c) == 1:
            c = c * self.num_classes
        self.class_homophily = c

    def validate(self):
        if self.num_classes < 2:
            raise InfeasibleSpec("need at least two classes")
        if len(self.class_homophily) != self.num_classes:
            raise InfeasibleSpec("one homophily value per class is required")
        for c in self.class_homophily:
            if not 0.0 < c < 1.0:
                raise InfeasibleSpec(f"class homophily {c} must lie strictly in (0, 1)")
        if self.avg_degree < 1:
            raise InfeasibleSpec("avg_degree must be >= 1")
        if self.num_nodes < 2 * self.num_classes:
            raise InfeasibleSpec("need at least two nodes per class")
        if self.feature_dim < 1:
            raise InfeasibleSpec("feature_dim must be >= 1")


def block_probabilities(sizes, homophily, avg_degree) -> np.ndarray:
    """Edge probabilities between (and within) classes.

    Class k gets total degree D_k proportional to 1 / (1 - c_k); a fraction c_k
    of it stays inside the class and the rest is spread evenly over the other
    classes, which keeps the cross-class edge counts symmetric.
    """
    sizes = np.asarray(sizes, dtype=np.float64)
    c = np.asarray(homophily, dtype=np.float64)
    k = c.size
    n = sizes.sum()
    t = avg_degree * n / np.sum(1.0 / (1.0 - c))
    probs = np.empty((k, k))
    for a in range(k):
        for b in range(k):
            if a == b:
                # expected within-class degree sum t c / (1 - c) over ordered pairs
                probs[a, a] = t * c[a] / (1.0 - c[a]) / (sizes[a] * (sizes[a] - 1))
            else:
                probs[a, b] = t / (k - 1) / (sizes[a] * sizes[b])
    if np.any(probs > 1.0) or np.any(probs < 0.0):
        raise InfeasibleSpec(f"block probabilities outside [0, 1]: max {probs.max():.3f}")
    return probs


def _triangle_pairs(idx: np.ndarray):
    # linear index t -> (i, j) with j < i over the strict lower triangle
    i = np.floor((np.sqrt(8.0 * idx + 1.0) + 1.0) / 2.0).astype(np.int64)
    # guard against rounding at block boundaries
    i -= (i * (i - 1) // 2) > idx
    i += ((i + 1) * i // 2) <= idx
    j = idx - i * (i - 1) // 2
    return i, j


def _sample_block(rng, members_a, members_b, p, same):
    if same:
        total = len(members_a) * (len(members_a) - 1) // 2
    else:
        total = len(members_a) * len(members_b)
    m = rng.binomial(total, p)
    if m == 0:
        return np.empty((0, 2), dtype=np.int64)
    picks = rng.choice(total, size=m, replace=False)
    if same:
        i, j = _triangle_pairs(picks)
        return np.column_stack([members_a[i], members_a[j]])
    return np.column_stack([members_a[picks // len(members_b)], members_b[picks % len(members_b)]])


def generate(spec: SyntheticSpec):
    """Sample (graph, fully labeled LabelState, features) from a block model."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, k = spec.num_nodes, spec.num_classes
    if spec.balanced:
        y = np.arange(n) % k
    else:
        y = rng.integers(0, k, size=n)
    members = [np.flatnonzero(y == a) for a in range(k)]
    if any(len(m) < 2 for m in members):
        raise InfeasibleSpec("a class ended up with fewer than two nodes")
    probs = block_probabilities([len(m) for m in members], spec.class_homophily, spec.avg_degree)
    chunks = []
    for a in range(k):
        for b in range(a, k):
            chunks.append(_sample_block(rng, members[a], members[b], probs[a, b], a == b))
    edges = np.concatenate(chunks)

    if spec.forbid_isolated:
        deg = np.bincount(edges.ravel(), minlength=n)
        extra = []
        c = np.asarray(spec.class_homophily)
        for u in np.flatnonzero(deg == 0):
            ku = y[u]
            w = np.full(k, (1.0 - c[ku]) / (k - 1))
            w[ku] = c[ku]
            target_class = rng.choice(k, p=w)
            pool = members[target_class]
            v = u
            while v == u:
                v = rng.choice(pool)
            extra.append((u, v))
        if extra:
            edges = np.concatenate([edges, np.asarray(extra, dtype=np.int64)])

    g = build_graph(n, edges)
    labels = LabelState.from_ground_truth(y, k)
    features = class_features(rng, y, k, spec.feature_dim, spec.feature_signal)
    return g, labels, features


def class_features(rng, y, num_classes, dim, signal) -> np.ndarray:
    """Unit Gaussian noise around class means that sit ``signal`` apart."""
    if dim >= num_classes:
        dirs = np.eye(num_classes, dim)
    else:
        dirs = rng.normal(size=(num_classes, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = dirs * (signal / math.sqrt(2.0))
    return means[y] + rng.normal(size=(len(y), dim))


def correlated_pairs_graph(num_groups: int, seed: int = 0):
    """Stars with two leaves whose labels always agree.

    Each center is class 0 or 1 at random and both its leaves share one
    random label, so neighbor labels are perfectly correlated given the center.
    """
    rng = np.random.default_rng(seed)
    n = 3 * num_groups
    y = np.empty(n, dtype=np.int64)
    edges = []
    for gidx in range(num_groups):
        c, l1, l2 = 3 * gidx, 3 * gidx + 1, 3 * gidx + 2
        y[c] = rng.integers(2)
        y[l1] = y[l2] = rng.integers(2)
        edges += [(c, l1), (c, l2)]
    return build_graph(n, edges), LabelState.from_ground_truth(y, 2)


def brute_force_posterior(g: Graph, labels: LabelState, stats: ClassStats, i: int,
                          floor: float = DEFAULT_FLOOR, max_degree: int = 30) -> np.ndarray:
    """Exact rational Bayes: prior times the literal product of conditionals."""
    nbrs = g.neighbors(i)
    if nbrs.size > max_degree:
        raise DegreeTooLarge(f"node {i} has degree {nbrs.size} > {max_degree}")
    counted = labels.counted(stats.counted_sources)
    k = labels.num_classes
    fl = Fraction(floor)
    cond = [[max(Fraction(float(x)), fl) for x in row] for row in stats.conditional]
    unnorm = []
    for c in range(k):
        p = Fraction(float(stats.prior[c]))
        for j in nbrs:
            if counted[j]:
                p *= cond[c][labels.classes[j]]
        unnorm.append(p)
    total = sum(unnorm)
    return np.array([float(u / total) for u in unnorm])


def relative_error(a, b) -> float:
    """Max-norm relative error ``||a - b||_inf / ||b||_inf``."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


@dataclass
class Report:
    name: str
    params: dict
    violations: list = field(default_factory=list)
    checked: int = 0
    max_deviation: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


def _threshold_ratio(c0, c1, k):
    ck, co = (c0, c1) if k == 0 else (c1, c0)
    return (math.log(co) - math.log(1 - ck)) / (math.log(ck) - math.log(1 - co))


def _verify_threshold_lemma(name, c0, c1, max_degree, homophilic):
    report = Report(name, dict(c0=c0, c1=c1, max_degree=max_degree))
    ties = 0
    for k in (0, 1):
        ratio = _threshold_ratio(c0, c1, k)
        for a in range(max_degree + 1):
            for b in range(max_degree + 1 - a):
                lo = binary_log_odds(c0, c1, a, b, k)
                gap = a - b * ratio
                if abs(lo) < TIE_TOL * (1 + a + b) or abs(gap) < TIE_TOL * (1 + a + b):
                    # exact ties sit on the boundary where neither side is strict
                    ties += 1
                    if (abs(lo) < TIE_TOL * (1 + a + b)) != (abs(gap) < TIE_TOL * (1 + a + b)):
                        report.violations.append(dict(k=k, a=a, b=b, reason="tie mismatch"))
                    continue
                posterior_high = lo > 0
                predicted = gap > 0 if homophilic else gap < 0
                report.checked += 1
                if posterior_high != predicted:
                    report.violations.append(dict(
                        k=k, a=a, b=b,
                        posterior=closed_form_binary_posterior(c0, c1, a, b, k),
                        threshold=b * ratio))
    report.extra["ties"] = ties
    return report


def verify_lemma_homophilic(c0: float, c1: float, max_degree: int = 20) -> Report:
    """Posterior of k exceeds 1/2 iff a > b * ratio, checked for every a + b <= max_degree."""
    if not (c0 + c1 > 1.0 and 0 < c0 < 1 and 0 < c1 < 1):
        raise ConditionNotHomophilic(f"need c0 + c1 > 1, got {c0} + {c1}")
    return _verify_threshold_lemma("lemma_homophilic", c0, c1, max_degree, True)


def verify_lemma_heterophilic(c0: float, c1: float, max_degree: int = 20) -> Report:
    """Reversed threshold condition when c0 + c1 < 1."""
    if not (c0 + c1 < 1.0 and 0 < c0 < 1 and 0 < c1 < 1):
        raise ConditionNotHeterophilic(f"need c0 + c1 < 1, got {c0} + {c1}")
    return _verify_threshold_lemma("lemma_heterophilic", c0, c1, max_degree, False)


def verify_degree_lemmas(c0: float, c1: float, max_degree: int = 20) -> Report:
    """Monotonicity in the heterophilic regime 0 < c0, c1 < 1/2.

    For a fixed degree the posterior of k falls as more neighbors carry k; for
    a fixed number of k-neighbors it rises with the degree. Comparisons are
    made on log-odds, a strictly increasing transform of the posterior that
    does not saturate in float64.
    """
    if not (0 < c0 < 0.5 and 0 < c1 < 0.5):
        raise ConditionOutOfRange(f"need 0 < c0, c1 < 0.5, got {c0}, {c1}")
    report = Report("degree_lemmas", dict(c0=c0, c1=c1, max_degree=max_degree))
    for k in (0, 1):
        for d in range(max_degree + 1):
            lo = [binary_log_odds(c0, c1, a, d - a, k) for a in range(d + 1)]
            for a in range(d):
                report.checked += 1
                if not lo[a + 1] < lo[a]:
                    report.violations.append(dict(lemma="same_degree", k=k, d=d, a=a))
        for a in range(max_degree + 1):
            lo = [binary_log_odds(c0, c1, a, d - a, k) for d in range(a, max_degree + 1)]
            for s in range(len(lo) - 1):
                report.checked += 1
                if not lo[s + 1] > lo[s]:
                    report.violations.append(dict(lemma="diff_degree", k=k, a=a, d=a + s))
    return report


def independence_report(g: Graph, labels: LabelState, sources=ALL_SOURCES) -> Report:
    """Compare joint neighbor-pair label distributions with products of conditionals.

    Classes without any neighbor pair are listed under ``extra['skipped']``;
    if every class lacks pairs :class:`InsufficientPairs` is raised.
    """
    cond = estimate_conditional(g, labels, sources)
    report = Report("independence", dict(num_nodes=g.num_nodes, num_classes=labels.num_classes))
    per_class, skipped = {}, []
    for l in range(labels.num_classes):
        try:
            joint = joint_pair_distribution(g, labels, l, sources)
        except InsufficientPairs:
            skipped.append(l)
            continue
        product = np.outer(cond[l], cond[l])
        diff = joint - product
        per_class[l] = dict(joint=joint.tolist(), product=product.tolist(),
                            max_abs=float(np.abs(diff).max()),
                            frobenius=float(np.linalg.norm(diff)))
    if not per_class:
        raise InsufficientPairs("no class has labeled neighbor pairs")
    report.max_deviation = max(v["max_abs"] for v in per_class.values())
    report.checked = len(per_class)
    report.extra = dict(per_class=per_class, skipped=skipped)
    return report


def tv_distance(p, q) -> np.ndarray:
    """Row-wise total variation distance between two row-stochastic matrices."""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeMismatch(f"{p.shape} vs {q.shape}")
    return 0.5 * np.abs(p - q).sum(axis=-1)


def random_small_instance(rng: np.random.Generator, max_nodes: int = 50, max_classes: int = 5):
    """Random graph, partial labels and estimated stats for oracle comparisons."""
    n = int(rng.integers(2, max_nodes + 1))
    k = int(rng.integers(2, max_classes + 1))
    p = rng.uniform(0.02, 0.3)
    iu = np.triu_indices(n, 1)
    keep = rng.random(iu[0].size) < p
    g = build_graph(n, np.column_stack([iu[0][keep], iu[1][keep]]))
    y = rng.integers(0, k, size=n)
    status = rng.choice([GROUND_TRUTH, PSEUDO, UNKNOWN], size=n, p=[0.5, 0.25, 0.25])
    status[rng.integers(n)] = GROUND_TRUTH
    labels = LabelState(k, y, status)
    sources = Source.GROUND_TRUTH if rng.random() < 0.5 else ALL_SOURCES
    stats = estimate_stats(g, labels, sources)
    return g, labels, stats


def oracle_agreement(trials: int = 1000, seed: int = 0, max_nodes: int = 50,
                     max_classes: int = 5, tol: float = 1e-10, corrupt: bool = False) -> Report:
    """Check posterior_one against the rational oracle on random small graphs.

    With ``corrupt`` the log-space path receives row-permuted conditionals,
    which must surface as violations.
    """
    rng = np.random.default_rng(seed)
    report = Report("oracle", dict(trials=trials, seed=seed, tol=tol, corrupt=corrupt))
    for trial in range(trials):
        g, labels, stats = random_small_instance(rng, max_nodes, max_classes)
        used = stats
        if corrupt:
            used = ClassStats(stats.prior, np.roll(stats.conditional, 1, axis=0),
                              stats.counted_sources)
        for i in range(g.num_nodes):
            if g.neighbors(i).size > 30:
                continue
            fast = posterior_one(g, labels, used, i)
            exact = brute_force_posterior(g, labels, stats, i)
            err = relative_error(fast, exact)
            report.checked += 1
            report.max_deviation = max(report.max_deviation, err)
            if err > tol:
                report.violations.append(dict(trial=trial, node=i, error=err))
    return report


def lemma_suite(trials: int = 50, max_degree: int = 20, seed: int = 0) -> list:
    """Run all lemma verifiers on ``trials`` random admissible (c0, c1) draws each."""
    rng = np.random.default_rng(seed)

    def draw(ok, lo=0.01, hi=0.99):
        while True:
            c0, c1 = rng.uniform(lo, hi, size=2)
            if ok(c0, c1):
                return float(c0), float(c1)

    reports = []
    for _ in range(trials):
        reports.append(verify_lemma_homophilic(*draw(lambda a, b: a + b > 1 + 1e-6), max_degree))
        reports.append(verify_lemma_heterophilic(*draw(lambda a, b: a + b < 1 - 1e-6), max_degree))
        reports.append(verify_degree_lemmas(*draw(lambda a, b: True, 0.01, 0.499), max_degree))
    return reports

