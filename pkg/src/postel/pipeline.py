"""End-to-end posterior label smoothing with iterative pseudo-labeling."""
from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import nn
from .errors import ClassVanished
from .graph import Graph
from .nn import History, Model, Split, TrainConfig
from .smoothing import (DEFAULT_FLOOR, blend_rows, posterior_all, posterior_all_local)
from .stats import (ALL_SOURCES, GROUND_TRUTH, PSEUDO, UNKNOWN, LabelState, Source,
                    estimate_stats)

ALPHA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))
BETA_GRID = tuple(round(0.1 * i, 1) for i in range(0, 10))
METHODS = ("postel", "onehot", "uniform", "neighbor")


@dataclass
class Ablation:
    posterior_smoothing: bool = True
    uniform_noise: bool = True
    iterative_pseudo: bool = True


@dataclass
class ExperimentConfig:
    """Smoothing and training settings for one experiment.

    ``variant`` is ``"global"``, ``"normalized"`` or ``"local:H"``.
    ``method`` switches the target construction to a comparison baseline:
    ``"onehot"``, ``"uniform"`` (label smoothing with eps = alpha) or
    ``"neighbor"`` (neighbor-label aggregation weighted by alpha).
    """

    alpha: float = 0.5
    beta: float = 0.1
    variant: str = "global"
    ablation: Ablation = field(default_factory=Ablation)
    max_pl_iterations: int = 10
    trainer: TrainConfig = field(default_factory=TrainConfig)
    label_fraction: float = 1.0
    floor: float = DEFAULT_FLOOR
    method: str = "postel"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.beta < 0.0:
            raise ValueError("beta must be >= 0")
        if not 0.0 < self.label_fraction <= 1.0:
            raise ValueError("label_fraction must lie in (0, 1]")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        parse_variant(self.variant)

    def to_dict(self) -> dict:
        return asdict(self)


def parse_variant(variant: str):
    """Return ("global"|"normalized", None) or ("local", H)."""
    if variant in ("global", "normalized"):
        return variant, None
    if variant.startswith("local:"):
        hops = int(variant.split(":", 1)[1])
        if hops < 1:
            raise ValueError("local variant needs H >= 1")
        return "local", hops
    raise ValueError(f"unknown variant {variant!r}")


@dataclass
class IterationRecord:
    iteration: int
    val_loss: float
    val_accuracy: float
    test_accuracy: float
    best_epoch: int
    epochs_run: int
    accepted: bool
    stats: dict
    history: History = field(repr=False)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "history"}
        d["history"] = {c: list(getattr(self.history, c)) for c in History.COLUMNS}
        return d


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    iterations: list
    best_iteration: int
    final_test_accuracy: float
    iterations_used: int
    wallclock_seconds: float = 0.0
    model: Model | None = field(default=None, repr=False)

    @property
    def best_val_loss(self) -> float:
        return self.iterations[self.best_iteration].val_loss

    def to_dict(self, include_wallclock: bool = True) -> dict:
        d = dict(
            config=self.config.to_dict(),
            iterations=[r.to_dict() for r in self.iterations],
            best_iteration=self.best_iteration,
            final_test_accuracy=self.final_test_accuracy,
            iterations_used=self.iterations_used,
        )
        if include_wallclock:
            d["wallclock_seconds"] = self.wallclock_seconds
        return d

    def to_json(self, include_wallclock: bool = True, **kw) -> str:
        return json.dumps(self.to_dict(include_wallclock), **kw)


def source_names(sources: Source) -> list:
    return [s.name.lower() for s in Source if s in sources]


def iteration_seed(seed: int, iteration: int) -> int:
    """Iteration 0 reuses ``seed`` itself; later ones derive a fresh stream."""
    if iteration == 0:
        return seed
    return int(np.random.SeedSequence([seed, iteration]).generate_state(1)[0])


def assign_pseudo_labels(probs: np.ndarray, split: Split, labels: LabelState) -> LabelState:
    """Label val/test nodes with their argmax class (ties -> lowest id).

    GroundTruth labels are never overwritten.
    """
    out = labels.copy()
    nodes = np.concatenate([split.val, split.test])
    nodes = nodes[out.status[nodes] != GROUND_TRUTH]
    out.classes[nodes] = np.argmax(probs[nodes], axis=1)
    out.status[nodes] = PSEUDO
    return out


def subsample_train_labels(labels: LabelState, split: Split, fraction: float, seed: int) -> LabelState:
    """Keep ceil(fraction * |train|) GroundTruth train labels, one per class first.

    All other nodes become Unknown. ``fraction == 1`` returns the labels unchanged.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    if fraction == 1.0:
        return labels.copy()
    rng = np.random.default_rng(seed)
    train = split.train[labels.status[split.train] == GROUND_TRUTH]
    m = math.ceil(fraction * train.size)
    classes = labels.classes[train]
    present = np.unique(classes)
    chosen = []
    for c in rng.permutation(present)[:m]:
        chosen.append(int(rng.choice(train[classes == c])))
    rest = np.setdiff1d(train, chosen)
    chosen += rng.choice(rest, size=m - len(chosen), replace=False).tolist()
    out = LabelState(labels.num_classes, np.full(labels.num_nodes, -1), np.full(labels.num_nodes, UNKNOWN))
    chosen = np.asarray(chosen, dtype=np.int64)
    out.classes[chosen] = labels.classes[chosen]
    out.status[chosen] = GROUND_TRUTH
    lost = np.setdiff1d(present, out.classes[chosen])
    if lost.size:
        warnings.warn(f"classes {lost.tolist()} lost all training labels", ClassVanished)
    return out


def neighbor_aggregate_rows(g: Graph, labels: LabelState, nodes: np.ndarray, alpha: float) -> np.ndarray:
    """Vectorized aggregation baseline for ``nodes`` using GroundTruth neighbors."""
    k = labels.num_classes
    counted = labels.counted(Source.GROUND_TRUTH)
    src, dst = g.edge_sources(), g.col_indices
    keep = counted[dst]
    hist = np.bincount(src[keep] * k + labels.classes[dst[keep]],
                       minlength=g.num_nodes * k).reshape(g.num_nodes, k)[nodes].astype(float)
    tot = hist.sum(axis=1, keepdims=True)
    agg = np.where(tot > 0, hist / np.maximum(tot, 1), 1.0 / k)
    onehot = np.eye(k)[labels.classes[nodes]]
    return alpha * agg + (1.0 - alpha) * onehot


def compute_posteriors(g: Graph, labels: LabelState, sources: Source, cfg: ExperimentConfig):
    """Posterior soft labels for every node plus the statistics used."""
    kind, hops = parse_variant(cfg.variant)
    if kind == "local":
        stats = estimate_stats(g, labels, sources, "global")
        return posterior_all_local(g, labels, hops, sources, cfg.floor).matrix, stats
    stats = estimate_stats(g, labels, sources, kind)
    return posterior_all(g, labels, stats, cfg.floor).matrix, stats


def build_targets(g: Graph, labels: LabelState, y: np.ndarray, train_nodes: np.ndarray,
                  cfg: ExperimentConfig, sources: Source):
    """Training targets for ``train_nodes``; every other row is one-hot ``y``.

    The non-train rows only feed validation/test losses. Returns the target
    matrix and a summary of the statistics used.
    """
    k = labels.num_classes
    yk = np.where(y >= 0, y, 0)
    targets = np.eye(k)[yk]
    summary = dict(sources=source_names(sources),
                   num_ground_truth=int((labels.status == GROUND_TRUTH).sum()),
                   num_pseudo=int((labels.status == PSEUDO).sum()))
    ytr = labels.classes[train_nodes]
    ps, un = cfg.ablation.posterior_smoothing, cfg.ablation.uniform_noise
    if cfg.method == "onehot":
        return targets, summary
    if cfg.method == "uniform":
        targets[train_nodes] = (1.0 - cfg.alpha) * np.eye(k)[ytr] + cfg.alpha / k
        return targets, summary
    if cfg.method == "neighbor":
        targets[train_nodes] = neighbor_aggregate_rows(g, labels, train_nodes, cfg.alpha)
        return targets, summary
    if not ps and not un:
        return targets, summary
    beta = cfg.beta if un else 0.0
    if ps:
        post, stats = compute_posteriors(g, labels, sources, cfg)
        summary["prior"] = stats.prior.tolist()
        summary["conditional"] = stats.conditional.tolist()
        base = post[train_nodes]
    else:
        # without posterior smoothing the one-hot label takes its place, which
        # reduces to uniform smoothing with eps = alpha * beta / (1 + beta)
        base = np.eye(k)[ytr]
    targets[train_nodes] = blend_rows(base, ytr, cfg.alpha, beta)
    return targets, summary


def _train_once(g, features, y, labels, split, cfg, iteration, sources):
    train_nodes = split.train[labels.status[split.train] == GROUND_TRUTH]
    targets, summary = build_targets(g, labels, y, train_nodes, cfg, sources)
    tcfg = replace(cfg.trainer, seed=iteration_seed(cfg.trainer.seed, iteration))
    fit_split = Split(train_nodes, split.val, split.test)
    model, hist = nn.train(g, features, targets, fit_split, tcfg, y=y)
    b = hist.best_epoch
    rec = IterationRecord(
        iteration=iteration,
        val_loss=float(hist.val_loss[b]) if split.val.size else float(hist.train_loss[b]),
        val_accuracy=float(hist.val_acc[b]),
        test_accuracy=float(hist.test_acc[b]),
        best_epoch=int(b),
        epochs_run=len(hist),
        accepted=True,
        stats=summary,
        history=hist,
    )
    return model, rec


def _initial_labels(y, split, num_classes, cfg):
    y = np.asarray(y, dtype=np.int64)
    k = int(num_classes or y.max() + 1)
    mask = np.zeros(y.shape[0], dtype=bool)
    mask[split.train] = True
    labels = LabelState.from_ground_truth(y, k, mask)
    return subsample_train_labels(labels, split, cfg.label_fraction, cfg.trainer.seed)


def iterative_pseudo_label(g: Graph, features, y, split: Split, cfg: ExperimentConfig,
                           num_classes: int | None = None) -> ExperimentResult:
    """Train, pseudo-label val/test, re-estimate statistics and retrain from scratch.

    ``y`` holds the true class of every node; only the train nodes (after
    ``label_fraction`` subsampling) are exposed to the statistics and the
    training loss, val/test labels serve evaluation only. Iteration 0 counts
    GroundTruth labels only. The loop stops at the first iteration that does
    not strictly lower the best validation loss, or after
    ``max_pl_iterations``; the result reports the best iteration.
    """
    start = time.perf_counter()
    y = np.asarray(y, dtype=np.int64)
    labels = _initial_labels(y, split, num_classes, cfg)
    model, rec = _train_once(g, features, y, labels, split, cfg, 0, Source.GROUND_TRUTH)
    records = [rec]
    best, best_model = 0, model
    limit = cfg.max_pl_iterations if cfg.ablation.iterative_pseudo else 0
    latest = model
    for it in range(1, limit + 1):
        probs = nn.predict(latest, g, features)
        pseudo = assign_pseudo_labels(probs, split, labels)
        model, rec = _train_once(g, features, y, pseudo, split, cfg, it, ALL_SOURCES)
        rec.accepted = rec.val_loss < records[best].val_loss
        records.append(rec)
        if not rec.accepted:
            break
        best, best_model, latest = it, model, model
    return ExperimentResult(
        config=cfg,
        iterations=records,
        best_iteration=best,
        final_test_accuracy=records[best].test_accuracy,
        iterations_used=len(records) - 1,
        wallclock_seconds=time.perf_counter() - start,
        model=best_model,
    )


def run_postel(g: Graph, features, y, split: Split, cfg: ExperimentConfig,
               num_classes: int | None = None) -> ExperimentResult:
    """Smooth once and train once (no pseudo-labeling)."""
    return iterative_pseudo_label(g, features, y, split, replace(cfg, max_pl_iterations=0), num_classes)


def grid_sweep(g: Graph, features, y, split: Split, base_cfg: ExperimentConfig,
               alpha_grid=ALPHA_GRID, beta_grid=BETA_GRID, num_classes=None, n_jobs: int = 1):
    """Run every (alpha, beta) cell and pick the lowest best-iteration val loss.

    Ties go to the lower alpha, then the lower beta. Returns the selected
    config and one row per cell.
    """
    if not alpha_grid or not beta_grid:
        raise ValueError("grids must be non-empty")
    cells = [(float(a), float(b)) for a in alpha_grid for b in beta_grid]

    def run(cell):
        cfg = replace(base_cfg, alpha=cell[0], beta=cell[1])
        res = iterative_pseudo_label(g, features, y, split, cfg, num_classes)
        return dict(alpha=cell[0], beta=cell[1], best_val_loss=res.best_val_loss,
                    test_acc=res.final_test_accuracy, iterations_used=res.iterations_used)

    if n_jobs == 1:
        table = [run(c) for c in cells]
    else:
        from joblib import Parallel, delayed

        table = Parallel(n_jobs=n_jobs)(delayed(run)(c) for c in cells)
    best = min(table, key=lambda r: (r["best_val_loss"], r["alpha"], r["beta"]))
    return replace(base_cfg, alpha=best["alpha"], beta=best["beta"]), table


def stratified_split(y, seed: int, fractions=(0.6, 0.2, 0.2)) -> Split:
    """Per-class random split with the given train/val/test fractions."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for c in np.unique(y[y >= 0]):
        idx = rng.permutation(np.flatnonzero(y == c))
        n_tr = int(round(fractions[0] * idx.size))
        n_va = int(round((fractions[0] + fractions[1]) * idx.size)) - n_tr
        parts[0].append(idx[:n_tr])
        parts[1].append(idx[n_tr:n_tr + n_va])
        parts[2].append(idx[n_tr + n_va:])
    return Split(*(np.sort(np.concatenate(p)) for p in parts))
