"""Two-layer GCN / MLP with hand-written backprop, Adam and early stopping.

Everything runs in float64 on dense features with a sparse propagation
matrix. Dropout masks come from generators seeded by
``(seed, epoch, layer)`` so a run is reproducible bit for bit.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.sparse as sp

from .errors import EmptyMask, NonFiniteLoss
from .graph import Graph, build_graph

LOG_FLOOR = 1e-12
# gradients below this are at the resolution limit of h=1e-5 central differences
FD_DENOM_FLOOR = 1e-5
ADAM_BETA1, ADAM_BETA2, ADAM_EPS = 0.9, 0.999, 1e-8
PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    max_epochs: int = 1000
    patience: int = 200
    hidden_dim: int = 64
    dropout: float = 0.5
    seed: int = 0
    model_kind: str = "gcn"

    def __post_init__(self):
        self.model_kind = self.model_kind.lower()
        if self.model_kind not in ("gcn", "mlp"):
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.patience > self.max_epochs:
            self.patience = self.max_epochs


@dataclass
class Split:
    """Disjoint train / val / test node-id arrays."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.train = np.asarray(self.train, dtype=np.int64)
        self.val = np.asarray(self.val, dtype=np.int64)
        self.test = np.asarray(self.test, dtype=np.int64)
        if self.train.size == 0:
            raise ValueError("train split must be non-empty")
        parts = np.concatenate([self.train, self.val, self.test])
        if np.unique(parts).size != parts.size:
            raise ValueError("train/val/test splits overlap")


@dataclass
class Model:
    kind: str
    params: dict

    def copy(self) -> "Model":
        return Model(self.kind, {k: v.copy() for k, v in self.params.items()})


@dataclass
class History:
    epoch: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    test_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)
    best_epoch: int = -1

    COLUMNS = ("epoch", "train_loss", "val_loss", "test_loss", "train_acc", "val_acc", "test_acc")

    def __len__(self):
        return len(self.epoch)

    def append(self, **row):
        for name in self.COLUMNS:
            getattr(self, name).append(row[name])

    def rows(self):
        return list(zip(*(getattr(self, c) for c in self.COLUMNS)))

    def to_csv(self, fh=None, header_comment=None) -> str | None:
        own = fh is None
        fh = io.StringIO() if own else fh
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for row in self.rows():
            w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
        return fh.getvalue() if own else None

    def __eq__(self, other):
        if not isinstance(other, History):
            return NotImplemented
        return all(getattr(self, f.name) == getattr(other, f.name) for f in fields(self))


def normalize_adjacency(g: Graph) -> sp.csr_matrix:
    """Symmetric GCN propagation matrix D^-1/2 (A + I) D^-1/2."""
    a = g.to_scipy() + sp.identity(g.num_nodes, format="csr")
    d = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(d)
    scale = sp.diags(inv_sqrt)
    return (scale @ a @ scale).tocsr()


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shift = z - z.max(axis=1, keepdims=True)
    return shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))


def _softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(z))


def soft_cross_entropy(pred_probs: np.ndarray, targets, mask) -> float:
    """Mean over ``mask`` of -sum_k t_k log(max(p_k, 1e-12))."""
    mask = np.asarray(mask)
    if mask.size == 0 or (mask.dtype == bool and not mask.any()):
        raise EmptyMask("loss mask is empty")
    t = getattr(targets, "matrix", targets)
    logp = np.log(np.maximum(pred_probs[mask], LOG_FLOOR))
    return float(-(t[mask] * logp).sum(axis=1).mean())


def _masked_loss_and_grad(logits: np.ndarray, targets: np.ndarray, idx: np.ndarray):
    """Clamped soft cross-entropy on rows ``idx`` and its gradient w.r.t. logits."""
    logp = _log_softmax(logits[idx])
    live = logp > np.log(LOG_FLOOR)
    t = targets[idx]
    loss = -(t * np.where(live, logp, np.log(LOG_FLOOR))).sum(axis=1).mean()
    # d/dz_j of -sum_k t_k log p_k over unclamped k
    tl = t * live
    g_rows = np.exp(logp) * tl.sum(axis=1, keepdims=True) - tl
    grad = np.zeros_like(logits)
    grad[idx] = g_rows / idx.size
    return float(loss), grad


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(kind: str, in_dim: int, hidden_dim: int, num_classes: int, seed) -> Model:
    rng = np.random.default_rng(seed)
    params = {
        "W1": glorot(rng, in_dim, hidden_dim),
        "b1": np.zeros(hidden_dim),
        "W2": glorot(rng, hidden_dim, num_classes),
        "b2": np.zeros(num_classes),
    }
    return Model(kind.lower(), params)


def _dropout_mask(rate: float, shape, seed, epoch: int, layer: int):
    if rate <= 0.0:
        return None
    rng = np.random.default_rng([seed, epoch, layer])
    keep = rng.random(shape, dtype=np.float32) >= rate
    return keep / (1.0 - rate)


def _propagate(prop, x):
    return x if prop is None else prop @ x


def _forward(params, prop, x, masks=(None, None), px=None):
    """Logits plus the cache needed by :func:`_backward`.

    When the input is narrower than the hidden layer the first propagation is
    applied to the features, (P X) W1 instead of P (X W1). ``px`` may carry a
    precomputed P X for passes without input dropout.
    """
    m0, m1 = masks
    xd = x if m0 is None else x * m0
    w1 = params["W1"]
    narrow = prop is not None and w1.shape[0] <= w1.shape[1]
    if narrow:
        inp = px if (px is not None and m0 is None) else prop @ xd
        z1 = inp @ w1 + params["b1"]
    else:
        inp = xd
        z1 = _propagate(prop, xd @ w1) + params["b1"]
    h1 = np.maximum(z1, 0.0)
    h1d = h1 if m1 is None else h1 * m1
    logits = _propagate(prop, h1d @ params["W2"]) + params["b2"]
    return logits, (inp, narrow, z1, h1d, m1)


def _backward(params, prop, cache, g_logits):
    inp, narrow, z1, h1d, m1 = cache
    # prop is symmetric so its transpose is itself
    s2 = _propagate(prop, g_logits)
    grads = {"W2": h1d.T @ s2, "b2": g_logits.sum(axis=0)}
    g_h = s2 @ params["W2"].T
    if m1 is not None:
        g_h = g_h * m1
    g_z1 = g_h * (z1 > 0.0)
    if narrow:
        grads["W1"] = inp.T @ g_z1
    else:
        grads["W1"] = inp.T @ _propagate(prop, g_z1)
    grads["b1"] = g_z1.sum(axis=0)
    return grads


def objective(params, prop, x, targets, idx, weight_decay=0.0, masks=(None, None)):
    """Training objective (loss + L2 term) and its parameter gradients."""
    logits, cache = _forward(params, prop, x, masks)
    loss, g_logits = _masked_loss_and_grad(logits, targets, idx)
    grads = _backward(params, prop, cache, g_logits)
    if weight_decay:
        for name in PARAM_NAMES:
            loss += 0.5 * weight_decay * float((params[name] ** 2).sum())
            grads[name] = grads[name] + weight_decay * params[name]
    return loss, grads


def _propagation_for(kind: str, g: Graph | None):
    if kind == "mlp" or g is None:
        return None
    return normalize_adjacency(g)


def predict(model: Model, g: Graph | None, features: np.ndarray, prop=None, px=None) -> np.ndarray:
    """Class probabilities for every node with dropout disabled."""
    if prop is None:
        prop = _propagation_for(model.kind, g)
    logits, _ = _forward(model.params, prop, np.asarray(features, dtype=np.float64), px=px)
    return _softmax(logits)


def _accuracy(probs, y, idx):
    if idx.size == 0:
        return float("nan")
    return float((probs[idx].argmax(axis=1) == y[idx]).mean())


def _loss_on(probs, targets, idx):
    if idx.size == 0:
        return float("nan")
    return soft_cross_entropy(probs, targets, idx)


def train(g: Graph | None, features, targets, split: Split, cfg: TrainConfig, y=None):
    """Full-batch training with Adam and validation-loss early stopping.

    ``targets`` is an N x K matrix (or :class:`SoftLabels`); only the rows of
    ``split.train`` enter the training loss, the val/test rows are used for
    evaluation. ``y`` gives the class ids for accuracy and defaults to the
    row-wise argmax of ``targets``. Returns the model at the epoch with the
    lowest validation loss together with the per-epoch :class:`History`.
    """
    x = np.asarray(features, dtype=np.float64)
    t = np.asarray(getattr(targets, "matrix", targets), dtype=np.float64)
    if g is not None and x.shape[0] != g.num_nodes:
        raise ValueError("feature rows must match the number of nodes")
    y = t.argmax(axis=1) if y is None else np.asarray(y)
    kind = cfg.model_kind
    model = init_model(kind, x.shape[1], cfg.hidden_dim, t.shape[1], cfg.seed)
    history = History()
    if cfg.max_epochs <= 0:
        return model, history

    prop = _propagation_for(kind, g)
    px = None if prop is None else prop @ x
    params = model.params
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    select_idx = split.val if split.val.size else split.train
    best_loss, best_params, best_epoch = np.inf, None, -1

    for epoch in range(cfg.max_epochs):
        masks = (_dropout_mask(cfg.dropout, x.shape, cfg.seed, epoch, 0),
                 _dropout_mask(cfg.dropout, (x.shape[0], cfg.hidden_dim), cfg.seed, epoch, 1))
        loss, grads = objective(params, prop, x, t, split.train, cfg.weight_decay, masks)
        if not np.isfinite(loss):
            raise NonFiniteLoss(epoch)
        step = epoch + 1
        for name in PARAM_NAMES:
            gr = grads[name]
            m[name] = ADAM_BETA1 * m[name] + (1 - ADAM_BETA1) * gr
            v[name] = ADAM_BETA2 * v[name] + (1 - ADAM_BETA2) * gr * gr
            mhat = m[name] / (1 - ADAM_BETA1 ** step)
            vhat = v[name] / (1 - ADAM_BETA2 ** step)
            params[name] = params[name] - cfg.learning_rate * mhat / (np.sqrt(vhat) + ADAM_EPS)

        probs = predict(Model(kind, params), None, x, prop=prop, px=px)
        row = dict(
            epoch=epoch,
            train_loss=_loss_on(probs, t, split.train),
            val_loss=_loss_on(probs, t, split.val),
            test_loss=_loss_on(probs, t, split.test),
            train_acc=_accuracy(probs, y, split.train),
            val_acc=_accuracy(probs, y, split.val),
            test_acc=_accuracy(probs, y, split.test),
        )
        if not np.isfinite(row["train_loss"]):
            raise NonFiniteLoss(epoch)
        history.append(**row)
        sel = _loss_on(probs, t, select_idx)
        if sel < best_loss:
            best_loss, best_epoch = sel, epoch
            best_params = {k: p.copy() for k, p in params.items()}
        elif epoch - best_epoch >= cfg.patience:
            break

    history.best_epoch = best_epoch
    return Model(kind, best_params), history


def grad_check(model_kind: str, seed: int, num_nodes: int = 8, in_dim: int = 5,
               hidden_dim: int = 6, num_classes: int = 3, h: float = 1e-5,
               weight_decay: float = 5e-4, zero_output: bool = False) -> float:
    """Max relative error between analytic and central-difference gradients.

    Builds a random instance with at most ``num_nodes`` nodes, soft targets and
    a random training mask. The relative error of each entry is
    ``|a - n| / max(|a|, |n|, 1e-5)``; the floor keeps entries whose gradient
    is below finite-difference resolution from dominating.
    """
    rng = np.random.default_rng(seed)
    pairs = [(i, j) for i in range(num_nodes) for j in range(i + 1, num_nodes)
             if rng.random() < 0.4]
    g = build_graph(num_nodes, pairs)
    prop = _propagation_for(model_kind, g)
    x = rng.normal(size=(num_nodes, in_dim))
    t = rng.dirichlet(np.ones(num_classes), size=num_nodes)
    idx = np.sort(rng.choice(num_nodes, size=max(2, num_nodes // 2), replace=False))
    model = init_model(model_kind, in_dim, hidden_dim, num_classes, seed)
    params = model.params
    # break symmetry of zero biases and keep ReLU pre-activations off the kink
    params["b1"] = rng.uniform(0.05, 0.2, size=hidden_dim) * rng.choice([-1, 1], hidden_dim)
    if zero_output:
        params["W2"] = np.zeros_like(params["W2"])
        params["b2"] = np.zeros_like(params["b2"])

    _, grads = objective(params, prop, x, t, idx, weight_decay)
    worst = 0.0
    for name in PARAM_NAMES:
        p = params[name]
        flat = p.reshape(-1)
        num = np.zeros_like(flat)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            lp, _ = objective(params, prop, x, t, idx, weight_decay)
            flat[j] = orig - h
            lm, _ = objective(params, prop, x, t, idx, weight_decay)
            flat[j] = orig
            num[j] = (lp - lm) / (2 * h)
        ana = grads[name].reshape(-1)
        if not np.all(np.isfinite(ana)):
            return float("inf")
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), FD_DENOM_FLOOR)
        worst = max(worst, float(np.max(np.abs(ana - num) / denom)))
    return worst
