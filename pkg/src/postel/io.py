"""Plain-text dataset formats.

* edge list: two whitespace-separated 0-based ids per line, ``#`` comments
* labels: CSV ``node,label``; nodes not listed are unlabeled
* split: CSV ``node,role`` with role in {train, val, test}
* features: CSV ``node,f0,...,f{d-1}``
* soft labels (output): ``node,p0,...,p{K-1},provenance``
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .nn import Split

ROLES = ("train", "val", "test")


def _open(path):
    try:
        return open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(path, f"cannot open ({exc.strerror})") from None


def _int(path, line, token, what):
    try:
        v = int(token)
    except ValueError:
        raise InputError(path, f"bad {what} {token!r}", line) from None
    if v < 0:
        raise InputError(path, f"negative {what} {v}", line)
    return v


def read_edge_list(path) -> np.ndarray:
    edges = []
    with _open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            s = raw.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 2:
                raise InputError(path, f"expected two node ids, got {len(parts)} fields", lineno)
            edges.append((_int(path, lineno, parts[0], "node id"),
                          _int(path, lineno, parts[1], "node id")))
    return np.asarray(edges, dtype=np.int64).reshape(-1, 2)


def _csv_rows(path, header0):
    """Yield (line number, row) for data rows, validating the header.

    Every data row must have as many fields as the header.
    """
    with _open(path) as fh:
        reader = csv.reader(fh)
        width = None
        for row in reader:
            lineno = reader.line_num
            if not row or (row[0].startswith("#")):
                continue
            if width is None:
                if row[0].strip() != header0:
                    raise InputError(path, f"expected header starting with {header0!r}", lineno)
                width = len(row)
                continue
            if len(row) != width:
                raise InputError(path, f"expected {width} fields, got {len(row)}", lineno)
            yield lineno, row


def read_labels(path) -> dict:
    out = {}
    for lineno, row in _csv_rows(path, "node"):
        if len(row) != 2:
            raise InputError(path, "expected node,label", lineno)
        node = _int(path, lineno, row[0], "node id")
        if node in out:
            raise InputError(path, f"duplicate node {node}", lineno)
        out[node] = _int(path, lineno, row[1], "label")
    return out


def read_split(path) -> dict:
    out = {}
    for lineno, row in _csv_rows(path, "node"):
        if len(row) != 2 or row[1].strip() not in ROLES:
            raise InputError(path, "expected node,role with role in train/val/test", lineno)
        node = _int(path, lineno, row[0], "node id")
        if node in out:
            raise InputError(path, f"duplicate node {node}", lineno)
        out[node] = row[1].strip()
    return out


def read_features(path) -> dict:
    out = {}
    for lineno, row in _csv_rows(path, "node"):
        node = _int(path, lineno, row[0], "node id")
        try:
            vals = [float(v) for v in row[1:]]
        except ValueError:
            raise InputError(path, "non-numeric feature", lineno) from None
        if not vals or not np.all(np.isfinite(vals)):
            raise InputError(path, "features must be finite and non-empty", lineno)
        out[node] = vals
    return out


@dataclass
class DatasetBundle:
    """Paths of one dataset; ``load`` resolves them into arrays."""

    graph: str
    labels: str
    features: str | None = None
    split: str | None = None

    def load(self):
        """Return (num_nodes, edges, y, features or None, Split or None).

        ``y`` is -1 for unlabeled nodes; K is the largest label plus one.
        """
        edges = read_edge_list(self.graph)
        labels = read_labels(self.labels)
        feats = read_features(self.features) if self.features else None
        roles = read_split(self.split) if self.split else None
        ids = [edges.max() if edges.size else -1, max(labels, default=-1)]
        if feats:
            ids.append(max(feats))
        if roles:
            ids.append(max(roles))
        n = int(max(ids)) + 1
        y = np.full(n, -1, dtype=np.int64)
        for node, lab in labels.items():
            y[node] = lab
        x = None
        if feats is not None:
            missing = sorted(set(range(n)) - set(feats))
            if missing:
                raise InputError(self.features, f"no features for node {missing[0]}")
            x = np.array([feats[i] for i in range(n)], dtype=np.float64)
        split = None
        if roles is not None:
            parts = {r: [] for r in ROLES}
            for node, role in sorted(roles.items()):
                parts[role].append(node)
            for node in parts["val"] + parts["test"] + parts["train"]:
                if y[node] < 0:
                    raise InputError(self.split, f"split node {node} has no label")
            split = Split(parts["train"], parts["val"], parts["test"])
        return n, edges, y, x, split


def _header(fh, comment):
    if comment:
        fh.write(f"# {comment}\n")


def write_edge_list(path, edges, comment=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        _header(fh, comment)
        for u, v in edges:
            fh.write(f"{int(u)} {int(v)}\n")


def write_labels(path, y, comment=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        _header(fh, comment)
        fh.write("node,label\n")
        for i, lab in enumerate(y):
            if lab >= 0:
                fh.write(f"{i},{int(lab)}\n")


def write_split(path, split: Split, comment=None):
    roles = {}
    for role in ROLES:
        for node in getattr(split, role):
            roles[int(node)] = role
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        _header(fh, comment)
        fh.write("node,role\n")
        for node in sorted(roles):
            fh.write(f"{node},{roles[node]}\n")


def write_features(path, x, comment=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        _header(fh, comment)
        fh.write("node," + ",".join(f"f{j}" for j in range(x.shape[1])) + "\n")
        for i, row in enumerate(x):
            fh.write(f"{i}," + ",".join(repr(float(v)) for v in row) + "\n")


def write_soft_labels(path, matrix, provenance, comment=None):
    k = matrix.shape[1]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        _header(fh, comment)
        fh.write("node," + ",".join(f"p{j}" for j in range(k)) + ",provenance\n")
        for i, row in enumerate(matrix):
            fh.write(f"{i}," + ",".join(f"{v:.17g}" for v in row) + f",{provenance[i]}\n")


def read_soft_labels(path):
    """Inverse of :func:`write_soft_labels`: (matrix, provenance list)."""
    rows, prov = [], []
    for _, row in _csv_rows(path, "node"):
        rows.append([float(v) for v in row[1:-1]])
        prov.append(row[-1])
    return np.array(rows), prov


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
