"""Shared test helpers."""
import numpy as np

from postel.graph import build_graph


def random_graph(rng, n, p):
    iu = np.triu_indices(n, 1)
    keep = rng.random(iu[0].size) < p
    return build_graph(n, np.column_stack([iu[0][keep], iu[1][keep]]))
