"""Soft labels from neighbor statistics on a graph small enough to check by hand."""
import numpy as np

from postel.graph import build_graph
from postel.smoothing import blend, posterior_all
from postel.stats import LabelState, estimate_stats

# a triangle 0-1-2 plus a pendant node 3 hanging off node 2
g = build_graph(4, [(0, 1), (1, 2), (0, 2), (2, 3)])
print("degrees:", g.degrees)

# nodes 0..2 are labeled, node 3 is not
labels = LabelState.from_ground_truth(np.array([0, 0, 1, -1]), num_classes=2)

stats = estimate_stats(g, labels)
print("prior P(y):", stats.prior)            # two of three labeled nodes are class 0
print("conditional P(y_nbr | y):")
print(stats.conditional)                      # row 0: [0.5, 0.5], row 1: [1, 0]

post = posterior_all(g, labels, stats)
for i, row in enumerate(post.matrix):
    print(f"node {i}: posterior {np.round(row, 4)}")

# node 2 is labeled 1 but both labeled neighbors are 0; the posterior still
# leans to class 1 because class-1 nodes in this graph only ever touch class 0
print("node 2 posterior, by hand: [1/3, 2/3] ->", post.matrix[2])

# node 3 sees only node 2 (class 1), and class-0 nodes sometimes touch class 1
# while class-1 nodes never do, so the posterior moves to class 0
print("node 3:", post.matrix[3])

# training targets mix posterior, uniform noise and the one-hot label
for alpha in (0.0, 0.3, 0.8):
    t = blend(post.matrix[2], true_label=1, alpha=alpha, beta=0.1)
    print(f"alpha={alpha}: target for node 2 = {np.round(t, 4)}")
