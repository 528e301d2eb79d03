"""Color refinement and what the network regressor can distinguish.

Iterated color refinement assigns units colors from their own color and
the multiset of neighbor colors. Message-passing networks cannot separate
units that refinement leaves in the same class, so the refinement report
reads as an upper bound on the regressor's resolution: with constant
input features, units sharing a color class share a prediction.
"""

import numpy as np

from netdr.gnn import GNNConfig, forward_gnn, train_gnn
from netdr.graph import Graph
from netdr.rng import stream
from netdr.wl import wl_distinguish, wl_refine

# a 6-cycle and two triangles are locally identical: both 2-regular
c6 = Graph.from_edges(6, [(i, (i + 1) % 6) for i in range(6)])
tri2 = Graph.from_edges(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)])
print(f"refinement separates 6-cycle from two triangles: {wl_distinguish(c6, tri2)}")

# a path refines into orbit classes: ends, next-to-ends, middle
path = Graph.from_edges(5, [(i, i + 1) for i in range(4)])
coloring = wl_refine(path)
print(f"5-path colors: {coloring.colors} ({coloring.num_colors} classes, "
      f"{coloring.refining_rounds} refining rounds)")

# constant features force equal predictions inside each color class
g = Graph.from_edges(7, [(0, 1), (0, 2), (1, 3), (2, 4), (4, 5), (4, 6)])
features = np.ones((7, 1))
model = train_gnn(g, features, np.arange(7.0), np.ones(7, dtype=bool),
                  GNNConfig(depth=3, epochs=50), stream(5, 0))
pred = forward_gnn(model, g, features)
coloring = wl_refine(g)
for color in range(coloring.num_colors):
    members = np.flatnonzero(coloring.colors == color)
    spread = np.ptp(pred[members])
    print(f"color class {members}: prediction spread {spread:.2e}")
