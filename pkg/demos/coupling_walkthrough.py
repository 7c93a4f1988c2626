"""Following a lattice path of open tiles inside the k-NN graph.

Samples a Poisson process over a grid of tiles, marks open tiles, and for
two tiles in the largest open cluster builds the graph path that mimics the
lattice path.  Its length is compared with the true shortest path.
"""

import math

import numpy as np

from knnperc.graphmetrics import sssp
from knnperc.nngraph import build_knn_graph
from knnperc.pointproc import Window, sample_poisson
from knnperc.tilecoupling import TileParams, evaluate_tiles, lattice_clusters, mimic_path, verify_coupling

params = TileParams(a=0.893, k=188)
ps = sample_poisson(Window.square(12 * params.side), 1.0, seed=2)
g = build_knn_graph(ps, params.k)
lat = evaluate_tiles(ps, params)
print(f"{len(ps)} points, {lat.open.sum()} of {lat.open.size} tiles open ({lat.open_fraction():.3f})")

cl = lattice_clusters(lat)
members = np.argwhere(cl.label == cl.largest())
t1, t2 = tuple(map(int, members[0])), tuple(map(int, members[-1]))
path = mimic_path(g, ps, lat, t1, t2)
r1, r2 = path.vertices[0], path.vertices[-1]
euclid = math.dist(ps.points[r1], ps.points[r2])
best = sssp(g, r1)[r2]
print(f"tiles {t1} -> {t2}: {len(path.tiles)} tiles, {len(path.vertices)} vertices")
print(f"mimic length {path.length:.2f}, shortest {best:.2f}, straight line {euclid:.2f}")

rep = verify_coupling(g, ps, lat, n_sources=5)
print(f"adjacent open pairs with a valid hop chain: {rep.valid_paths}/{rep.adjacent_checked}")
print(f"worst adjacent ratio {rep.max_hop_ratio:.3f} (bound {rep.c_tiles_estimate:.3f}); alpha_hat {rep.alpha_hat:.2f}")
