"""Stretch of shortest paths in k-NN graphs as k grows.

Samples n uniform points, builds the k-NN graph for k = 3..8, and reports
the average and worst graph/Euclidean ratio inside a central window, then
fits ``1 + a/k^2`` to the averages.
"""

import math

from knnperc.graphmetrics import distortion_stats, inner_window_view, sweep_k_fit
from knnperc.nngraph import build_knn_graph
from knnperc.pointproc import Window, sample_binomial

n = 1000
ps = sample_binomial(Window.square(math.sqrt(n)), n, seed=1)
inner = ps.window.centered_subwindow(0.5)

samples = []
print(" k   avg    max   %<=2")
for k in range(3, 9):
    g = build_knn_graph(ps, k)
    G, P, verts = inner_window_view(g, ps, inner)
    st = distortion_stats(G, P, verts)
    samples.append((k, st.avg))
    print(f"{k:2d}  {st.avg:.3f}  {st.max:5.2f}  {st.pct_le_2:5.1f}")

fit = sweep_k_fit(samples)
print(f"\nfit: 1 + {fit.a_fit:.2f}/k^2  (rss {fit.rss:.2e})")
