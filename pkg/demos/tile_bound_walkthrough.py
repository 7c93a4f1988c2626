"""Where the k <= 188 bound comes from.

A tile is open when it is not too crowded and each of its nine regions is
occupied.  Its probability is computed exactly, checked by simulation, and
maximised over the tile scale a; the smallest k whose best probability
beats the site-percolation threshold is the bound.
"""

from knnperc.criticalbound import mc_prob_At, min_k, optimize_a, prob_At, region_areas

a = 0.893
areas = region_areas(a)
print(f"a = {a}: disc area {areas['C']:.4f}, E-cell area {areas['E']:.4f}, tile area {areas['tile']:.2f}")

for k in (150, 187, 188, 220):
    exact = prob_At(a, k).value
    mc = mc_prob_At(a, k, trials=20_000, seed=3)
    print(f"k={k}: P(open) = {exact:.5f}   simulated {mc.value:.5f} +- {mc.ci_halfwidth:.5f}")

print("\nbest a for k = 188:", optimize_a(188))
res = min_k()
print(f"smallest k with P > {res.threshold}: {res.k_star} (a = {res.a_star:.4f}, P = {res.p_star:.5f})")
