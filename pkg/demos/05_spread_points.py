# %% [markdown]
# # Well-spread points in a ball
#
# Greedy selection picks points that stay far from the affine hull of the
# points already chosen.  Compare it with an exhaustive search on a tiny cloud.

# %%
import itertools

import numpy as np

from rieszlab.geometry import dist_to_affine, orthonormalize, select_spread_points

# %%
rng = np.random.default_rng(1)
pts = rng.uniform(-1, 1, size=(12, 2))
sel = select_spread_points(pts, [0.0, 0.0], 1.5, 3)
print(sel.indices, sel.hull_distances, sel.spread_ratio)


# %%
def best(points, r, count):
    inside = points[np.linalg.norm(points, axis=1) < r]
    out = 0.0
    for tup in itertools.permutations(range(len(inside)), count):
        d = [float(dist_to_affine(inside[tup[j]], orthonormalize(inside[list(tup[:j])])))
             for j in range(1, count)]
        out = max(out, min(d))
    return out / r


print("greedy / optimum:", sel.spread_ratio / best(pts, 1.5, 3))

# %% [markdown]
# The unit square shows the gap: greedy takes the far diagonal corner first
# and ends at sqrt(1/2), while two adjacent corners reach 1.

# %%
sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float) - 0.5
print(select_spread_points(sq, [0.0, 0.0], 1.0, 3).spread_ratio, best(sq, 1.0, 3))
