# %% [markdown]
# # Oscillating transforms on a Cantor set
#
# On the quarter Cantor set (s = 1/2) the smoothed transform at an atom keeps
# oscillating as eps decreases: each generation repeats the same pattern.

# %%
import numpy as np

from rieszlab.diagnostics import pv_classify, sample_atoms
from rieszlab.measure import build_ifs_measure, cantor_spec, dyadic_radii, upper_density_estimate
from rieszlab.riesz import pv_scan
from rieszlab.smoothing import build_profile

# %%
mu = build_ifs_measure(cantor_spec(0.25, 14))
p = build_profile(0.5, 0.05)
grid = dyadic_radii(2.0**-4, 2.0**-24, 2)

# %%
x = mu.positions[5000]
scan = pv_scan(mu, x, grid, p)
print(np.round(scan.values[:, 0], 4))

# %%
radii = dyadic_radii(2.0**-4, mu.radius_floor, 16, include_min=True)
for i in sample_atoms(mu, 6, 0):
    y = mu.positions[i]
    theta = upper_density_estimate(mu, y, 0.5, radii).value
    cls = pv_classify(pv_scan(mu, y, grid, p), 1e-2, 0.05 * theta)
    print(i, cls.verdict)
