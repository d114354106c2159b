# %% [markdown]
# # Principal values on a segment
#
# For Lebesgue measure on [0, 1] and s = 1 the truncated transform at t has
# the explicit limit log(t / (1 - t)); at t = 0.75 this is log 3.

# %%
import math

import numpy as np

from rieszlab.diagnostics import pv_classify
from rieszlab.measure import build_rectifiable_measure
from rieszlab.riesz import pv_scan, smoothed_riesz, truncated_riesz
from rieszlab.smoothing import build_profile

# %%
seg = build_rectifiable_measure("segment", {"start": [0.0], "end": [1.0]}, 2.0**-16)
print(truncated_riesz(seg, [0.75], 2.0**-8, 1.0).value, math.log(3))

# %%
grid = 2.0 ** -np.arange(4, 11)
p = build_profile(1.0, 0.05)
scan = pv_scan(seg, [0.75], grid, p, kind="truncated")
for e, v, o in zip(scan.eps, scan.values[:, 0], scan.osc_tail):
    print(f"eps = {e:.2e}  R = {v:.6f}  tail osc = {o:.2e}")
print(pv_classify(scan, 1e-2, 0.1).verdict)

# %% [markdown]
# The smoothed kernel is compactly supported, so it only sees mass within
# about eps of the point.  Away from the endpoints the lattice is symmetric
# there and the smoothed value is zero up to rounding; near an endpoint it is not.

# %%
print(smoothed_riesz(seg, [0.75], 2.0**-8, p).value, smoothed_riesz(seg, [2.0**-9], 2.0**-8, p).value)
