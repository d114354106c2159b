# %% [markdown]
# # Scale selection and the U functional
#
# Starting from eps1, the scale search walks up dyadically until the density
# ratio stops growing by more than 1 + rho^2.  At the chosen scale the U
# functional is bounded below by a multiple of (1 - s) theta / eps.

# %%

from rieszlab.diagnostics import GrowthAnomalyError, lemma4_check, select_scale
from rieszlab.geometry import orthonormalize, select_spread_points
from rieszlab.measure import build_ifs_measure, cantor_spec, radial_power_measure
from rieszlab.smoothing import build_profile

# %%
mu = build_ifs_measure(cantor_spec(0.25, 14))
s, rho = 0.5, 0.05
p = build_profile(s, rho)
x0 = mu.positions[4321]
sel = select_spread_points(mu.positions, x0, 2.0**-15, 2)
scale = select_scale(mu, sel.points[0], 2.0**-12, rho, s)
print(scale.to_dict())

# %%
res = lemma4_check(mu, sel.points[0], orthonormalize(sel.points), scale, p, s, 0)
print("U =", res.U, " lower bound =", res.lower_bound, " holds:", res.passed)

# %% [markdown]
# A measure whose density keeps growing has no admissible scale.

# %%
grow = radial_power_measure([0.0], 1.5, 2**-14, 2.0**8, per_octave=16)
try:
    select_scale(grow, [0.0], 2**-10, rho, s, max_k=5)
except GrowthAnomalyError as err:
    print("anomaly:", err)
