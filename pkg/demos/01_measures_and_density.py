# %% [markdown]
# # Discrete measures and their density profiles
#
# Build a few self-similar and rectifiable measures, then look at how the
# normalised ball mass mu(B(x, r)) / r^s behaves as r shrinks.

# %%
import numpy as np

from rieszlab.measure import (build_ifs_measure, build_rectifiable_measure, cantor_spec, density_profile,
                              dyadic_radii, growth_constant, upper_density_estimate)

# %%
cantor = build_ifs_measure(cantor_spec(0.25, 12))
s = np.log(2) / np.log(4)
print(cantor.n_atoms, "atoms, total mass", cantor.total_mass, "floor", cantor.radius_floor)

# %% [markdown]
# On the quarter Cantor set the density oscillates with period one
# generation (a factor 4 in r); it neither converges nor blows up.

# %%
x = cantor.positions[0]
radii = dyadic_radii(2.0**-1, cantor.radius_floor, per_octave=4, include_min=True)
prof = density_profile(cantor, x, s, radii)
for r, d in zip(prof.radii[::4], prof.thetas[::4]):
    print(f"r = {r:.3e}   theta = {d:.4f}")
print("upper density estimate:", upper_density_estimate(cantor, x, s, radii).value)

# %%
sample = cantor.positions[:: cantor.n_atoms // 32]
print("growth constant M:", growth_constant(cantor, s, sample, r0=1.0))

# %% [markdown]
# A uniform segment has density 2 at interior points for s = 1.

# %%
seg = build_rectifiable_measure("segment", {"start": [0.0], "end": [1.0]}, 2.0**-14)
radii = dyadic_radii(2.0**-3, 2.0**-10, per_octave=2, include_min=True)
print(density_profile(seg, [0.5], 1.0, radii).thetas)
